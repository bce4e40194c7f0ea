"""Reconstruction-entropy estimators.

Two ways to measure how much input information survives to layer ell of a
frozen network, both computed on cascade reconstructions rather than raw
activations:

* relative entropy: KL divergence between each original input and its
  reconstruction (both normalized to pmfs), averaged over a batch;
* differential entropy: per-pixel Gaussian entropy 0.5*ln(2*pi*e*var) over
  an ensemble of reconstructions, averaged over pixels.

Once information is lost, reconstructions of different inputs collapse onto
one image: the KL curve saturates and the pixel variances (hence the
differential entropy) crash.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import reconstruct
from .data import Pmf, pmf_rows
from .nn import MLP, forward_record

# Sample variances of bitwise-identical reconstructions are exactly zero;
# the Gaussian entropy needs a finite floor. 1e-16 is the double-precision
# noise scale for order-one pixel values and puts the floored per-pixel
# entropy at 0.5*ln(2*pi*e*1e-16) = -17.04.
VAR_FLOOR = 1e-16


@dataclass
class EntropyCurve:
    """Per-layer entropy values for one phase-space point."""

    kind: str  # "relative" | "differential"
    values: np.ndarray  # length L, index ell-1 holds layer ell
    sample_size: int
    phase_point: tuple[float, float]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in ("relative", "differential"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if not np.isfinite(self.values).all():
            raise ValueError("entropy values must be finite")

    @property
    def depth(self) -> int:
        return self.values.size


def kl_divergence(p: Pmf, q: Pmf) -> float:
    """D(p||q) = sum p*ln(p/q), with 0*ln(0/q) = 0."""
    pm, qm = p.masses, q.masses
    if pm.shape != qm.shape:
        raise ValueError(f"length mismatch: {pm.shape} vs {qm.shape}")
    mask = pm > 0
    with np.errstate(divide="ignore"):
        terms = pm[mask] * (np.log(pm[mask]) - np.log(qm[mask]))
    return float(terms.sum())


def _kl_rows(p_rows: np.ndarray, q_rows: np.ndarray) -> np.ndarray:
    # rows are smoothed pmfs (strictly positive), so the logs are safe
    return np.sum(p_rows * (np.log(p_rows) - np.log(q_rows)), axis=1)


def relative_entropy_curve(
    dnn: MLP, decoders, inputs: np.ndarray
) -> EntropyCurve:
    """Mean KL divergence between inputs and their reconstructions, per layer.

    The original input is the reference pmf p; the reconstruction from layer
    ell is the target q. The per-image divergences are averaged over the
    whole batch before any cutoff detection.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    depth = dnn.depth
    if len(decoders) < depth:
        raise ValueError(f"need {depth} decoders, have {len(decoders)}")
    trace = forward_record(dnn, inputs)
    p_rows = pmf_rows(inputs)
    values = np.empty(depth)
    for ell in range(1, depth + 1):
        recon = reconstruct(decoders, ell, trace.activations[ell])
        values[ell - 1] = _kl_rows(p_rows, pmf_rows(recon)).mean()
    return EntropyCurve(
        kind="relative",
        values=values,
        sample_size=inputs.shape[0],
        phase_point=(dnn.config.sigma_w_sq, dnn.config.sigma_b_sq),
    )


def pixel_differential_entropy(
    recon_set: np.ndarray, var_floor: float = VAR_FLOOR
) -> float:
    """Mean over pixels of 0.5*ln(2*pi*e*var), var over the M reconstructions.

    Uses the unbiased (M-1) sample variance, floored at var_floor so that
    identical reconstructions give a large negative value instead of -inf.
    """
    recon_set = np.asarray(recon_set, dtype=np.float64)
    if recon_set.ndim != 2 or recon_set.shape[0] < 2:
        raise ValueError("need at least 2 reconstructions (M x N matrix)")
    var = recon_set.var(axis=0, ddof=1)
    var = np.maximum(var, var_floor)
    return float(np.mean(0.5 * np.log(2.0 * np.pi * np.e * var)))


def differential_entropy_curve(
    dnn: MLP,
    decoders,
    inputs: np.ndarray,
    var_floor: float = VAR_FLOOR,
) -> EntropyCurve:
    """Differential entropy of the reconstruction ensemble at every layer."""
    inputs = np.asarray(inputs, dtype=np.float64)
    depth = dnn.depth
    if len(decoders) < depth:
        raise ValueError(f"need {depth} decoders, have {len(decoders)}")
    trace = forward_record(dnn, inputs)
    values = np.empty(depth)
    for ell in range(1, depth + 1):
        recon = reconstruct(decoders, ell, trace.activations[ell])
        values[ell - 1] = pixel_differential_entropy(recon, var_floor)
    return EntropyCurve(
        kind="differential",
        values=values,
        sample_size=inputs.shape[0],
        phase_point=(dnn.config.sigma_w_sq, dnn.config.sigma_b_sq),
    )


@dataclass
class PixelMoments:
    """Distribution summary for one pixel across a reconstruction set."""

    pixel: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    zero_variance: bool
    hist_counts: np.ndarray
    bin_edges: np.ndarray


def gaussianity_report(
    recon_set: np.ndarray, pixel_indices, bins: int = 30
) -> list[PixelMoments]:
    """Per-pixel skewness/excess kurtosis plus histogram counts.

    Supports checking that pixel values across reconstructed images are
    approximately Gaussian (the assumption behind the per-pixel entropy
    formula). Pixels with zero variance are flagged; their shape moments
    are reported as 0.
    """
    recon_set = np.asarray(recon_set, dtype=np.float64)
    if recon_set.ndim != 2 or recon_set.shape[0] < 2:
        raise ValueError("need an (M, N) reconstruction matrix with M >= 2")
    out = []
    for pixel in pixel_indices:
        x = recon_set[:, pixel]
        mu = x.mean()
        centered = x - mu
        m2 = np.mean(centered**2)
        zero_var = m2 == 0.0
        if zero_var:
            skew = kurt = 0.0
        else:
            skew = float(np.mean(centered**3) / m2**1.5)
            kurt = float(np.mean(centered**4) / m2**2 - 3.0)
        counts, edges = np.histogram(x, bins=bins)
        out.append(
            PixelMoments(
                pixel=int(pixel),
                mean=float(mu),
                std=float(np.sqrt(m2)),
                skewness=skew,
                excess_kurtosis=kurt,
                zero_variance=bool(zero_var),
                hist_counts=counts,
                bin_edges=edges,
            )
        )
    return out
