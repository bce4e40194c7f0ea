"""Infinite-width theory baseline for the tanh edge of chaos.

Iterates the central-limit-theorem variance map

    q  <-  sigma_w_sq * E[tanh(sqrt(q) Z)^2] + sigma_b_sq,   Z ~ N(0, 1)

to its fixed point q*, then evaluates the correlation multiplier

    chi = sigma_w_sq * E[tanh'(sqrt(q*) Z)^2]

whose unit crossing marks the critical line. The correlation depth is the
decay scale 1/|ln chi|, reported as infinity at criticality. Expectations
use Gauss-Hermite quadrature (64 nodes by default).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

QUADRATURE_ORDER = 256
FIXED_POINT_TOL = 1e-12
MAX_ITERATIONS = 10_000
CHI_CRITICAL_TOL = 1e-6


class MeanFieldConvergenceError(RuntimeError):
    """The variance-map fixed-point iteration failed to converge."""


@dataclass(frozen=True)
class MeanFieldPoint:
    sigma_w_sq: float
    sigma_b_sq: float
    q_star: float
    chi: float
    xi_c: float  # correlation depth in layers; math.inf at criticality


@lru_cache(maxsize=None)
def _gh_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes/weights rescaled for E[f(Z)], Z ~ N(0, 1).

    Golub-Welsch: nodes are eigenvalues of the Hermite Jacobi matrix,
    weights follow from the first eigenvector components. Stable at high
    orders, unlike the recurrence-based weight formula.
    """
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    off_diag = np.sqrt(np.arange(1, order) / 2.0)
    jacobi = np.diag(off_diag, -1) + np.diag(off_diag, 1)
    nodes, vectors = np.linalg.eigh(jacobi)
    weights = vectors[0] ** 2  # mu0 = sqrt(pi) cancels the 1/sqrt(pi) below
    return nodes * np.sqrt(2.0), weights


def gauss_expectation(f, variance: float, order: int = QUADRATURE_ORDER) -> float:
    """E[f(X)] for X ~ N(0, variance) via Gauss-Hermite quadrature."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    z, w = _gh_nodes(order)
    return float(w @ f(np.sqrt(variance) * z))


def variance_map(
    q: float, sigma_w_sq: float, sigma_b_sq: float, order: int = QUADRATURE_ORDER
) -> float:
    return sigma_w_sq * gauss_expectation(lambda u: np.tanh(u) ** 2, q, order) + (
        sigma_b_sq
    )


def variance_fixed_point(
    sigma_w_sq: float,
    sigma_b_sq: float,
    order: int = QUADRATURE_ORDER,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = MAX_ITERATIONS,
) -> float:
    """Iterate the variance map to its stable fixed point q*."""
    if sigma_w_sq < 0 or sigma_b_sq < 0:
        raise ValueError("variances must be nonnegative")
    q = sigma_w_sq + sigma_b_sq  # first-layer scale; any positive start works
    for _ in range(max_iter):
        q_next = variance_map(q, sigma_w_sq, sigma_b_sq, order)
        if abs(q_next - q) < tol:
            return q_next
        q = q_next
    raise MeanFieldConvergenceError(
        f"variance map did not converge at ({sigma_w_sq}, {sigma_b_sq})"
    )


def chi_multiplier(
    sigma_w_sq: float, q_star: float, order: int = QUADRATURE_ORDER
) -> float:
    """Correlation multiplier chi = sigma_w_sq * E[(1 - tanh^2)^2] at q*."""
    return sigma_w_sq * gauss_expectation(
        lambda u: (1.0 - np.tanh(u) ** 2) ** 2, q_star, order
    )


def correlation_depth(
    sigma_w_sq: float, sigma_b_sq: float, order: int = QUADRATURE_ORDER
) -> float:
    """Correlation depth in layers: 1/|ln chi|, infinite at chi = 1.

    chi < 1 (ordered) and chi > 1 (chaotic) both decay toward their
    respective fixed points at rate |ln chi| per layer; the positive branch
    is reported on both sides.
    """
    q_star = variance_fixed_point(sigma_w_sq, sigma_b_sq, order)
    chi = chi_multiplier(sigma_w_sq, q_star, order)
    if abs(chi - 1.0) < CHI_CRITICAL_TOL:
        return math.inf
    if chi <= 0.0:
        return 0.0  # sigma_w_sq = 0: signal dies immediately
    return 1.0 / abs(math.log(chi))


def meanfield_point(
    sigma_w_sq: float, sigma_b_sq: float, order: int = QUADRATURE_ORDER
) -> MeanFieldPoint:
    q_star = variance_fixed_point(sigma_w_sq, sigma_b_sq, order)
    chi = chi_multiplier(sigma_w_sq, q_star, order)
    if abs(chi - 1.0) < CHI_CRITICAL_TOL:
        xi = math.inf
    elif chi <= 0.0:
        xi = 0.0
    else:
        xi = 1.0 / abs(math.log(chi))
    return MeanFieldPoint(sigma_w_sq, sigma_b_sq, q_star, chi, xi)


def critical_sigma_w(
    sigma_b_sq: float,
    lo: float = 0.1,
    hi: float = 8.0,
    tol: float = 1e-6,
    order: int = QUADRATURE_ORDER,
) -> float:
    """Bisect chi(q*(sigma_w_sq)) = 1 on [lo, hi]; chi is increasing in
    sigma_w_sq at fixed sigma_b_sq."""

    def excess(sw2: float) -> float:
        return chi_multiplier(sw2, variance_fixed_point(sw2, sigma_b_sq, order), order)

    f_lo, f_hi = excess(lo) - 1.0, excess(hi) - 1.0
    if f_lo > 0 or f_hi < 0:
        raise ValueError(f"chi - 1 does not change sign on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) - 1.0 <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def export_meanfield_csv(
    points: list[MeanFieldPoint], path, scale: float = 1.0
) -> None:
    """Write xi_c per phase point; same schema as the sweep CSV with the
    entropy column replaced by xi_c. Inapplicable columns stay empty."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "sigma_w_sq",
                "sigma_b_sq",
                "seed",
                "layer",
                "xi_c",
                "cutoff",
                "accuracy",
                "wall_time_s",
            ]
        )
        for pt in points:
            xi = pt.xi_c * scale
            writer.writerow(
                [
                    repr(pt.sigma_w_sq),
                    repr(pt.sigma_b_sq),
                    "",
                    "",
                    "inf" if math.isinf(xi) else repr(xi),
                    "",
                    "",
                    "",
                ]
            )
