"""Saturation-cutoff detection for per-layer entropy curves.

The cutoff layer is the proxy for the network's correlation length: scanning
down from the final layer, the first layer whose entropy differs from the
final value by more than a threshold eta marks where the curve stopped
changing. A cutoff equal to the full depth means information survived the
whole network (trainable); a small cutoff means it died early.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ETA_RELATIVE = 0.005
DEFAULT_ETA_DIFFERENTIAL = 0.5


@dataclass(frozen=True)
class CutoffResult:
    cutoff: int
    threshold: float
    saturated: bool  # true iff cutoff < depth
    curve_kind: str


def _curve_values(curve) -> np.ndarray:
    values = np.asarray(getattr(curve, "values", curve), dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("entropy curve must be a nonempty 1-d sequence")
    return values


def detect_cutoff(curve, eta: float) -> CutoffResult:
    """Scan layers L-1 down to 1; stop at the first |v(L) - v(l)| > eta.

    The cutoff is that layer + 1, so an immediately-exceeding (still rising)
    curve yields cutoff = L. If no layer exceeds eta the curve was flat all
    along: the information died at the first layer and the cutoff is 1.
    Exceedance is strict; ties do not trigger.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    values = _curve_values(curve)
    depth = values.size
    ref = values[-1]
    cutoff = 1
    for ell in range(depth - 1, 0, -1):
        if abs(ref - values[ell - 1]) > eta:
            cutoff = ell + 1
            break
    kind = getattr(curve, "kind", "relative")
    return CutoffResult(
        cutoff=cutoff, threshold=eta, saturated=cutoff < depth, curve_kind=kind
    )


def detect_cutoff_bruteforce(curve, eta: float) -> CutoffResult:
    """Naive restatement without early exit; test oracle only."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    values = _curve_values(curve)
    depth = values.size
    exceeding = [
        ell
        for ell in range(1, depth)
        if abs(values[-1] - values[ell - 1]) > eta
    ]
    cutoff = max(exceeding) + 1 if exceeding else 1
    kind = getattr(curve, "kind", "relative")
    return CutoffResult(
        cutoff=cutoff, threshold=eta, saturated=cutoff < depth, curve_kind=kind
    )
