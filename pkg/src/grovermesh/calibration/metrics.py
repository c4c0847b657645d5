"""Distances between output distributions."""
import numpy as np

from ..core import Distribution
from ..exceptions import DimensionError

_NORM_TOL = 1e-9


def _as_probs(p, name):
    arr = p.probabilities if isinstance(p, Distribution) else np.asarray(p, dtype=float)
    if arr.ndim < 1:
        raise DimensionError(f"{name} must be at least 1-D")
    if np.any(arr < -_NORM_TOL) or np.any(np.abs(arr.sum(axis=-1) - 1.0) > _NORM_TOL):
        raise ValueError(f"{name} is not a normalised distribution")
    return arr


def tvd(p, q):
    """Total variation distance ``0.5 * sum|p_i - q_i|``.

    Accepts :class:`Distribution` objects or arrays; arrays may be stacked,
    in which case the distance is taken along the last axis.
    """
    a = _as_probs(p, "p")
    b = _as_probs(q, "q")
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    out = 0.5 * np.abs(a - b).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sampling_floor(p, clicks):
    """Expected TVD between ``p`` and its empirical estimate from ``clicks`` events.

    Uses the normal approximation ``E|x - p| = sqrt(2 p (1 - p) / (pi n))``
    per bin.
    """
    arr = _as_probs(p, "p")
    if clicks <= 0:
        return 1.0
    return float(0.5 * np.sum(np.sqrt(2.0 * arr * (1.0 - arr) / (np.pi * clicks))))


def tvd_sigma(p, clicks):
    """Standard deviation of a TVD estimate from ``clicks`` events.

    Each bin's error contributes ``sign * (x_i - p_i) / 2`` to the estimate,
    so to first order the variance is a quarter of the multinomial variance
    of the total absolute deviation, ``0.25 * sum p_i (1 - p_i) / n``.
    """
    arr = _as_probs(p, "p")
    if clicks <= 0:
        return 1.0
    return float(0.5 * np.sqrt(np.sum(arr * (1.0 - arr)) / clicks))
