"""Dense complex linear algebra for single-photon mode states.

Matrices and states are plain :class:`numpy.ndarray` objects (complex128).
The ``check_*`` helpers validate and coerce inputs in the same spirit as
``sklearn.utils.check_array``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DegenerateStateError, DimensionError

UNITARY_TOL = 1e-10
NORM_TOL = 1e-12

#: Balanced splitter transfer matrix used everywhere in the package.
BALANCED_SPLITTER = np.array([[1, 1j], [1j, 1]], dtype=complex) / np.sqrt(2)


def check_matrix(m, *, square=False, name="matrix"):
    """Return ``m`` as a finite 2-D complex array."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def check_state(s, *, name="state"):
    """Return ``s`` as a finite 1-D complex array."""
    arr = np.asarray(s, dtype=complex)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def basis_state(n, k):
    """Single photon in mode ``k`` of ``n``."""
    if not 0 <= k < n:
        raise IndexError(f"mode {k} out of range for {n} modes")
    s = np.zeros(n, dtype=complex)
    s[k] = 1.0
    return s


def is_unitary(m, tol=UNITARY_TOL):
    """True iff ``max|m^H m - I| <= tol``."""
    m = check_matrix(m, square=True)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    err = m.conj().T @ m - np.eye(m.shape[0])
    return bool(np.max(np.abs(err), initial=0.0) <= tol)


def apply(m, s):
    """Matrix-vector product ``m @ s`` with shape checking."""
    m = check_matrix(m)
    s = check_state(s)
    if m.shape[1] != s.shape[0]:
        raise DimensionError(
            f"operator has {m.shape[1]} columns but state has {s.shape[0]} modes"
        )
    return m @ s


def embed(u, mode_count):
    """Place ``u`` in the top-left block of a ``mode_count`` identity."""
    u = check_matrix(u, square=True)
    n = u.shape[0]
    if n > mode_count:
        raise DimensionError(f"cannot embed {n} modes into {mode_count}")
    out = np.eye(mode_count, dtype=complex)
    out[:n, :n] = u
    return out


@dataclass(frozen=True)
class Distribution:
    """Normalised probability vector over output channels.

    Attributes
    ----------
    probabilities : ndarray
        Non-negative, sums to one.
    survival : float
        Probability mass (or click fraction) before renormalisation.
    raw_counts : ndarray or None
        Integer counts the distribution was estimated from, if any.
    """

    probabilities: np.ndarray
    survival: float = 1.0
    raw_counts: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1:
            raise DimensionError("probabilities must be 1-D")
        if np.any(p < -NORM_TOL) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probabilities", np.clip(p, 0.0, None))

    def __len__(self):
        return len(self.probabilities)

    @classmethod
    def from_weights(cls, weights, raw_counts=None):
        """Normalise non-negative ``weights``; survival is their total."""
        w = np.asarray(weights, dtype=float)
        total = float(w.sum())
        if total <= 0.0:
            raise DegenerateStateError("cannot normalise an all-zero weight vector")
        return cls(w / total, survival=total, raw_counts=raw_counts)


def output_distribution(s):
    """Detection statistics ``|s_i|^2`` renormalised, keeping the lost mass."""
    s = check_state(s)
    weights = np.abs(s) ** 2
    if weights.sum() <= 0.0:
        raise DegenerateStateError("all-zero state has no output distribution")
    return Distribution.from_weights(weights)


def haar_unitary(n, rng=None):
    """Haar-random ``n x n`` unitary (QR of a complex Ginibre matrix)."""
    rng = np.random.default_rng(rng)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
