"""Photon counting with channel efficiencies, and efficiency-corrected estimates.

Only shot noise is modelled: each of ``shots`` photons either clicks one
output detector or is lost (absorbed, scattered or missed by a detector).
Lost photons land in a no-click bin that post-selected statistics ignore.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Distribution, check_matrix
from .exceptions import DegenerateStateError, DimensionError

DEFAULT_SHOTS = 100_000


@dataclass(frozen=True)
class Counts:
    """Clicks per output channel plus the photons that produced no click."""

    clicks: np.ndarray
    no_click: int

    @property
    def shots(self):
        return int(self.clicks.sum()) + int(self.no_click)


@dataclass(frozen=True)
class ChannelCorrections:
    """Per-output factors ``1 / eta`` (each ``>= 1``) undoing channel efficiency."""

    factors: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.factors, dtype=float)
        if f.ndim != 1 or np.any(f < 1.0 - 1e-12):
            raise ValueError("correction factors must form a 1-D vector of values >= 1")
        object.__setattr__(self, "factors", f)

    @classmethod
    def from_efficiencies(cls, efficiencies):
        return cls(1.0 / np.asarray(efficiencies, dtype=float))

    @classmethod
    def from_hardware(cls, hw, n=None):
        """Corrections for the first ``n`` outputs of ``hw``.

        The channel efficiency includes the on-chip output attenuation, as
        it is measured by routing reference light to each output in turn.
        """
        n = hw.mode_count if n is None else n
        eta = hw.detector_efficiencies[:n] * hw.output_transmission[:n] ** 2
        return cls.from_efficiencies(eta)

    @classmethod
    def uniform(cls, n):
        return cls(np.ones(n))


def click_probabilities(transfer, input_mode, efficiencies):
    """Per-output click probability ``|T[:, input]|^2 * eta`` and the no-click remainder."""
    t = check_matrix(transfer)
    if not 0 <= input_mode < t.shape[1]:
        raise IndexError(f"input mode {input_mode} out of range for {t.shape[1]} inputs")
    eta = np.asarray(efficiencies, dtype=float)
    if eta.shape != (t.shape[0],):
        raise DimensionError("need one efficiency per output")
    p = np.abs(t[:, input_mode]) ** 2 * eta
    return p, max(0.0, 1.0 - p.sum())


def detect(transfer, input_mode, shots, hw=None, seed=None, efficiencies=None):
    """Sample click counts for ``shots`` single photons sent into ``input_mode``.

    Efficiencies come from ``hw.detector_efficiencies`` (restricted to the
    transfer matrix's outputs) unless given explicitly; with neither, the
    detectors are perfect.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    t = check_matrix(transfer)
    if efficiencies is None:
        efficiencies = (np.ones(t.shape[0]) if hw is None
                        else hw.detector_efficiencies[: t.shape[0]])
    p, lost = click_probabilities(t, input_mode, efficiencies)
    rng = np.random.default_rng(seed)
    pvals = np.append(p, lost)
    draws = rng.multinomial(int(shots), pvals / pvals.sum())
    return Counts(clicks=draws[:-1], no_click=int(draws[-1]))


def correct_and_normalize(counts, corrections):
    """Efficiency-corrected, normalised distribution ``counts_i * factor_i``."""
    clicks = counts.clicks if isinstance(counts, Counts) else np.asarray(counts)
    factors = corrections.factors if isinstance(corrections, ChannelCorrections) else corrections
    clicks = np.asarray(clicks, dtype=float)
    factors = np.asarray(factors, dtype=float)
    if clicks.shape != factors.shape:
        raise DimensionError("counts and corrections differ in length")
    if clicks.sum() <= 0:
        raise DegenerateStateError("no clicks recorded")
    shots = counts.shots if isinstance(counts, Counts) else clicks.sum()
    dist = Distribution.from_weights(clicks * factors, raw_counts=clicks.astype(int))
    return Distribution(dist.probabilities, survival=float(clicks.sum() / shots),
                        raw_counts=dist.raw_counts)


def success_probability_estimate(dist, marked):
    """Probability mass on the marked channels."""
    probs = dist.probabilities if isinstance(dist, Distribution) else np.asarray(dist)
    marked = np.atleast_1d(np.asarray(marked, dtype=int))
    if marked.size and (marked.min() < 0 or marked.max() >= len(probs)):
        raise IndexError("marked channel out of range")
    return float(probs[marked].sum())


def binomial_sigma(p, shots):
    """Standard error of a frequency estimate of ``p`` from ``shots`` trials."""
    return float(np.sqrt(p * (1.0 - p) / shots))


def measure(transfer, hw, shots=DEFAULT_SHOTS, seed=None, input_mode=0, n_outputs=None):
    """Detect and efficiency-correct in one step; ``shots=None`` gives the exact limit."""
    t = check_matrix(transfer)
    n = t.shape[0] if n_outputs is None else n_outputs
    t = t[:n]
    corrections = ChannelCorrections.from_hardware(hw, n)
    if shots is None:
        eta = hw.detector_efficiencies[:n]
        p, _ = click_probabilities(t, input_mode, eta)
        return Distribution.from_weights(p * corrections.factors)
    counts = detect(t, input_mode, shots, hw=hw, seed=seed)
    return correct_and_normalize(counts, corrections)
