"""Hardware-in-the-loop heater tuning by one-at-a-time phase steps.

Each engaged heater is nudged up and down in turn; a step is kept only if
the measured total variation distance to the target distribution drops by
more than a tolerance set above the shot-noise floor.  Accepted steps are
repeated on the same heater, with the step halved whenever neither
direction helps.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List

import numpy as np
from sklearn.base import BaseEstimator

from ..core import Distribution
from ..detection import DEFAULT_SHOTS, measure
from ..hardware import factory_voltages, mesh_transfer
from ..mesh import engaged_heaters
from .metrics import tvd, tvd_sigma

TWO_PI = 2.0 * np.pi


class HardwareEvaluator:
    """Program the device through its vendor controller and measure mode-0 output.

    Every call draws fresh shot noise from an internal seeded stream.
    """

    def __init__(self, hw, shots=DEFAULT_SHOTS, seed=None, input_mode=0):
        self.hw = hw
        self.shots = shots
        self.input_mode = input_mode
        self._rng = np.random.default_rng(seed)
        self.calls = 0

    def __call__(self, program):
        self.calls += 1
        v = factory_voltages(self.hw, program)
        t = mesh_transfer(v, self.hw, input_modes=[self.input_mode])
        seed = int(self._rng.integers(2**63 - 1))
        return measure(t, self.hw, shots=self.shots, seed=seed, input_mode=0)

    def noise_floor(self, dist):
        """Standard deviation of a TVD estimate caused by shot noise alone.

        This is the scale on which two measured TVDs of the same program
        differ, so it sets how large a real improvement must be.
        """
        if self.shots is None:
            return 0.0
        clicks = dist.survival * self.shots if dist.raw_counts is None else dist.raw_counts.sum()
        return tvd_sigma(dist, clicks)


@dataclass(frozen=True)
class TraceStep:
    heater: int
    old_phase: float
    new_phase: float
    tvd_before: float
    tvd_after: float


@dataclass
class OptimisationTrace:
    """Accepted steps in the order they were taken."""

    steps: List[TraceStep] = field(default_factory=list)
    evaluations: int = 0

    def __len__(self):
        return len(self.steps)

    def tvd_sequence(self):
        return np.array([s.tvd_after for s in self.steps])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["heater", "old_phase", "new_phase", "tvd_before", "tvd_after"])
            for s in self.steps:
                w.writerow([s.heater, f"{s.old_phase:.12g}", f"{s.new_phase:.12g}",
                            f"{s.tvd_before:.12g}", f"{s.tvd_after:.12g}"])


def _as_target(target):
    return target.probabilities if isinstance(target, Distribution) else np.asarray(target, float)


class SequentialOptimiser(BaseEstimator):
    """Coordinate-descent tuning of heater phases against measured TVD.

    Parameters
    ----------
    step : float
        Initial phase increment in radians.
    shrink : float
        Step multiplier after a heater stops improving in both directions.
    n_shrinks : int
        How many times the step may shrink per heater before moving on.
    tol : float or None
        Minimum TVD improvement for a step to count.  ``None`` uses twice the
        evaluator's shot-noise floor at the initial measurement.
    passes : int
        Sweeps over all engaged heaters.
    order : {"program", "shuffled"}
        Heater visiting order.
    random_state : int or None
        Seed for the shuffled order.
    """

    def __init__(self, step=0.1, shrink=0.5, n_shrinks=3, tol=None, passes=1,
                 order="program", random_state=None):
        self.step = step
        self.shrink = shrink
        self.n_shrinks = n_shrinks
        self.tol = tol
        self.passes = passes
        self.order = order
        self.random_state = random_state

    def fit(self, program, evaluator, target, heaters=None):
        """Tune ``program`` on ``evaluator`` towards the ``target`` distribution.

        Parameters
        ----------
        program : MeshProgram
        evaluator : callable
            Maps a program to a measured :class:`Distribution`.  An optional
            ``noise_floor(dist)`` method sets the default tolerance.
        target : Distribution or array
        heaters : sequence of int, optional
            Heater ids to tune; defaults to every heater of the program.
        """
        if self.step <= 0:
            raise ValueError("step must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.order not in ("program", "shuffled"):
            raise ValueError("order must be 'program' or 'shuffled'")
        p = _as_target(target)
        heaters = np.arange(program.n_heaters) if heaters is None else np.asarray(heaters, int)
        if self.order == "shuffled":
            heaters = np.random.default_rng(self.random_state).permutation(heaters)

        phases = program.heater_phases()
        trace = OptimisationTrace()

        def evaluate(ph):
            trace.evaluations += 1
            return tvd(p, evaluator(program.with_heater_phases(ph)))

        first = evaluator(program)
        trace.evaluations += 1
        current = tvd(p, first)
        self.tvd_initial_ = current
        tol = self.tol
        if tol is None:
            floor = getattr(evaluator, "noise_floor", None)
            tol = 2.0 * floor(first) if floor is not None else 0.0
        self.tol_ = tol
        max_moves = int(np.ceil(TWO_PI / self.step))

        for _ in range(self.passes):
            for h in heaters:
                step = self.step
                for _level in range(self.n_shrinks + 1):
                    moved = False
                    for direction in (1.0, -1.0):
                        moves = 0
                        while moves < max_moves:
                            trial = phases.copy()
                            trial[h] = np.mod(phases[h] + direction * step, TWO_PI)
                            value = evaluate(trial)
                            if value < current - tol:
                                trace.steps.append(
                                    TraceStep(int(h), float(phases[h]), float(trial[h]),
                                              float(current), float(value)))
                                phases, current = trial, value
                                moves += 1
                                moved = True
                            else:
                                break
                        if moves:
                            break
                    if not moved:
                        step *= self.shrink

        self.program_ = program.with_heater_phases(phases)
        self.trace_ = trace
        self.tvd_final_ = current
        return self

    def transform(self, program=None):
        """The tuned program (``program`` is ignored; kept for API symmetry)."""
        return self.program_


def sequential_optimise(evaluator, program, target, step=0.1, tol=None, heaters=None, **kw):
    """Functional wrapper: returns ``(tuned_program, trace)``."""
    opt = SequentialOptimiser(step=step, tol=tol, **kw).fit(program, evaluator, target, heaters)
    return opt.program_, opt.trace_


def heaters_for(program, n):
    """Engaged heaters when ``program`` already is the ``n``-mode sub-mesh."""
    return engaged_heaters(program, min(n, program.mode_count))
