"""Grover search operators and iteration schedules in unary mode encoding.

A database of ``N`` elements lives on ``N`` spatial modes; a single photon
injected into mode 0 is spread uniformly by :func:`uniform_prep`, then
alternately phase-marked by the :func:`oracle` and reflected by the
:func:`diffusion` operator.

Two schedules are supported:

* ``original`` -- ``kappa`` iterations with every diffusion phase equal to pi.
* ``deterministic`` -- ``kappa`` or ``kappa + 1`` iterations whose diffusion
  phases alternate between two values chosen so the final state lies exactly
  on the marked superposition.  The oracle keeps its fixed pi phase.

The dynamics never leave the plane spanned by the uniform superpositions of
marked (``|S>``) and unmarked (``|N>``) elements, so the phase search runs on
2x2 matrices and is checked afterwards with full ``N``-mode products.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import check_state, embed
from .exceptions import (
    ConsistencyError,
    ConstraintViolationError,
    DimensionError,
    SolverError,
)

VARIANTS = ("original", "deterministic")
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GroverSpec:
    """Search problem: database size, marked elements and algorithm variant."""

    database_size: int
    marked: Tuple[int, ...]
    variant: str = "original"

    def __post_init__(self):
        marked = tuple(sorted({int(m) for m in np.atleast_1d(self.marked)}))
        object.__setattr__(self, "marked", marked)
        n = int(self.database_size)
        object.__setattr__(self, "database_size", n)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not marked:
            raise ConstraintViolationError("at least one element must be marked")
        if len(marked) >= n:
            raise ConstraintViolationError("need 1 <= M < N marked elements")
        if marked[0] < 0 or marked[-1] >= n:
            raise ConstraintViolationError(f"marked indices must lie in [0, {n})")
        if self.variant == "deterministic" and n < 4 * len(marked):
            raise ConstraintViolationError(
                f"deterministic search needs N/M >= 4, got {n}/{len(marked)}"
            )

    @property
    def n_marked(self):
        return len(self.marked)

    @property
    def theta(self):
        """Half-angle between the initial state and the unmarked axis."""
        return float(np.arcsin(np.sqrt(self.n_marked / self.database_size)))

    def with_variant(self, variant):
        return GroverSpec(self.database_size, self.marked, variant)


@dataclass(frozen=True)
class Schedule:
    """Ordered diffusion phases (one per iteration) and the fixed oracle phase."""

    diffusion_phases: Tuple[float, ...]
    oracle_phase: float = np.pi
    residual: float = 0.0

    @property
    def iteration_count(self):
        return len(self.diffusion_phases)

    @property
    def phase_a(self):
        return self.diffusion_phases[0] if self.diffusion_phases else np.pi

    @property
    def phase_b(self):
        return self.diffusion_phases[1] if len(self.diffusion_phases) > 1 else self.phase_a


def uniform_prep(n, mode_count=None):
    """Unitary mapping mode 0 to the uniform superposition over the first ``n`` modes.

    The discrete Fourier matrix is used; its first column is ``1/sqrt(n)``
    everywhere.  With ``mode_count`` the matrix is embedded as identity on
    the remaining modes.
    """
    if n < 2:
        raise ValueError("uniform preparation needs n >= 2")
    if mode_count is not None and n > mode_count:
        raise DimensionError(f"{n} database modes exceed the {mode_count}-mode processor")
    jk = np.outer(np.arange(n), np.arange(n))
    u = np.exp(2j * np.pi * jk / n) / np.sqrt(n)
    return u if mode_count is None else embed(u, mode_count)


def oracle(n, marked, phase=np.pi):
    """Diagonal phase flip: ``exp(i*phase)`` on marked modes, 1 elsewhere."""
    marked = np.atleast_1d(np.asarray(marked, dtype=int))
    if marked.size == 0:
        raise ConstraintViolationError("oracle needs a non-empty marked set")
    if marked.min() < 0 or marked.max() >= n:
        raise IndexError(f"marked indices must lie in [0, {n})")
    d = np.ones(n, dtype=complex)
    d[marked] = np.exp(1j * phase)
    return np.diag(d)


def diffusion(n, phase=np.pi):
    """Generalised reflection ``I - (1 - exp(i*phase)) |psi0><psi0|`` about the uniform state."""
    if n < 2:
        raise ValueError("diffusion needs n >= 2")
    psi0 = np.full(n, 1.0 / np.sqrt(n), dtype=complex)
    return np.eye(n, dtype=complex) - (1.0 - np.exp(1j * phase)) * np.outer(psi0, psi0.conj())


def optimal_iterations(spec):
    """``floor(pi / (4 theta))`` iterations of the original algorithm."""
    return int(np.floor(np.pi / (4.0 * spec.theta) + 1e-12))


def original_success_probability(spec):
    """Closed-form success ``sin^2((2 kappa + 1) theta)`` of the original schedule."""
    k = optimal_iterations(spec)
    return float(np.sin((2 * k + 1) * spec.theta) ** 2)


def original_schedule(spec):
    return Schedule(diffusion_phases=(np.pi,) * optimal_iterations(spec))


# -- deterministic phase solver -------------------------------------------------


def _plane_amplitudes(theta, k, phase_a, phase_b, oracle_phase=np.pi):
    """Final ``(c_S, c_N)`` after ``k`` iterations in the Grover plane.

    Broadcasts over array-valued phases.  Also returns the derivatives of
    ``c_N`` with respect to both phases.
    """
    s, c = np.sin(theta), np.cos(theta)
    pa = np.asarray(phase_a, dtype=float)
    pb = np.asarray(phase_b, dtype=float)
    shape = np.broadcast(pa, pb).shape
    v = np.empty((2,) + shape, dtype=complex)
    v[0], v[1] = s, c
    dv = np.zeros((2, 2) + shape, dtype=complex)  # [d/dphase_a, d/dphase_b]
    flip = np.exp(1j * oracle_phase)
    for step in range(k):
        ph, which = (pa, 0) if step % 2 == 0 else (pb, 1)
        v[0] *= flip
        dv[:, 0] *= flip
        overlap = s * v[0] + c * v[1]
        d_overlap = s * dv[:, 0] + c * dv[:, 1]
        coeff = 1.0 - np.exp(1j * ph)
        dv[:, 0] -= coeff * s * d_overlap
        dv[:, 1] -= coeff * c * d_overlap
        dcoeff = -1j * np.exp(1j * ph)
        dv[which, 0] -= dcoeff * s * overlap
        dv[which, 1] -= dcoeff * c * overlap
        v[0] -= coeff * s * overlap
        v[1] -= coeff * c * overlap
    return v[0], v[1], dv[0, 1], dv[1, 1]


def _wrap(x):
    return np.mod(x, TWO_PI)


def _distance_from_pi(pa, pb):
    return abs(_wrap(pa) - np.pi) + abs(_wrap(pb) - np.pi)


def _newton_refine(theta, k, pa, pb, max_iter=60, tol=1e-15):
    """Damped Gauss-Newton on the two real equations ``c_N(pa, pb) = 0``."""
    x = np.array([pa, pb], dtype=float)
    _, cn, da, db = _plane_amplitudes(theta, k, x[0], x[1])
    best = abs(cn)
    for _ in range(max_iter):
        if best < tol:
            break
        jac = np.array([[da.real, db.real], [da.imag, db.imag]])
        rhs = -np.array([cn.real, cn.imag])
        step = np.linalg.lstsq(jac, rhs, rcond=None)[0]
        lam = 1.0
        while lam > 1e-6:
            trial = x + lam * step
            _, cn_t, da_t, db_t = _plane_amplitudes(theta, k, trial[0], trial[1])
            if abs(cn_t) < best:
                break
            lam *= 0.5
        else:
            break
        x, cn, da, db, best = trial, cn_t, da_t, db_t, abs(cn_t)
    return _wrap(x[0]), _wrap(x[1]), float(best) ** 2


def _grid_candidates(theta, k, resolution):
    grid = np.arange(resolution) * (TWO_PI / resolution)
    _, cn, _, _ = _plane_amplitudes(theta, k, grid[:, None], grid[None, :])
    r = np.abs(cn) ** 2
    if k == 1:
        r = r[:, :1]
    # periodic local minima of the residual surface
    is_min = np.ones_like(r, dtype=bool)
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            if da or db:
                is_min &= r <= np.roll(np.roll(r, da, axis=0), db, axis=1)
    ia, ib = np.nonzero(is_min & (r < 0.05))
    order = np.argsort(r[ia, ib], kind="stable")
    return [(grid[ia[j]], grid[ib[j]]) for j in order]


def deterministic_phase_solve(spec, resolution=360, tol=1e-12):
    """Find alternating diffusion phases that reach the marked state with certainty.

    Scans a ``resolution x resolution`` grid of phase pairs for ``kappa``
    iterations, then ``kappa + 1``, refines every local minimum of the
    residual ``1 - success`` by damped Newton steps on the complex amplitude
    of the unmarked component, and keeps the converged pair closest to
    ``(pi, pi)``.

    Raises
    ------
    ConstraintViolationError
        If ``N/M < 4``.
    SolverError
        If no candidate converges below ``tol``.
    """
    if spec.database_size < 4 * spec.n_marked:
        raise ConstraintViolationError(
            f"deterministic search needs N/M >= 4, got {spec.database_size}/{spec.n_marked}"
        )
    theta = spec.theta
    kappa = optimal_iterations(spec)
    best_residual = np.inf
    for k in (kappa, kappa + 1):
        if k == 0:
            continue
        solutions = []
        for pa0, pb0 in _grid_candidates(theta, k, resolution):
            pa, pb, res = _newton_refine(theta, k, pa0, pb0)
            best_residual = min(best_residual, res)
            if res < tol:
                if k == 1:
                    pb = pa
                solutions.append((_distance_from_pi(pa, pb), pa, pb, res))
        if solutions:
            solutions.sort(key=lambda t: (round(t[0], 9), t[1], t[2]))
            _, pa, pb, res = solutions[0]
            phases = tuple(float(pa if j % 2 == 0 else pb) for j in range(k))
            return Schedule(diffusion_phases=phases, residual=float(res))
    raise SolverError(
        f"no deterministic phases found for N={spec.database_size}, M={spec.n_marked}",
        residual=float(best_residual),
    )


def schedule_for(spec):
    """Schedule matching ``spec.variant``."""
    if spec.variant == "original":
        return original_schedule(spec)
    return deterministic_phase_solve(spec)


# -- full circuit ---------------------------------------------------------------


def _iteration_operators(spec, schedule):
    n = spec.database_size
    o = oracle(n, spec.marked, schedule.oracle_phase)
    return [diffusion(n, ph) @ o for ph in schedule.diffusion_phases]


def grover_unitary(spec, schedule=None, mode_count=None):
    """Full circuit unitary ``[D(phi_k) O] ... [D(phi_1) O] U_prep``.

    With ``mode_count`` the ``N x N`` circuit is embedded in the top-left
    block of a larger identity.
    """
    schedule = schedule_for(spec) if schedule is None else schedule
    u = uniform_prep(spec.database_size)
    for step in _iteration_operators(spec, schedule):
        u = step @ u
    return u if mode_count is None else embed(u, mode_count)


def success_probability(spec, schedule=None, input_mode=0):
    """Marked-subspace probability of the assembled circuit (full matrix product)."""
    u = grover_unitary(spec, schedule)
    return float(np.sum(np.abs(u[list(spec.marked), input_mode]) ** 2))


def ideal_distribution(spec, schedule=None, input_mode=0):
    """Ideal output probabilities over the ``N`` database modes."""
    u = grover_unitary(spec, schedule)
    return np.abs(u[:, input_mode]) ** 2


# -- Bloch-plane trajectories -----------------------------------------------------


@dataclass(frozen=True)
class BlochTrajectory:
    """State after preparation and after each iteration, projected on the Grover plane.

    ``polar`` is the angle from ``|N>`` towards ``|S>`` (``pi/2`` means the
    marked superposition) and ``azimuth`` the relative phase of the ``|S>``
    amplitude.  Points use whichever of the two equivalent ``(polar, azimuth)``
    representations keeps the azimuth continuous, so rotations past ``|S>``
    keep increasing the polar angle.
    """

    polar: np.ndarray
    azimuth: np.ndarray
    leakage: np.ndarray

    def __len__(self):
        return len(self.polar)

    def cartesian(self):
        """Bloch-sphere ``(x, y, z)`` with ``|N>`` at the north pole."""
        big = 2.0 * self.polar
        return np.stack(
            [np.sin(big) * np.cos(self.azimuth), np.sin(big) * np.sin(self.azimuth), np.cos(big)],
            axis=1,
        )


def _circular_gap(a, b):
    return abs((a - b + np.pi) % TWO_PI - np.pi)


def bloch_trajectory(spec, schedule=None, leakage_tol=1e-10):
    """Project the full ``N``-mode state onto ``span{|S>, |N>}`` at every iteration."""
    schedule = schedule_for(spec) if schedule is None else schedule
    n = spec.database_size
    marked = np.zeros(n, dtype=bool)
    marked[list(spec.marked)] = True
    s_vec = marked / np.sqrt(marked.sum())
    n_vec = (~marked) / np.sqrt((~marked).sum())

    state = check_state(uniform_prep(n)[:, 0])
    states = [state]
    for step in _iteration_operators(spec, schedule):
        state = step @ state
        states.append(state)

    polar, azimuth, leakage = [], [], []
    for v in states:
        cs, cn = s_vec @ v, n_vec @ v
        leak = float(np.linalg.norm(v - cs * s_vec - cn * n_vec))
        if leak > leakage_tol:
            raise ConsistencyError(f"state left the Grover plane (leakage {leak:.2e})")
        pol = float(np.arctan2(abs(cs), abs(cn)))
        az = float(_wrap(np.angle(cs) - np.angle(cn))) if abs(cs) and abs(cn) else 0.0
        if azimuth:
            alt_pol, alt_az = np.pi - pol, float(_wrap(az + np.pi))
            if _circular_gap(alt_az, azimuth[-1]) < _circular_gap(az, azimuth[-1]):
                pol, az = alt_pol, alt_az
        polar.append(pol)
        azimuth.append(az)
        leakage.append(leak)
    return BlochTrajectory(np.array(polar), np.array(azimuth), np.array(leakage))
