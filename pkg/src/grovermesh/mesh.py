"""Rectangular Mach-Zehnder meshes: Clements compilation and layered simulation.

Unit cell on modes ``(m, m+1)`` (matrix form, rightmost acts first)::

    T(theta, phi) = BS . P(theta) . BS . P(phi),    P(x) = diag(exp(i x), 1)

so light meets the external phase ``phi`` first, then a Mach-Zehnder
interferometer with internal phase ``theta``.  With balanced splitters
``theta = pi`` is the bar state and ``theta = 0`` the cross state, and
``T(pi, pi)`` is exactly the identity.  A program applies its cells in
rectangular order (layer ``l`` holds cells at ``m = l % 2, l % 2 + 2, ...``)
and finishes with a column of output phases.

Heater ``2k`` drives ``theta`` of cell ``k`` and heater ``2k + 1`` its ``phi``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_matrix, is_unitary
from .exceptions import DimensionError

TWO_PI = 2.0 * np.pi
BALANCED_ANGLE = np.pi / 4  # splitter angle alpha with reflectivity sin^2(alpha) = 0.5
_TINY = 1e-13  # entries below this count as already nulled


def canonical_slots(mode_count):
    """``(layer, top_mode)`` of every cell of a rectangular mesh, in program order."""
    return [
        (layer, m)
        for layer in range(mode_count)
        for m in range(layer % 2, mode_count - 1, 2)
    ]


def cell_matrix(theta, phi, alpha1=BALANCED_ANGLE, alpha2=BALANCED_ANGLE):
    """2x2 transfer matrix of one cell; ``alpha`` sets splitter reflectivity ``sin^2``."""
    def bs(a):
        return np.array([[np.cos(a), 1j * np.sin(a)], [1j * np.sin(a), np.cos(a)]])

    p_theta = np.diag([np.exp(1j * theta), 1.0])
    p_phi = np.diag([np.exp(1j * phi), 1.0])
    return bs(alpha2) @ p_theta @ bs(alpha1) @ p_phi


@dataclass(frozen=True)
class MeshProgram:
    """Phase settings for every cell of a rectangular mesh.

    Attributes
    ----------
    mode_count : int
    modes : ndarray of int
        Top mode of each cell, canonical (layer, mode) order.
    layers : ndarray of int
    thetas, phis : ndarray
        Internal and external phases in ``[0, 2 pi)``.
    output_phases : ndarray
        Final per-mode phase screen.
    """

    mode_count: int
    modes: np.ndarray
    layers: np.ndarray
    thetas: np.ndarray
    phis: np.ndarray
    output_phases: np.ndarray

    def __post_init__(self):
        n = self.mode_count
        slots = canonical_slots(n)
        modes = np.asarray(self.modes, dtype=int)
        layers = np.asarray(self.layers, dtype=int)
        if len(modes) != len(slots) or list(zip(layers, modes)) != slots:
            raise ValueError("cells must follow the rectangular layout in canonical order")
        for name in ("thetas", "phis"):
            arr = np.mod(np.asarray(getattr(self, name), dtype=float), TWO_PI)
            if arr.shape != (len(slots),):
                raise DimensionError(f"{name} must have one entry per cell")
            object.__setattr__(self, name, arr)
        out = np.mod(np.asarray(self.output_phases, dtype=float), TWO_PI)
        if out.shape != (n,):
            raise DimensionError("output_phases must have one entry per mode")
        object.__setattr__(self, "output_phases", out)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "layers", layers)

    @property
    def n_cells(self):
        return len(self.modes)

    @property
    def n_heaters(self):
        return 2 * self.n_cells

    @classmethod
    def identity(cls, mode_count):
        slots = canonical_slots(mode_count)
        k = len(slots)
        layers, modes = (np.array(x, dtype=int) for x in zip(*slots)) if k else (
            np.zeros(0, int), np.zeros(0, int))
        return cls(mode_count, modes, layers, np.full(k, np.pi), np.full(k, np.pi),
                   np.zeros(mode_count))

    def heater_phases(self):
        """Interleaved ``(theta_0, phi_0, theta_1, ...)`` heater phase vector."""
        out = np.empty(self.n_heaters)
        out[0::2] = self.thetas
        out[1::2] = self.phis
        return out

    def with_heater_phases(self, phases):
        phases = np.asarray(phases, dtype=float)
        if phases.shape != (self.n_heaters,):
            raise DimensionError(f"expected {self.n_heaters} heater phases")
        return MeshProgram(self.mode_count, self.modes, self.layers, phases[0::2],
                           phases[1::2], self.output_phases)

    def to_dict(self):
        return {
            "mode_count": int(self.mode_count),
            "thetas": self.thetas.tolist(),
            "phis": self.phis.tolist(),
            "output_phases": self.output_phases.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        base = cls.identity(int(d["mode_count"]))
        return cls(base.mode_count, base.modes, base.layers, d["thetas"], d["phis"],
                   d["output_phases"])


# -- Clements decomposition --------------------------------------------------------


def _null_right(x, y):
    """Cell whose inverse, applied on the right, zeroes the first of ``(x, y)``."""
    if abs(x) < _TINY:
        return np.pi, np.pi
    if abs(y) < _TINY:
        return 0.0, 0.0
    return 2.0 * np.arctan2(abs(y), abs(x)), np.angle(x) - np.angle(y) - np.pi


def _null_left(x, y):
    """Cell which, applied on the left, zeroes the second of ``(x, y)``."""
    if abs(y) < _TINY:
        return np.pi, np.pi
    if abs(x) < _TINY:
        return 0.0, 0.0
    return 2.0 * np.arctan2(abs(x), abs(y)), np.angle(y) - np.angle(x)


def _apply_rows(u, m, t):
    u[[m, m + 1], :] = t @ u[[m, m + 1], :]


def _apply_cols(u, m, t):
    u[:, [m, m + 1]] = u[:, [m, m + 1]] @ t


def _push_through(theta, phi, a, b):
    """Rewrite ``T(theta, phi)^-1 diag(e^ia, e^ib)`` as ``diag(e^ia', e^ib') T(theta, phi')``."""
    x = np.linalg.inv(cell_matrix(theta, phi)) @ np.diag([np.exp(1j * a), np.exp(1j * b)])
    new_phi = np.pi if abs(np.cos(theta / 2.0)) < 1e-14 else a - b
    d = x @ np.linalg.inv(cell_matrix(theta, new_phi))
    return new_phi, np.angle(d[0, 0]), np.angle(d[1, 1])


def clements_decompose(u, tol=1e-8):
    """Factor a unitary into a rectangular mesh program.

    Alternately nulls the lower-left entries of ``u`` from the right (by
    inverse cells) and from the left (by cells), then commutes the residual
    diagonal through the left-hand cells so it ends up as output phases.

    Raises
    ------
    ValueError
        If ``u`` is not unitary within ``tol``.
    """
    u = check_matrix(u, square=True, name="u")
    if not is_unitary(u, tol):
        raise ValueError("clements_decompose needs a unitary matrix")
    n = u.shape[0]
    work = u.copy()
    right, left = [], []
    for i in range(n - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                r, m = n - 1 - j, i - j
                theta, phi = _null_right(work[r, m], work[r, m + 1])
                _apply_cols(work, m, np.linalg.inv(cell_matrix(theta, phi)))
                right.append((m, theta, phi))
        else:
            for j in range(1, i + 2):
                r, c = n + j - i - 2, j - 1
                theta, phi = _null_left(work[r - 1, c], work[r, c])
                _apply_rows(work, r - 1, cell_matrix(theta, phi))
                left.append((r - 1, theta, phi))

    phases = np.angle(np.diag(work)).copy()
    pushed = []
    for m, theta, phi in reversed(left):
        new_phi, a, b = _push_through(theta, phi, phases[m], phases[m + 1])
        phases[m], phases[m + 1] = a, b
        pushed.append((m, theta, new_phi))
    # application order: right cells first, then pushed cells (reverse of push order)
    sequence = right + pushed
    return _assemble(n, sequence, phases)


def _assemble(n, sequence, output_phases):
    slots = canonical_slots(n)
    index = {slot: k for k, slot in enumerate(slots)}
    thetas = np.full(len(slots), np.pi)
    phis = np.full(len(slots), np.pi)
    depth = np.zeros(n, dtype=int)
    for m, theta, phi in sequence:
        layer = max(depth[m], depth[m + 1])
        if layer % 2 != m % 2:
            layer += 1
        if (layer, m) not in index:
            raise RuntimeError("cell sequence does not fit the rectangular layout")
        k = index[(layer, m)]
        thetas[k], phis[k] = theta, phi
        depth[m] = depth[m + 1] = layer + 1
    layers, modes = (np.array(x, dtype=int) for x in zip(*slots)) if slots else (
        np.zeros(0, int), np.zeros(0, int))
    return MeshProgram(n, modes, layers, thetas, phis, output_phases)


def recompose(program):
    """Ideal (balanced-splitter, lossless) unitary of a program."""
    n = program.mode_count
    u = np.eye(n, dtype=complex)
    for m, theta, phi in zip(program.modes, program.thetas, program.phis):
        _apply_rows(u, m, cell_matrix(theta, phi))
    return np.exp(1j * program.output_phases)[:, None] * u


def embed_program(program, mode_count):
    """Place an ``n``-mode program in the top-left corner of a larger mesh.

    The small mesh occupies layers ``< n`` and cells with both modes ``< n``;
    every other cell is set to the identity ``T(pi, pi)``.
    """
    n = program.mode_count
    if n > mode_count:
        raise DimensionError(f"cannot embed {n} modes into {mode_count}")
    big = MeshProgram.identity(mode_count)
    lookup = {(l, m): k for k, (l, m) in enumerate(zip(program.layers, program.modes))}
    thetas, phis = big.thetas.copy(), big.phis.copy()
    for k, (l, m) in enumerate(zip(big.layers, big.modes)):
        src = lookup.get((l, m))
        if src is not None:
            thetas[k], phis[k] = program.thetas[src], program.phis[src]
    out = np.zeros(mode_count)
    out[:n] = program.output_phases
    return MeshProgram(mode_count, big.modes, big.layers, thetas, phis, out)


def submesh_cells(mode_count, n):
    """Indices (canonical order) of the cells forming the top-left ``n``-mode mesh."""
    if not 2 <= n <= mode_count:
        raise DimensionError(f"sub-mesh size {n} outside [2, {mode_count}]")
    return np.array(
        [k for k, (l, m) in enumerate(canonical_slots(mode_count)) if l < n and m + 1 < n],
        dtype=int,
    )


def engaged_heaters(program, n):
    """Heater ids implementing an ``n``-element circuit embedded in ``program``."""
    cells = submesh_cells(program.mode_count, n)
    return np.sort(np.concatenate([2 * cells, 2 * cells + 1]))


# -- batched layered simulation ---------------------------------------------------------


class LayeredMesh:
    """Vectorised forward model of a rectangular mesh with imperfect splitters.

    Cells inside a layer act on disjoint mode pairs, so each layer is one
    broadcast update.  ``forward`` optionally records the intermediate fields
    needed by :meth:`backward`, which returns gradients of a real loss with
    respect to the heater phases and splitter angles.
    """

    def __init__(self, mode_count):
        self.mode_count = mode_count
        slots = canonical_slots(mode_count)
        self.n_cells = len(slots)
        self.groups = []
        for layer in range(mode_count):
            cells = np.array([k for k, (l, _) in enumerate(slots) if l == layer], dtype=int)
            if cells.size:
                tops = np.array([slots[k][1] for k in cells], dtype=int)
                self.groups.append((cells, tops, tops + 1))

    def forward(self, thetas, phis, alpha1, alpha2, state=None, record=False):
        """Propagate ``state`` (default identity) through the mesh.

        Parameters
        ----------
        thetas, phis : array, shape (..., n_cells)
        alpha1, alpha2 : array, shape (n_cells,)
        state : array, shape (..., mode_count, k), optional

        Returns
        -------
        out : array, shape (..., mode_count, k)
        tape : list or None
        """
        thetas = np.asarray(thetas, dtype=float)
        phis = np.asarray(phis, dtype=float)
        batch = thetas.shape[:-1]
        if state is None:
            state = np.broadcast_to(np.eye(self.mode_count, dtype=complex),
                                    batch + (self.mode_count, self.mode_count))
        s = np.array(state, dtype=complex)
        c1, s1 = np.cos(alpha1), np.sin(alpha1)
        c2, s2 = np.cos(alpha2), np.sin(alpha2)
        tape = [] if record else None
        for cells, top, bot in self.groups:
            a = s[..., top, :]
            b = s[..., bot, :]
            e_phi = np.exp(1j * phis[..., cells])[..., None]
            e_theta = np.exp(1j * thetas[..., cells])[..., None]
            a1 = e_phi * a
            cc1, ss1 = c1[cells, None], s1[cells, None]
            a2 = cc1 * a1 + 1j * ss1 * b
            b2 = 1j * ss1 * a1 + cc1 * b
            a3 = e_theta * a2
            cc2, ss2 = c2[cells, None], s2[cells, None]
            s[..., top, :] = cc2 * a3 + 1j * ss2 * b2
            s[..., bot, :] = 1j * ss2 * a3 + cc2 * b2
            if record:
                tape.append((a1, b, a3, b2, e_phi, e_theta))
        return s, tape

    def backward(self, grad_out, tape, alpha1, alpha2):
        """Reverse pass.

        ``grad_out`` is ``dL/d conj(out)`` for a real loss ``L``.  Returns
        ``(d_thetas, d_phis, d_alpha1, d_alpha2, d_state)`` where the phase
        gradients keep the batch shape and the splitter gradients are summed
        over the batch.
        """
        g = np.array(grad_out, dtype=complex)
        batch = g.shape[:-2]
        d_thetas = np.zeros(batch + (self.n_cells,))
        d_phis = np.zeros(batch + (self.n_cells,))
        d_a1 = np.zeros(self.n_cells)
        d_a2 = np.zeros(self.n_cells)
        c1, s1 = np.cos(alpha1), np.sin(alpha1)
        c2, s2 = np.cos(alpha2), np.sin(alpha2)
        sum_axes = tuple(range(len(batch))) + (len(batch) + 1,)
        for (cells, top, bot), (a1, b, a3, b2, e_phi, e_theta) in zip(
            reversed(self.groups), reversed(tape)
        ):
            ga4 = g[..., top, :]
            gb4 = g[..., bot, :]
            cc2, ss2 = c2[cells, None], s2[cells, None]
            d_a2[cells] += 2.0 * np.real(
                np.conj(ga4) * (-ss2 * a3 + 1j * cc2 * b2)
                + np.conj(gb4) * (1j * cc2 * a3 - ss2 * b2)
            ).sum(axis=sum_axes)
            ga3 = cc2 * ga4 - 1j * ss2 * gb4
            gb2 = -1j * ss2 * ga4 + cc2 * gb4
            d_thetas[..., cells] = 2.0 * np.real(np.conj(ga3) * 1j * a3).sum(axis=-1)
            ga2 = np.conj(e_theta) * ga3
            cc1, ss1 = c1[cells, None], s1[cells, None]
            d_a1[cells] += 2.0 * np.real(
                np.conj(ga2) * (-ss1 * a1 + 1j * cc1 * b)
                + np.conj(gb2) * (1j * cc1 * a1 - ss1 * b)
            ).sum(axis=sum_axes)
            ga1 = cc1 * ga2 - 1j * ss1 * gb2
            gb = -1j * ss1 * ga2 + cc1 * gb2
            d_phis[..., cells] = 2.0 * np.real(np.conj(ga1) * 1j * a1).sum(axis=-1)
            g[..., top, :] = np.conj(e_phi) * ga1
            g[..., bot, :] = gb
        return d_thetas, d_phis, d_a1, d_a2, g
