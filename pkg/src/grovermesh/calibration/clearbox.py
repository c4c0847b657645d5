"""Clear-box calibration: learn the device's voltage-to-phase map from data.

The model mirrors the physical one.  Heater phases are an affine function of
the squared voltages, ``phases = C2 @ V^2 + c0``, and they drive a mesh with
learnable coupler angles.  Training fits ``C2``, ``c0`` and the coupler
angles to measured output distributions by mini-batch Adam on the mean
squared error.  Once fitted, the model compiles mesh programs into voltages
that account for cross-talk and coupler imbalance.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ..detection import DEFAULT_SHOTS, ChannelCorrections
from ..exceptions import (
    DegenerateStateError,
    DimensionError,
    InfeasibleInversionError,
    TrainingError,
)
from ..hardware import mesh_transfer
from ..mesh import BALANCED_ANGLE, LayeredMesh, canonical_slots
from .metrics import tvd

TWO_PI = 2.0 * np.pi
MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainingSet:
    """Random voltage settings and the output distributions they produced.

    Attributes
    ----------
    voltages : ndarray, shape (samples, n_heaters)
    distributions : ndarray, shape (samples, n_outputs, n_inputs)
        Column ``j`` is the efficiency-corrected distribution for a photon
        entering input ``j``.
    exact : ndarray or None
        The same distributions without shot noise, when known.
    shots : int or None
        Photons per input channel; ``None`` for exact data.
    max_voltage : float
    """

    voltages: np.ndarray
    distributions: np.ndarray
    exact: Optional[np.ndarray] = None
    shots: Optional[int] = None
    max_voltage: float = 10.0

    def __post_init__(self):
        if len(self.voltages) == 0:
            raise DegenerateStateError("training set is empty")
        if len(self.voltages) != len(self.distributions):
            raise DimensionError("voltages and distributions differ in sample count")

    def __len__(self):
        return len(self.voltages)

    def split(self, n_train):
        """First ``n_train`` samples and the rest, as two training sets."""
        def part(sl):
            return TrainingSet(self.voltages[sl], self.distributions[sl],
                               None if self.exact is None else self.exact[sl],
                               self.shots, self.max_voltage)
        return part(slice(None, n_train)), part(slice(n_train, None))


def generate_training_set(hw, samples, shots=DEFAULT_SHOTS, seed=None):
    """Drive ``hw`` with random voltages and record every input's output distribution.

    Squared voltages are uniform on ``[0, Vmax^2]``, i.e. uniform in
    dissipated power.  ``shots=None`` records exact distributions.
    """
    if samples < 1:
        raise DegenerateStateError("need at least one training sample")
    rng = np.random.default_rng(seed)
    vmax = hw.max_voltage
    v = vmax * np.sqrt(rng.uniform(0.0, 1.0, size=(samples, hw.n_heaters)))
    t = mesh_transfer(v, hw)
    eta = hw.detector_efficiencies[:, None]
    factors = ChannelCorrections.from_hardware(hw).factors[:, None]
    click = np.abs(t) ** 2 * eta
    exact = click * factors
    exact /= exact.sum(axis=-2, keepdims=True)
    if shots is None:
        return TrainingSet(v, exact, exact, None, vmax)
    # multinomial draws per (sample, input) column, plus a no-click bin
    cols = np.moveaxis(click, -1, -2)
    lost = np.clip(1.0 - cols.sum(axis=-1, keepdims=True), 0.0, None)
    pvals = np.concatenate([cols, lost], axis=-1)
    pvals /= pvals.sum(axis=-1, keepdims=True)
    draws = rng.multinomial(int(shots), pvals)[..., :-1]
    weights = np.moveaxis(draws, -1, -2) * factors
    total = weights.sum(axis=-2, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateStateError("an input channel recorded no clicks")
    return TrainingSet(v, weights / total, exact, int(shots), vmax)


class _Adam:
    """Adam updates for a list of arrays, in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, grads, lr, scales=None):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        scales = scales or [1.0] * len(self.params)
        for p, g, m, v, k in zip(self.params, grads, self.m, self.v, scales):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= k * lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _mode_count(n_heaters):
    n = int(round((1 + np.sqrt(1 + 4 * n_heaters)) / 2))
    if n * (n - 1) != n_heaters:
        raise DimensionError(f"{n_heaters} heaters do not form a rectangular mesh")
    return n


def _forward_loss(mesh, scaled, passive, angles, u, y, grad=True):
    """MSE between predicted and observed distributions, with gradients.

    ``u`` holds normalised squared voltages ``V^2 / Vmax^2`` so that
    ``scaled`` (``C2 * Vmax^2``) is in radians.
    """
    phases = u @ scaled.T + passive
    out, tape = mesh.forward(phases[:, 0::2], phases[:, 1::2], angles[:, 0], angles[:, 1],
                             record=grad)
    p = np.abs(out) ** 2
    resid = p - y
    loss = float(np.mean(resid ** 2))
    if not grad:
        return loss, None
    g_out = (2.0 / resid.size) * resid * out
    d_th, d_ph, d_a1, d_a2, _ = mesh.backward(g_out, tape, angles[:, 0], angles[:, 1])
    g_phase = np.empty_like(phases)
    g_phase[:, 0::2] = d_th
    g_phase[:, 1::2] = d_ph
    return loss, (g_phase.T @ u, g_phase.sum(axis=0), np.stack([d_a1, d_a2], axis=1))


class ClearBoxCalibrator(BaseEstimator):
    """Fit ``phases = C2 @ V^2 + c0`` and coupler angles to measured distributions.

    Parameters
    ----------
    learning_rate : float
        Initial Adam step size, decayed to zero on a cosine over ``max_epochs``.
    batch_size : int
    max_epochs : int
    patience : int
        Stop once the epoch-mean loss has not improved for this many epochs.
    min_rel_improvement : float
        Relative loss decrease that counts as an improvement.
    learn_splitters : bool
        Fit coupler angles as well; otherwise they stay balanced.
    divergence_factor : float
        Abort if the epoch loss exceeds this multiple of the first epoch's.
    random_state : int or None
        Seed for mini-batch shuffling.

    Attributes
    ----------
    crosstalk_ : ndarray, shape (n_heaters, n_heaters)
        Estimated ``C2`` in rad / V^2.
    passive_ : ndarray, shape (n_heaters,)
        Estimated ``c0``.
    splitter_angles_ : ndarray, shape (n_cells, 2)
    history_ : list of float
        Epoch-mean training loss.
    n_epochs_, final_loss_ : int, float
    """

    def __init__(self, learning_rate=1e-2, batch_size=32, max_epochs=2000, patience=100,
                 min_rel_improvement=1e-4, learn_splitters=True, divergence_factor=10.0,
                 random_state=None):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.min_rel_improvement = min_rel_improvement
        self.learn_splitters = learn_splitters
        self.divergence_factor = divergence_factor
        self.random_state = random_state

    def _validate(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=1)
        if np.any(X < 0):
            raise ValueError("voltages must be non-negative")
        if y is None:
            return X, None
        y = np.asarray(y, dtype=float)
        n = _mode_count(X.shape[1])
        if y.shape != (len(X), n, n):
            raise DimensionError(f"distributions must have shape {(len(X), n, n)}, got {y.shape}")
        return X, y

    def fit(self, X, y, nominal_response=None, nominal_passive=None, max_voltage=10.0):
        """Train on voltages ``X`` (samples, heaters) and distributions ``y``.

        ``nominal_response`` and ``nominal_passive`` seed ``diag(C2)`` and
        ``c0``; without them training starts from a generic thermo-optic
        response and zero passive phase.
        """
        X, y = self._validate(X, y)
        h = X.shape[1]
        n = _mode_count(h)
        vmax2 = float(max_voltage) ** 2
        if nominal_response is None:
            nominal_response = np.full(h, TWO_PI / vmax2 * 2.0)
        if nominal_passive is None:
            nominal_passive = np.zeros(h)
        scaled = np.diag(np.asarray(nominal_response, dtype=float) * vmax2)
        passive = np.array(nominal_passive, dtype=float)
        angles = np.full((len(canonical_slots(n)), 2), BALANCED_ANGLE)
        # centred drive decouples the offset from the slope during training
        u = X * X / vmax2 - 0.5
        passive = passive + scaled.sum(axis=1) * 0.5
        # every matrix entry moves at the Adam step size, so a row's phase
        # moves ~h times faster than an offset; scale the matrix rate back
        matrix_scale = 1.0 / h

        mesh = LayeredMesh(n)
        opt = _Adam([scaled, passive, angles])
        rng = np.random.default_rng(self.random_state)
        history = []
        best = np.inf
        since_best = 0
        for epoch in range(self.max_epochs):
            lr = 0.5 * self.learning_rate * (1.0 + np.cos(np.pi * epoch / self.max_epochs))
            order = rng.permutation(len(X))
            total = 0.0
            for start in range(0, len(X), self.batch_size):
                idx = order[start:start + self.batch_size]
                loss, (g_scaled, g_passive, g_angles) = _forward_loss(
                    mesh, scaled, passive, angles, u[idx], y[idx])
                if not self.learn_splitters:
                    g_angles = np.zeros_like(g_angles)
                opt.step([g_scaled, g_passive, g_angles], lr, [matrix_scale, 1.0, 1.0])
                total += loss * len(idx)
            epoch_loss = total / len(X)
            history.append(epoch_loss)
            if not np.isfinite(epoch_loss) or epoch_loss > self.divergence_factor * history[0]:
                raise TrainingError(f"training diverged at epoch {epoch}", history)
            if epoch_loss < best * (1.0 - self.min_rel_improvement):
                best = epoch_loss
                since_best = 0
            else:
                since_best += 1
                if since_best >= self.patience:
                    break

        self.final_loss_ = _forward_loss(mesh, scaled, passive, angles, u, y, grad=False)[0]
        self.crosstalk_ = scaled / vmax2
        self.passive_ = np.mod(passive - scaled.sum(axis=1) * 0.5, TWO_PI)
        self.splitter_angles_ = angles
        self.max_voltage_ = float(max_voltage)
        self.mode_count_ = n
        self.history_ = history
        self.n_epochs_ = len(history)
        return self

    # -- inference ------------------------------------------------------------------

    def transform(self, X):
        """Predicted heater phases for voltages ``X``, wrapped to ``[0, 2 pi)``."""
        check_is_fitted(self, "crosstalk_")
        X, _ = self._validate(X)
        return np.mod((X * X) @ self.crosstalk_.T + self.passive_, TWO_PI)

    def predict(self, X):
        """Predicted distributions, shape (samples, outputs, inputs)."""
        phases = self.transform(X)
        a = self.splitter_angles_
        out, _ = _mesh(self.mode_count_).forward(phases[:, 0::2], phases[:, 1::2], a[:, 0], a[:, 1])
        return np.abs(out) ** 2

    def inverse_transform(self, phases):
        """Voltages that produce ``phases`` according to the model."""
        return clearbox_invert(self, phases)

    def score(self, X, y):
        """Negative mean TVD over every sample and input channel."""
        X, y = self._validate(X, y)
        pred = np.moveaxis(self.predict(X), -1, -2)
        return -float(np.mean(tvd(pred, np.moveaxis(y, -1, -2))))

    def program_transfer(self, phases):
        """Model transfer matrix for heater phases ``phases``."""
        check_is_fitted(self, "crosstalk_")
        a = self.splitter_angles_
        phases = np.asarray(phases, dtype=float)
        out, _ = _mesh(self.mode_count_).forward(phases[0::2], phases[1::2], a[:, 0], a[:, 1])
        return out

    # -- persistence ----------------------------------------------------------------

    def to_dict(self):
        check_is_fitted(self, "crosstalk_")
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "params": self.get_params(),
            "mode_count": self.mode_count_,
            "max_voltage": self.max_voltage_,
            "crosstalk": self.crosstalk_.tolist(),
            "passive": self.passive_.tolist(),
            "splitter_angles": self.splitter_angles_.tolist(),
            "history": list(self.history_),
            "final_loss": self.final_loss_,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema version {d.get('schema_version')!r}")
        model = cls(**d["params"])
        model.mode_count_ = int(d["mode_count"])
        model.max_voltage_ = float(d["max_voltage"])
        model.crosstalk_ = np.asarray(d["crosstalk"], dtype=float)
        model.passive_ = np.asarray(d["passive"], dtype=float)
        model.splitter_angles_ = np.asarray(d["splitter_angles"], dtype=float)
        model.history_ = list(d["history"])
        model.n_epochs_ = len(model.history_)
        model.final_loss_ = float(d["final_loss"])
        return model

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def history_to_csv(self, path):
        check_is_fitted(self, "history_")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            for i, loss in enumerate(self.history_):
                w.writerow([i, f"{loss:.12g}"])


_MESHES = {}


def _mesh(n):
    if n not in _MESHES:
        _MESHES[n] = LayeredMesh(n)
    return _MESHES[n]


def clearbox_train(dataset, hw=None, **params):
    """Fit a :class:`ClearBoxCalibrator` on ``dataset``.

    ``hw`` supplies the vendor's nominal heater calibration as the starting
    point; keyword arguments are estimator parameters.
    """
    kw = {}
    if hw is not None:
        kw = dict(nominal_response=hw.nominal_response, nominal_passive=hw.nominal_passive)
    return ClearBoxCalibrator(**params).fit(dataset.voltages, dataset.distributions,
                                            max_voltage=dataset.max_voltage, **kw)


def clearbox_invert(model, desired, max_wraps=4):
    """Voltages for which the model predicts the ``desired`` heater phases.

    Solves ``C2 x = desired + 2 pi k - c0`` for ``x = V^2``, raising the
    non-negative integer wraps ``k`` of heaters whose solution is negative
    until every ``x`` lies in ``[0, Vmax^2]``.

    Raises
    ------
    InfeasibleInversionError
        If no wrap assignment within ``max_wraps`` per heater is valid.
    """
    check_is_fitted(model, "crosstalk_")
    desired = np.asarray(desired, dtype=float)
    c, c0 = model.crosstalk_, model.passive_
    if desired.shape != c0.shape:
        raise DimensionError(f"expected {c0.shape[0]} phases, got {desired.shape}")
    vmax2 = model.max_voltage_ ** 2
    base = desired - c0
    k = np.ceil(-base / TWO_PI - 1e-12).clip(min=0)
    for _ in range(max_wraps * len(base) + 1):
        x = np.linalg.solve(c, base + TWO_PI * k)
        low = x < -1e-12
        if not low.any():
            break
        k[low] += 1
        if np.any(k > max_wraps):
            break
    bad = np.flatnonzero((x < -1e-12) | (x > vmax2 * (1 + 1e-12)))
    if bad.size:
        raise InfeasibleInversionError("no wrap assignment gives voltages within range",
                                       heaters=bad.tolist())
    return np.sqrt(np.clip(x, 0.0, vmax2))


def refine_phases(model, program, input_mode=0, target=None):
    """Adjust ``program``'s heater phases so the model reproduces its output distribution.

    The ideal program assumes balanced couplers; here the phases are tuned
    against the fitted coupler angles to match the target distribution for
    ``input_mode`` (by default the one the ideal program itself produces).
    """
    from ..mesh import recompose

    n = model.mode_count_
    if program.mode_count != n:
        raise DimensionError("program and model mode counts differ")
    if target is None:
        target = np.abs(recompose(program)[:, input_mode]) ** 2
    a = model.splitter_angles_
    mesh = _mesh(n)
    state = np.zeros((n, 1), dtype=complex)
    state[input_mode] = 1.0

    def fun(ph):
        out, tape = mesh.forward(ph[0::2], ph[1::2], a[:, 0], a[:, 1], state, record=True)
        resid = np.abs(out[:, 0]) ** 2 - target
        g_out = np.zeros_like(out)
        g_out[:, 0] = 2.0 * resid * out[:, 0]
        d_th, d_ph, *_ = mesh.backward(g_out, tape, a[:, 0], a[:, 1])
        grad = np.empty_like(ph)
        grad[0::2], grad[1::2] = d_th, d_ph
        return float(resid @ resid), grad

    res = minimize(fun, program.heater_phases(), jac=True, method="L-BFGS-B",
                   options={"maxiter": 500, "ftol": 1e-16, "gtol": 1e-12})
    return program.with_heater_phases(np.mod(res.x, TWO_PI))


def compile_program(model, program, input_mode=0, refine=True):
    """Voltages that realise ``program`` on the calibrated device."""
    if refine:
        program = refine_phases(model, program, input_mode)
    return clearbox_invert(model, program.heater_phases())


def gauge_directions(mode_count, seed=0):
    """Orthonormal heater-phase directions that leave every output distribution unchanged.

    Phase shifts on the first layer's inputs, and the combinations that
    carry them through later layers, only alter phases that intensity data
    cannot see.  They form the null space of the Jacobian of ``|U|^2`` with
    respect to the heater phases, which is the same at every setting.
    """
    n = mode_count
    mesh = _mesh(n)
    a = np.full((mesh.n_cells, 2), BALANCED_ANGLE)
    ph = np.random.default_rng(seed).uniform(0.0, TWO_PI, 2 * mesh.n_cells)
    b = n * n
    th = np.broadcast_to(ph[0::2], (b, mesh.n_cells))
    pp = np.broadcast_to(ph[1::2], (b, mesh.n_cells))
    out, tape = mesh.forward(th, pp, a[:, 0], a[:, 1], record=True)
    g = np.zeros_like(out)
    k = np.arange(b)
    g[k, k // n, k % n] = out[k, k // n, k % n]
    d_th, d_ph, *_ = mesh.backward(g, tape, a[:, 0], a[:, 1])
    jac = np.empty((b, 2 * mesh.n_cells))
    jac[:, 0::2], jac[:, 1::2] = d_th, d_ph
    _, s, vt = np.linalg.svd(jac)
    rank = int(np.sum(s > 1e-9 * s[0]))
    return vt[rank:]


def phase_rmse(model, hw, X, gauge_free=True):
    """Root-mean-square circular error of predicted heater phases against ``hw``.

    With ``gauge_free`` the error components along :func:`gauge_directions`
    are removed first, since no intensity measurement can fix them.
    """
    from ..hardware import phases_from_voltages

    diff = model.transform(X) - phases_from_voltages(hw, X)
    diff = np.mod(diff + np.pi, TWO_PI) - np.pi
    if gauge_free:
        null = gauge_directions(model.mode_count_)
        diff = diff - (diff @ null.T) @ null
    return float(np.sqrt(np.mean(diff ** 2)))
