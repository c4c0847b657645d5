"""Ground-truth model of an imperfect, heater-driven Mach-Zehnder processor.

Heater phases follow the quadratic thermo-optic response with linear
cross-talk between heaters::

    phases = C2 @ (V * V) + c0      (mod 2 pi)

The fixed couplers deviate from 50:50, and waveguide loss is lumped into
per-mode input and output attenuators.  A manufacturer-style controller
(:func:`factory_voltages`) knows each heater's self-response and passive
phase (within a small calibration error) but not the residual cross-talk.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .core import check_matrix
from .exceptions import DimensionError
from .mesh import LayeredMesh, MeshProgram, canonical_slots, submesh_cells

SCHEMA_VERSION = 1
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ImperfectionConfig:
    """Ranges from which :func:`sample_hardware` draws a device.

    Defaults describe a typical thermally tuned chip: couplers within about 4.5% of
    50:50, 3-7 dB end-to-end mode loss with a 4.2 dB median, and residual
    cross-talk at 2% of the self-response decaying over three heaters.
    """

    splitter_deviation: float = 0.045
    crosstalk_scale: float = 0.02
    crosstalk_length: float = 3.0
    loss_db_range: Tuple[float, float] = (3.0, 7.0)
    loss_db_median: float = 4.2
    snspd_channels: int = 4
    snspd_efficiency: Tuple[float, float] = (0.70, 0.85)
    apd_efficiency: Tuple[float, float] = (0.45, 0.60)
    heater_response: float = TWO_PI / 50.0  # rad / V^2, i.e. 2 pi at about 7.1 V
    heater_response_spread: float = 0.1
    max_voltage: float = 10.0
    nominal_response_error: float = 0.01
    nominal_passive_error: float = 0.02

    def validate(self):
        if not 0.0 <= self.splitter_deviation < 0.5:
            raise ValueError("splitter_deviation must lie in [0, 0.5)")
        if self.crosstalk_scale < 0 or self.crosstalk_length <= 0:
            raise ValueError("crosstalk_scale must be >= 0 and crosstalk_length > 0")
        lo, hi = self.loss_db_range
        if lo < 0 or lo > hi or not lo <= self.loss_db_median <= hi:
            raise ValueError("need 0 <= min loss <= median <= max loss")
        for name in ("snspd_efficiency", "apd_efficiency"):
            a, b = getattr(self, name)
            if not 0 < a <= b <= 1:
                raise ValueError(f"{name} must satisfy 0 < min <= max <= 1")
        if self.snspd_channels < 0:
            raise ValueError("snspd_channels must be >= 0")
        if self.heater_response <= 0 or not 0 <= self.heater_response_spread < 1:
            raise ValueError("heater_response must be > 0 with spread in [0, 1)")
        if self.max_voltage <= 0:
            raise ValueError("max_voltage must be positive")
        if self.nominal_response_error < 0 or self.nominal_passive_error < 0:
            raise ValueError("nominal calibration errors must be non-negative")
        return self

    @classmethod
    def ideal(cls):
        """No imperfections at all: balanced couplers, no loss, no cross-talk."""
        return cls(
            splitter_deviation=0.0, crosstalk_scale=0.0, loss_db_range=(0.0, 0.0),
            loss_db_median=0.0, snspd_efficiency=(1.0, 1.0), apd_efficiency=(1.0, 1.0),
            heater_response_spread=0.0, nominal_response_error=0.0,
            nominal_passive_error=0.0,
        )


@dataclass(frozen=True)
class HardwareModel:
    """A sampled device (or a sub-mesh of one).

    Attributes
    ----------
    mode_count : int
    reflectivities : ndarray, shape (n_cells, 2)
        Power reflectivity of the first and second coupler of each cell.
    crosstalk : ndarray, shape (n_heaters, n_heaters)
        Response matrix ``C2`` in rad / V^2.
    passive_phases : ndarray, shape (n_heaters,)
        Zero-voltage phases ``c0``.
    input_transmission, output_transmission : ndarray, shape (mode_count,)
        Amplitude transmissions.
    detector_efficiencies : ndarray, shape (mode_count,)
        Combined fibre and detector efficiency per output.
    nominal_response, nominal_passive : ndarray, shape (n_heaters,)
        The controller's factory calibration of ``diag(C2)`` and ``c0``.
    """

    mode_count: int
    reflectivities: np.ndarray
    crosstalk: np.ndarray
    passive_phases: np.ndarray
    input_transmission: np.ndarray
    output_transmission: np.ndarray
    detector_efficiencies: np.ndarray
    nominal_response: np.ndarray
    nominal_passive: np.ndarray
    max_voltage: float = 10.0
    seed: Optional[int] = None

    def __post_init__(self):
        n = self.mode_count
        k = len(canonical_slots(n))
        arrays = {
            "reflectivities": (k, 2), "crosstalk": (2 * k, 2 * k),
            "passive_phases": (2 * k,), "input_transmission": (n,),
            "output_transmission": (n,), "detector_efficiencies": (n,),
            "nominal_response": (2 * k,), "nominal_passive": (2 * k,),
        }
        for name, shape in arrays.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any((self.reflectivities < 0) | (self.reflectivities > 1)):
            raise ValueError("reflectivities must lie in [0, 1]")
        if np.any(self.detector_efficiencies <= 0) or np.any(self.detector_efficiencies > 1):
            raise ValueError("detector efficiencies must lie in (0, 1]")

    @property
    def n_cells(self):
        return len(self.reflectivities)

    @property
    def n_heaters(self):
        return 2 * self.n_cells

    @property
    def splitter_angles(self):
        """``alpha`` with ``sin^2(alpha)`` equal to each reflectivity, shape (n_cells, 2)."""
        return np.arcsin(np.sqrt(self.reflectivities))

    def mode_loss_db(self):
        """End-to-end loss from each input to the same-index output, in dB."""
        return -20.0 * np.log10(self.input_transmission * self.output_transmission)

    def submesh(self, n):
        """The top-left ``n``-mode mesh, other heaters frozen at their identity bias.

        Frozen heaters add a constant cross-talk offset, folded into the
        passive phases of the retained heaters.
        """
        if n == self.mode_count:
            return self
        cells = submesh_cells(self.mode_count, n)
        keep = np.sort(np.concatenate([2 * cells, 2 * cells + 1]))
        idle = np.setdiff1d(np.arange(self.n_heaters), keep)
        bias = factory_voltages(self, MeshProgram.identity(self.mode_count))
        offset = self.crosstalk[np.ix_(keep, idle)] @ bias[idle] ** 2
        return HardwareModel(
            mode_count=n,
            reflectivities=self.reflectivities[cells],
            crosstalk=self.crosstalk[np.ix_(keep, keep)],
            passive_phases=np.mod(self.passive_phases[keep] + offset, TWO_PI),
            input_transmission=self.input_transmission[:n],
            output_transmission=self.output_transmission[:n],
            detector_efficiencies=self.detector_efficiencies[:n],
            nominal_response=self.nominal_response[keep],
            nominal_passive=self.nominal_passive[keep],
            max_voltage=self.max_voltage,
            seed=self.seed,
        )

    # -- serialisation ------------------------------------------------------------

    def to_dict(self):
        d = {"schema_version": SCHEMA_VERSION, "mode_count": int(self.mode_count),
             "max_voltage": float(self.max_voltage), "seed": self.seed}
        for name in ("reflectivities", "crosstalk", "passive_phases", "input_transmission",
                     "output_transmission", "detector_efficiencies", "nominal_response",
                     "nominal_passive"):
            d[name] = getattr(self, name).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported hardware schema version {version!r}")
        fields = {k: v for k, v in d.items() if k != "schema_version"}
        return cls(**fields)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _split_uniform(rng, lo, median, hi, size):
    """Piecewise-uniform draws with exactly half the mass on each side of ``median``."""
    u = rng.random(size)
    low = lo + (median - lo) * 2.0 * u
    high = median + (hi - median) * (2.0 * u - 1.0)
    return np.where(u < 0.5, low, high)


def sample_hardware(seed, config=None, mode_count=12):
    """Draw a reproducible device from ``config``.

    The same ``(seed, config, mode_count)`` always yields an identical model.
    """
    config = (config or ImperfectionConfig()).validate()
    rng = np.random.default_rng(seed)
    k = len(canonical_slots(mode_count))
    h = 2 * k

    reflectivities = 0.5 + config.splitter_deviation * rng.uniform(-1, 1, size=(k, 2))

    spread = config.heater_response_spread
    diag = config.heater_response * (1.0 + spread * rng.uniform(-1, 1, size=h))
    idx = np.arange(h)
    dist = np.abs(idx[:, None] - idx[None, :])
    jitter = rng.uniform(0.5, 1.5, size=(h, h))
    crosstalk = config.crosstalk_scale * np.sqrt(np.outer(diag, diag)) * jitter
    crosstalk *= np.exp(-dist / config.crosstalk_length)
    np.fill_diagonal(crosstalk, diag)

    passive = rng.uniform(0.0, TWO_PI, size=h)

    lo, hi = config.loss_db_range
    loss_db = _split_uniform(rng, lo, config.loss_db_median, hi, mode_count)
    transmission = 10.0 ** (-loss_db / 40.0)  # half the dB at each end, amplitude

    n_snspd = min(config.snspd_channels, mode_count)
    eff = np.concatenate([
        rng.uniform(*config.snspd_efficiency, size=n_snspd),
        rng.uniform(*config.apd_efficiency, size=mode_count - n_snspd),
    ])

    nominal_response = diag * (1.0 + config.nominal_response_error * rng.standard_normal(h))
    nominal_passive = np.mod(passive + config.nominal_passive_error * rng.standard_normal(h),
                             TWO_PI)
    return HardwareModel(
        mode_count=mode_count,
        reflectivities=reflectivities,
        crosstalk=crosstalk,
        passive_phases=passive,
        input_transmission=transmission,
        output_transmission=transmission,
        detector_efficiencies=eff,
        nominal_response=nominal_response,
        nominal_passive=nominal_passive,
        max_voltage=config.max_voltage,
        seed=None if seed is None else int(seed),
    )


def check_voltages(hw, v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != hw.n_heaters:
        raise DimensionError(f"expected {hw.n_heaters} voltages, got {v.shape[-1]}")
    return v


def phases_from_voltages(hw, v):
    """Actual heater phases ``C2 @ V^2 + c0`` wrapped to ``[0, 2 pi)``; broadcasts over rows."""
    v = check_voltages(hw, v)
    return np.mod((v * v) @ hw.crosstalk.T + hw.passive_phases, TWO_PI)


def factory_voltages(hw, program):
    """Voltages the vendor controller applies for ``program``.

    Each heater is inverted on its own with the nominal self-response and
    passive phase; cross-talk is ignored.
    """
    target = program.heater_phases() if isinstance(program, MeshProgram) else np.asarray(program)
    if target.shape != (hw.n_heaters,):
        raise DimensionError(f"program drives {target.shape} heaters, device has {hw.n_heaters}")
    drive = np.mod(target - hw.nominal_passive, TWO_PI)
    return np.sqrt(drive / hw.nominal_response)


_MESHES = {}


def _layered(mode_count):
    if mode_count not in _MESHES:
        _MESHES[mode_count] = LayeredMesh(mode_count)
    return _MESHES[mode_count]


def mesh_transfer(setting, hw, input_modes=None):
    """Transfer matrix of the physical device.

    ``setting`` is either a :class:`MeshProgram`, whose phases are applied
    exactly as programmed (including its output phase screen), or a voltage
    vector (or a stack of them), converted to phases with the device's true
    response.  Coupler imbalance and mode losses apply in both cases.
    ``input_modes`` restricts the computation to those columns.
    """
    angles = hw.splitter_angles
    if isinstance(setting, MeshProgram):
        if setting.mode_count != hw.mode_count:
            raise DimensionError("program and hardware mode counts differ")
        thetas, phis = setting.thetas, setting.phis
        screen = np.exp(1j * setting.output_phases)
    else:
        phases = phases_from_voltages(hw, setting)
        thetas, phis = phases[..., 0::2], phases[..., 1::2]
        screen = np.ones(hw.mode_count)
    cols = np.arange(hw.mode_count) if input_modes is None else np.atleast_1d(input_modes)
    eye = np.eye(hw.mode_count, dtype=complex)[:, cols]
    state = np.broadcast_to(eye, np.shape(thetas)[:-1] + eye.shape)
    u, _ = _layered(hw.mode_count).forward(thetas, phis, angles[:, 0], angles[:, 1], state)
    out = (screen * hw.output_transmission)[:, None]
    return out * u * hw.input_transmission[cols][None, :]


def singular_values(m):
    return np.linalg.svd(check_matrix(m), compute_uv=False)
