"""Experiment campaigns: every database size, marked element and pipeline.

A campaign samples one device per hardware seed and runs each Grover
circuit (variant x size x marked element) through the requested pipelines:

``ideal``
    Perfect mesh and detectors; only shot noise.
``naive-imperfect``
    The device driven by its vendor controller, which ignores cross-talk
    and coupler imbalance.
``sequential-optimised``
    The naive setting followed by hardware-in-the-loop heater tuning.
``clearbox-calibrated``
    Voltages compiled from a clear-box model trained on the device.

Measurement seeds depend on the hardware seed, size, marked element and
pipeline but not on the variant, so variants with identical circuits give
identical results and comparisons between them carry no extra shot noise.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import warnings
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .calibration.clearbox import clearbox_train, compile_program, generate_training_set
from .calibration.metrics import tvd
from .calibration.sequential import HardwareEvaluator, SequentialOptimiser
from .detection import (
    DEFAULT_SHOTS,
    ChannelCorrections,
    correct_and_normalize,
    detect,
    measure,
)
from .exceptions import GroverMeshError
from .grover import VARIANTS, GroverSpec, bloch_trajectory, grover_unitary, schedule_for
from .hardware import (
    ImperfectionConfig,
    factory_voltages,
    mesh_transfer,
    sample_hardware,
)
from .mesh import clements_decompose, recompose

SCHEMA_VERSION = 1
MODES = ("ideal", "naive-imperfect", "sequential-optimised", "clearbox-calibrated")
MESH_SIZES = (12, 20)
CSV_COLUMNS = ("variant", "N", "marked", "mode", "seed", "success", "tvd", "shots")


class ConfigError(GroverMeshError, ValueError):
    """Invalid campaign configuration."""


def _ints(text):
    """Parse ``"4-10"``, ``"4,6,8"`` or ``"4-6,9"`` into a tuple of ints."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _names(text):
    return tuple(p.strip() for p in str(text).split(",") if p.strip())


@dataclass(frozen=True)
class CampaignConfig:
    """Grid of campaign cells and the settings shared by all of them.

    Attributes
    ----------
    sizes : tuple of int
        Database sizes ``N``.
    variants : tuple of str
    modes : tuple of str
        Pipelines, any of :data:`MODES`.
    seeds : tuple of int
        Hardware seeds; one device is sampled per seed.
    shots : int or None
        Photons per measured distribution; ``None`` for exact probabilities.
    mesh_modes : int
        Device size, 12 or 20.
    training_samples : int
        Clear-box training set size.
    imperfections : ImperfectionConfig
    """

    sizes: Tuple[int, ...] = tuple(range(4, 11))
    variants: Tuple[str, ...] = VARIANTS
    modes: Tuple[str, ...] = MODES
    seeds: Tuple[int, ...] = (0,)
    shots: Optional[int] = DEFAULT_SHOTS
    mesh_modes: int = 12
    training_samples: int = 500
    imperfections: ImperfectionConfig = field(default_factory=ImperfectionConfig)

    def __post_init__(self):
        for name in ("sizes", "variants", "modes", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self):
        if self.mesh_modes not in MESH_SIZES:
            raise ConfigError(f"mesh_modes must be one of {MESH_SIZES}, got {self.mesh_modes}")
        if not self.sizes:
            raise ConfigError("no database sizes given")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")
        for m in self.modes:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}")
        low = 4 if "deterministic" in self.variants else 2
        for n in self.sizes:
            if not low <= n <= self.mesh_modes:
                raise ConfigError(f"size {n} outside [{low}, {self.mesh_modes}]")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be positive")
        if self.training_samples < 1:
            raise ConfigError("training_samples must be positive")
        try:
            self.imperfections.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def n_cells(self):
        return len(self.variants) * len(self.modes) * len(self.seeds) * sum(self.sizes)

    @classmethod
    def from_mapping(cls, values, base=None):
        """Build from flat string settings such as those of a config file.

        Keys mirror the command-line flags: ``sizes``, ``variant``, ``mode``,
        ``seed``, ``shots``, ``mesh_modes`` (the ``--modes`` flag) and
        ``training_samples``.  ``modes`` means the device size, as with
        the flag; plural spellings of the other keys are accepted.  ``out`` is
        ignored here.  Unknown keys raise :class:`ConfigError`.
        """
        base = base or cls()
        parsers = {
            "sizes": ("sizes", _ints), "variant": ("variants", _names),
            "variants": ("variants", _names), "mode": ("modes", _names),
            "modes": ("mesh_modes", int), "seed": ("seeds", _ints), "seeds": ("seeds", _ints),
            "shots": ("shots", lambda s: None if str(s).lower() in ("none", "exact") else int(s)),
            "mesh_modes": ("mesh_modes", int), "training_samples": ("training_samples", int),
        }
        updates = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key in ("out", "output"):
                continue
            if key not in parsers:
                raise ConfigError(f"unknown config key {key!r}")
            name, parse = parsers[key]
            try:
                updates[name] = parse(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return replace(base, **updates).validate()

    def to_dict(self):
        d = asdict(self)
        d["imperfections"] = asdict(self.imperfections)
        return d


def read_config_file(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


@dataclass(frozen=True)
class CellResult:
    variant: str
    N: int
    marked: int
    mode: str
    seed: int
    success: float
    tvd: float
    shots: Optional[int]
    error: Optional[str] = None

    def row(self):
        def num(x):
            return "nan" if not np.isfinite(x) else f"{x:.10f}"
        return [self.variant, self.N, self.marked, self.mode, self.seed,
                num(self.success), num(self.tvd), "" if self.shots is None else self.shots]


@dataclass
class CampaignResult:
    config: CampaignConfig
    cells: List[CellResult] = field(default_factory=list)

    @property
    def failures(self):
        return [c for c in self.cells if c.error is not None]

    def select(self, variant=None, N=None, mode=None):
        return [c for c in self.cells
                if (variant is None or c.variant == variant) and (N is None or c.N == N)
                and (mode is None or c.mode == mode) and c.error is None]

    def groups(self):
        """Per ``(variant, N, mode)`` statistics over marked elements and seeds."""
        keys = sorted({(c.variant, c.N, c.mode) for c in self.cells},
                      key=lambda k: (VARIANTS.index(k[0]), k[1], MODES.index(k[2])))
        out = {}
        for key in keys:
            cells = self.select(*key)
            if not cells:
                continue
            s = np.array([c.success for c in cells])
            t = np.array([c.tvd for c in cells])
            out[key] = {
                "count": len(cells), "mean_success": float(s.mean()),
                "std_success": float(s.std()), "min_success": float(s.min()),
                "max_success": float(s.max()), "median_tvd": float(np.median(t)),
                "mean_tvd": float(t.mean()),
            }
        return out

    def grand_mean(self, variant, mode):
        cells = self.select(variant=variant, mode=mode)
        return float(np.mean([c.success for c in cells])) if cells else float("nan")


@lru_cache(maxsize=None)
def _circuit(n, marked, variant):
    spec = GroverSpec(n, (marked,), variant)
    u = grover_unitary(spec, schedule_for(spec))
    return spec, u, clements_decompose(u)


def _cell_seed(seed, n, marked, mode):
    return np.random.SeedSequence([seed, n, marked, MODES.index(mode)]).generate_state(1)[0]


def _measure_ideal(transfer, shots, seed):
    n = transfer.shape[0]
    if shots is None:
        return np.abs(transfer[:, 0]) ** 2
    counts = detect(transfer, 0, shots, seed=seed)
    return correct_and_normalize(counts, ChannelCorrections.uniform(n)).probabilities


class _Device:
    """Per-seed device with lazily trained clear-box models per sub-mesh size."""

    def __init__(self, config, seed):
        self.config = config
        self.seed = seed
        self.full = sample_hardware(seed, config.imperfections, config.mesh_modes)
        self._sub = {}
        self._models = {}

    def submesh(self, n):
        if n not in self._sub:
            self._sub[n] = self.full.submesh(n)
        return self._sub[n]

    def model(self, n):
        if n not in self._models:
            hw = self.submesh(n)
            seed = np.random.SeedSequence([self.seed, n, 1 + len(MODES)]).generate_state(1)[0]
            data = generate_training_set(hw, self.config.training_samples,
                                         self.config.shots, seed=int(seed))
            self._models[n] = clearbox_train(data, hw, random_state=int(seed))
        return self._models[n]


def run_cell(device, variant, n, marked, mode):
    """Measured output distribution for one campaign cell, plus its ideal target."""
    config = device.config
    spec, u, program = _circuit(n, marked, variant)
    target = np.abs(u[:, 0]) ** 2
    seed = int(_cell_seed(device.seed, n, marked, mode))
    if mode == "ideal":
        return _measure_ideal(recompose(program), config.shots, seed), target
    hw = device.submesh(n)
    if mode == "naive-imperfect":
        voltages = factory_voltages(hw, program)
    elif mode == "sequential-optimised":
        evaluator = HardwareEvaluator(hw, config.shots, seed=seed)
        program = SequentialOptimiser().fit(program, evaluator, target).program_
        voltages = factory_voltages(hw, program)
        seed = int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])
    else:
        voltages = compile_program(device.model(n), program)
    transfer = mesh_transfer(voltages, hw, input_modes=[0])
    return measure(transfer, hw, shots=config.shots, seed=seed).probabilities, target


def run_campaign(config, progress=None):
    """Run every cell of ``config``.

    Failing cells are recorded with their error message and the campaign
    carries on.  ``progress`` is called with each finished cell.
    """
    config.validate()
    result = CampaignResult(config)
    for seed in config.seeds:
        device = _Device(config, seed)
        for n in config.sizes:
            for mode in config.modes:
                for variant in config.variants:
                    for marked in range(n):
                        try:
                            dist, target = run_cell(device, variant, n, marked, mode)
                            cell = CellResult(variant, n, marked, mode, seed,
                                              float(dist[marked]), tvd(dist, target), config.shots)
                        except (GroverMeshError, ValueError, np.linalg.LinAlgError) as exc:
                            cell = CellResult(variant, n, marked, mode, seed, float("nan"),
                                              float("nan"), config.shots,
                                              error=f"{type(exc).__name__}: {exc}")
                        result.cells.append(cell)
                        if progress is not None:
                            progress(cell)
    result.cells.sort(key=lambda c: (VARIANTS.index(c.variant), c.N, c.marked,
                                     MODES.index(c.mode), c.seed))
    return result


def summarize_tvd(result, modes=("naive-imperfect", "sequential-optimised")):
    """Median TVD per variant, size and pipeline, laid out one row per size.

    Returns ``(table, text)`` where ``table[(variant, N)][mode]`` is the
    median and ``text`` a fixed-width rendering.
    """
    present = {c.mode for c in result.cells}
    missing = [m for m in modes if m not in present]
    if missing:
        warnings.warn(f"partial table: no cells for {', '.join(missing)}", stacklevel=2)
    shown = [m for m in modes if m in present]
    groups = result.groups()
    variants = [v for v in VARIANTS if any(k[0] == v for k in groups)]
    sizes = sorted({k[1] for k in groups})
    table = {}
    for v in variants:
        for n in sizes:
            table[(v, n)] = {m: groups[(v, n, m)]["median_tvd"]
                             for m in shown if (v, n, m) in groups}
    header = ["N"] + [f"{v[:4]}:{m.split('-')[0]}" for v in variants for m in shown]
    lines = ["  ".join(f"{h:>16}" for h in header)]
    for n in sizes:
        row = [str(n)]
        for v in variants:
            for m in shown:
                val = table.get((v, n), {}).get(m)
                row.append("-" if val is None else f"{val:.3f}")
        lines.append("  ".join(f"{x:>16}" for x in row))
    return table, "\n".join(lines)


def _atomic_write(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def cells_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in result.cells:
        w.writerow(c.row())
    return buf.getvalue()


def summary_json(result):
    groups = [{"variant": k[0], "N": k[1], "mode": k[2], **{s: round(x, 12) if isinstance(x, float)
                                                            else x for s, x in v.items()}}
              for k, v in result.groups().items()]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": result.config.to_dict(),
        "groups": groups,
        "failures": [{"variant": c.variant, "N": c.N, "marked": c.marked, "mode": c.mode,
                      "seed": c.seed, "error": c.error} for c in result.failures],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def bloch_csv(pairs):
    """Bloch-plane trajectories for ``(variant, N)`` pairs, marked element 0."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "N", "step", "polar", "azimuth", "x", "y", "z", "leakage"])
    for variant, n in pairs:
        spec = GroverSpec(int(n), (0,), variant)
        traj = bloch_trajectory(spec)
        for i, (pol, az, leak, xyz) in enumerate(zip(traj.polar, traj.azimuth, traj.leakage,
                                                     traj.cartesian())):
            w.writerow([variant, n, i, f"{pol:.10f}", f"{az:.10f}",
                        *(f"{x:.10f}" for x in xyz), f"{leak:.3e}"])
    return buf.getvalue()


def emit_outputs(result, out_dir, bloch_pairs=()):
    """Write ``cells.csv``, ``summary.json`` and ``bloch.csv`` into ``out_dir``.

    Each file is written to a temporary name and renamed into place.
    Returns the paths written.
    """
    out = Path(out_dir)
    paths = {"cells": out / "cells.csv", "summary": out / "summary.json",
             "bloch": out / "bloch.csv"}
    _atomic_write(paths["cells"], cells_csv(result))
    _atomic_write(paths["summary"], summary_json(result))
    _atomic_write(paths["bloch"], bloch_csv(bloch_pairs))
    return paths


def load_cells(path):
    """Read a cells CSV back into :class:`CellResult` rows."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [CellResult(r["variant"], int(r["N"]), int(r["marked"]), r["mode"], int(r["seed"]),
                           float(r["success"]), float(r["tvd"]),
                           int(r["shots"]) if r["shots"] else None) for r in reader]
