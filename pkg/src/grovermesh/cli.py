"""Command-line entry point: ``grovermesh <command> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 when a
campaign finished with failed cells (partial results are still written).
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .calibration.clearbox import clearbox_train, generate_training_set
from .calibration.metrics import tvd
from .calibration.sequential import HardwareEvaluator, SequentialOptimiser
from .campaign import (
    MODES,
    CampaignConfig,
    CampaignResult,
    ConfigError,
    _circuit,
    _Device,
    emit_outputs,
    load_cells,
    read_config_file,
    run_campaign,
    run_cell,
    summarize_tvd,
)
from .exceptions import GroverMeshError
from .grover import VARIANTS, GroverSpec, optimal_iterations, schedule_for

OUT_ENV = "GROVERMESH_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3


def _default_out():
    return os.environ.get(OUT_ENV, "grovermesh-out")


def _add_common(p, sizes_default="4-10"):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--modes", type=int, dest="mesh_modes", help="device mode count (12 or 20)")
    p.add_argument("--sizes", help=f"database sizes, e.g. 4-10 or 4,6,8 (default {sizes_default})")
    p.add_argument("--variant", help="original, deterministic or a comma list")
    p.add_argument("--mode", help=f"pipeline(s): {', '.join(MODES)}")
    p.add_argument("--seed", help="hardware seed(s)")
    p.add_argument("--shots", help="photons per distribution, or 'exact'")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./grovermesh-out)")


def _config(args, **defaults):
    values = read_config_file(args.config) if args.config else {}
    for key, attr in (("mesh_modes", "mesh_modes"), ("sizes", "sizes"), ("variant", "variant"),
                      ("mode", "mode"), ("seed", "seed"), ("shots", "shots")):
        val = getattr(args, attr, None)
        if val is not None:
            values[key] = str(val)
    base = CampaignConfig(**defaults)
    return CampaignConfig.from_mapping(values, base=base)


def _out_dir(args):
    return Path(args.out or _default_out())


def cmd_solve(args):
    cfg = _config(args)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["variant", "N", "kappa", "iterations", "phase_a", "phase_b", "residual", "success"])
    for variant in cfg.variants:
        for n in cfg.sizes:
            spec = GroverSpec(n, (0,), variant)
            sched = schedule_for(spec)
            _, u, _ = _circuit(n, 0, variant)
            w.writerow([variant, n, optimal_iterations(spec), sched.iteration_count,
                        f"{sched.phase_a:.12f}", f"{sched.phase_b:.12f}",
                        f"{sched.residual:.3e}", f"{abs(u[0, 0]) ** 2:.12f}"])
    return EXIT_OK


def cmd_simulate(args):
    cfg = _config(args, sizes=(8,), variants=("deterministic",), modes=("naive-imperfect",))
    n, variant, mode, seed = cfg.sizes[0], cfg.variants[0], cfg.modes[0], cfg.seeds[0]
    if not 0 <= args.marked < n:
        raise ConfigError(f"marked element {args.marked} outside [0, {n})")
    dist, target = run_cell(_Device(cfg, seed), variant, n, args.marked, mode)
    print(f"variant={variant} N={n} marked={args.marked} mode={mode} seed={seed}")
    print(f"success={dist[args.marked]:.6f} tvd={tvd(dist, target):.6f}")
    print("distribution=" + " ".join(f"{p:.5f}" for p in dist))
    return EXIT_OK


def cmd_calibrate(args):
    cfg = _config(args, sizes=(8,), variants=("deterministic",))
    n, seed = cfg.sizes[0], cfg.seeds[0]
    device = _Device(cfg, seed)
    hw = device.submesh(n)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.strategy == "clearbox":
        data = generate_training_set(hw, cfg.training_samples, cfg.shots, seed=seed)
        model = clearbox_train(data, hw, random_state=seed)
        model.save(out / f"clearbox_N{n}_seed{seed}.json")
        model.history_to_csv(out / f"clearbox_N{n}_seed{seed}_loss.csv")
        print(f"trained {model.n_epochs_} epochs, final loss {model.final_loss_:.3e}")
        return EXIT_OK
    variant = cfg.variants[0]
    _, u, program = _circuit(n, args.marked, variant)
    target = np.abs(u[:, 0]) ** 2
    opt = SequentialOptimiser().fit(program, HardwareEvaluator(hw, cfg.shots, seed=seed), target)
    opt.trace_.to_csv(out / f"sequential_{variant}_N{n}_m{args.marked}_seed{seed}.csv")
    print(f"TVD {opt.tvd_initial_:.4f} -> {opt.tvd_final_:.4f} "
          f"({len(opt.trace_)} accepted steps, {opt.trace_.evaluations} evaluations)")
    return EXIT_OK


def _bloch_pairs(text, cfg):
    if not text:
        return [(v, n) for v in cfg.variants for n in cfg.sizes]
    pairs = []
    for item in text.split(","):
        variant, _, n = item.partition(":")
        if variant not in VARIANTS or not n.isdigit():
            raise ConfigError(f"bad Bloch pair {item!r}; expected variant:N")
        pairs.append((variant, int(n)))
    return pairs


def cmd_campaign(args):
    cfg = _config(args)
    pairs = _bloch_pairs(args.bloch, cfg)
    done = [0]
    total = cfg.n_cells()

    def progress(cell):
        done[0] += 1
        if args.verbose:
            print(f"[{done[0]}/{total}] {cell.variant} N={cell.N} m={cell.marked} {cell.mode} "
                  f"success={cell.success:.4f}", file=sys.stderr)

    result = run_campaign(cfg, progress=progress)
    paths = emit_outputs(result, _out_dir(args), pairs)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    if result.failures:
        print(f"{len(result.failures)} of {len(result.cells)} cells failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args):
    path = Path(args.cells) if args.cells else _out_dir(args) / "cells.csv"
    if not path.exists():
        raise ConfigError(f"no results at {path}")
    cells = load_cells(path)
    result = CampaignResult(CampaignConfig(), cells)
    print(f"{'variant':>14} {'N':>3} {'mode':>22} {'mean':>8} {'std':>8} {'median TVD':>11}")
    for (variant, n, mode), g in result.groups().items():
        print(f"{variant:>14} {n:>3} {mode:>22} {g['mean_success']:8.4f} "
              f"{g['std_success']:8.4f} {g['median_tvd']:11.4f}")
    modes = {c.mode for c in cells}
    if {"naive-imperfect", "sequential-optimised"} <= modes:
        print()
        print(summarize_tvd(result)[1])
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="grovermesh",
                                     description="Grover search on simulated photonic meshes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="print iteration schedules")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run a single campaign cell")
    _add_common(p, sizes_default="8")
    p.add_argument("--marked", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run one calibration strategy")
    _add_common(p, sizes_default="8")
    p.add_argument("--strategy", choices=("sequential", "clearbox"), default="clearbox")
    p.add_argument("--marked", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("campaign", help="run a full campaign and write CSV/JSON outputs")
    _add_common(p)
    p.add_argument("--bloch", help="variant:N pairs for trajectory output, comma separated")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("report", help="summarise a cells CSV")
    p.add_argument("cells", nargs="?", help="path to cells.csv (default <out>/cells.csv)")
    p.add_argument("--out", help="directory holding cells.csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GroverMeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
