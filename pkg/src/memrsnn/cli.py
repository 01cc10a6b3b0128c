"""Command line entry point: ``memrsnn {run,validate,export,devices}``.

Exit codes: 0 success, 1 configuration error, 2 run failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import devices
from .config import ConfigError, ExperimentConfig, dump_config, parse_config, validate_config
from .experiment import RunFailure, export_plot_data, grid_cells, run_grid, seed_sequence
from .network import sample_tau_population

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


def _load(path) -> ExperimentConfig:
    return validate_config(path) if path else parse_config({})


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args.config)
    out = Path(args.out or cfg.output)
    if args.dry_run:
        sys.stdout.write(dump_config(cfg))
        print(f"# grid: {len(grid_cells(cfg, args.seed_offset))} runs -> {out}")
        for size, cond, seed in grid_cells(cfg, args.seed_offset):
            print(f"size={size} condition={cond.label} seed={seed}")
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(dump_config(cfg))
    try:
        summary = run_grid(cfg, out, jobs=args.jobs, seed_offset=args.seed_offset)
    except RunFailure as e:
        print(f"run failed: {e}; completed runs listed in {out / 'partial_manifest.json'}", file=sys.stderr)
        return EXIT_RUN
    export_plot_data(summary, out / "plots", cfg)
    for row in summary["summary"]:
        print(f"{row['condition']:>20s}  h={row['size']:<4d} acc={row['acc_mean']:.4f} +/- {row['acc_std']:.4f}")
    return EXIT_OK


def cmd_export(args) -> int:
    src = Path(args.summary)
    if src.is_dir():
        src = src / "summary.json"
    summary = json.loads(src.read_text())
    cfg = parse_config(summary["config"]) if "config" in summary else None
    out = Path(args.out) if args.out else src.parent / "plots"
    for p in export_plot_data(summary, out, cfg):
        print(p)
    return EXIT_OK


def cmd_devices(args) -> int:
    cfg = _load(args.config)
    net_cfg = cfg.network_config(cfg.sizes[0], cfg.conditions[-1], cfg.dataset.n_channels, cfg.dataset.n_classes)
    rng = np.random.default_rng(seed_sequence(args.seed))
    lo, hi = net_cfg.cmw_bounds
    cmw = devices.sample_cmw_population(args.n, rng, lo, hi)
    taus = sample_tau_population(args.n, net_cfg, rng)
    print(f"CMW fractions ~ U[{lo:.3f}, {hi:.3f}] (n={args.n}): "
          f"mean={cmw.mean():.4f} min={cmw.min():.4f} max={cmw.max():.4f}")
    print(f"time constants (ms): mean={1e3 * taus.mean():.3f} min={1e3 * taus.min():.3f} "
          f"max={1e3 * taus.max():.3f}")
    mc, cal = cfg.memcapacitor, cfg.calibration
    base = devices.MemcapacitorDevice(mc.c_low, mc.c_high, 0, mc.n_levels)
    print("capacitance levels (programmed -> after 10 read pulses, tau ms):")
    for level in range(mc.n_levels):
        trace = devices.apply_read_disturb(devices.program_capacitance(base, level), 10, cal)
        print(f"  L{level}: {trace[0]:.4f} -> {trace[-1]:.4f}  "
              f"tau={1e3 * devices.tau_from_capacitance(trace[0], cal):.3f}")
    levels = devices.default_level_set(cfg.crossbar.n_levels or 16, cfg.crossbar.g_max)
    print("conductance levels (uS): " + " ".join(f"{g:.2f}" for g in levels))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memrsnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate the experiment grid")
    r.add_argument("config", nargs="?")
    r.add_argument("--out", help="output directory (overrides config 'output')")
    r.add_argument("--jobs", type=int, default=1, help="grid cells run in parallel")
    r.add_argument("--seed-offset", type=int, default=0, help="added to every seed")
    r.add_argument("--dry-run", action="store_true", help="validate and print the grid, do not train")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config and echo it with defaults filled in")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("export", help="write plot-ready CSVs from a summary")
    e.add_argument("summary", help="summary.json or the run output directory")
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)

    d = sub.add_parser("devices", help="print sampled device populations")
    d.add_argument("config", nargs="?")
    d.add_argument("--n", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_devices)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
