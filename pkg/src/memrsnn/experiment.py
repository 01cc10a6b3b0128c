"""Experiment grid: network size x condition x seed.

Each cell builds a network, trains it, evaluates it on the held-out split over
several device-noise draws and writes its own metrics and checkpoint. The
summary aggregates seed-level accuracies per (condition, size).
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import devices
from .checkpoint import save_network
from .config import Condition, ExperimentConfig, to_dict
from .datasets import EventDataset, generate_synthetic, load_events, split_dataset, to_arrays
from .network import build_rsnn, effective_tau
from .training import METRIC_COLUMNS, evaluate, train

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("condition", "size", "n_seeds", "acc_mean", "acc_std", "valid_acc_mean")
RUN_COLUMNS = ("condition", "size", "seed", "best_valid_acc", "test_acc_mean", "test_acc_noise_std")
ACCURACY_COLUMNS = ("condition", "size", "acc_mean", "acc_std")
TAU_HIST_COLUMNS = ("condition", "size", "kind", "bin_lo_ms", "bin_hi_ms", "count")


class RunFailure(RuntimeError):
    pass


def seed_sequence(seed: int) -> np.random.SeedSequence:
    """Seeds are opaque integers; negative values map through two's complement."""
    return np.random.SeedSequence(int(seed) % 2**64)


def load_dataset(cfg: ExperimentConfig) -> EventDataset:
    d = cfg.dataset
    if d.kind == "evd":
        return load_events(d.path)
    return generate_synthetic(d.n_classes, d.n_channels, d.T, d.samples_per_class, d.jitter,
                              np.random.default_rng(seed_sequence(d.seed)), d.dt, d.noise_fraction,
                              d.spikes_per_channel, d.min_gap, d.class_spread)


def prepare_splits(cfg: ExperimentConfig):
    """Binned (train, valid, test) arrays; test falls back to valid when test_fraction is 0."""
    ds = load_dataset(cfg)
    d = cfg.dataset
    split_rng = np.random.default_rng(seed_sequence(d.seed).spawn(1)[0])
    tr, va, te = split_dataset(ds, [d.valid_fraction, d.test_fraction], split_rng)
    T = d.T if d.kind == "synthetic" else None
    arrays = [to_arrays(part, d.dt, T) for part in (tr, va, te)]
    if len(te) == 0:
        arrays[2] = arrays[1]
    return ds.n_channels, ds.n_classes, arrays


@dataclass
class RunResult:
    condition: str
    size: int
    seed: int
    best_valid_acc: float
    test_acc_mean: float
    test_acc_noise_std: float
    metrics: list
    tau_mem: list
    tau_syn: list

    def row(self) -> dict:
        return {k: getattr(self, k) for k in RUN_COLUMNS}


def run_dir(out: Path, cond: Condition, size: int, seed: int) -> Path:
    return out / "runs" / f"{cond.label}_h{size}_seed{seed}"


def run_one(cfg: ExperimentConfig, size: int, cond: Condition, seed: int, splits,
            out: Optional[Path] = None) -> RunResult:
    n_in, n_out, (train_xy, valid_xy, test_xy) = splits
    init_ss, train_ss, eval_ss = seed_sequence(seed).spawn(3)
    net = build_rsnn(cfg.network_config(size, cond, n_in, n_out), np.random.default_rng(init_ss))
    tcfg = replace(cfg.train, seed=int(train_ss.generate_state(1)[0]))
    best, metrics = train(net, train_xy, valid_xy, tcfg)
    acc_mean, acc_std = evaluate(best, test_xy, cfg.eval_noise_draws, np.random.default_rng(eval_ss))
    if metrics:
        best_valid = max(r["valid_acc_mean"] for r in metrics)
    else:
        best_valid = evaluate(best, valid_xy, cfg.train.valid_noise_draws, np.random.default_rng(eval_ss))[0]
    tau_mem, tau_syn = (np.broadcast_to(t, (size,)) for t in effective_tau(best.tau))
    result = RunResult(cond.label, size, seed, best_valid, acc_mean, acc_std, metrics,
                       [float(t) for t in tau_mem], [float(t) for t in tau_syn])
    if out is not None:
        d = run_dir(out, cond, size, seed)
        d.mkdir(parents=True, exist_ok=True)
        write_csv(d / "metrics.csv", METRIC_COLUMNS, metrics)
        save_network(best, d / "model.mcrsnn")
    return result


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def grid_cells(cfg: ExperimentConfig, seed_offset: int = 0):
    """Sizes outer, conditions inner, seeds innermost."""
    return [(int(size), cond, int(seed) + seed_offset)
            for size in cfg.sizes for cond in cfg.conditions for seed in cfg.seeds]


def summarize(results: list[RunResult], cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for size in cfg.sizes:
        for cond in cfg.conditions:
            accs = [r.test_acc_mean for r in results if r.size == size and r.condition == cond.label]
            valid = [r.best_valid_acc for r in results if r.size == size and r.condition == cond.label]
            if not accs:
                continue
            rows.append({"condition": cond.label, "size": int(size), "n_seeds": len(accs),
                         "acc_mean": float(np.mean(accs)), "acc_std": seed_std(accs),
                         "valid_acc_mean": float(np.mean(valid))})
    return rows


def seed_std(values) -> float:
    """Sample standard deviation across seeds; 0 for a single seed."""
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _run_cell(args):
    cfg, size, cond, seed, splits, out = args
    return run_one(cfg, size, cond, seed, splits, out)


def run_grid(cfg: ExperimentConfig, out: Optional[Path] = None, jobs: int = 1,
             seed_offset: int = 0) -> dict:
    """Run every grid cell and write the reports; raises RunFailure after writing a partial manifest."""
    out = Path(out if out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    cells = grid_cells(cfg, seed_offset)
    results: list[RunResult] = []
    try:
        splits = prepare_splits(cfg)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for res in pool.map(_run_cell, [(cfg, s, c, k, splits, out) for s, c, k in cells]):
                    results.append(res)
                    log.info("done %s h=%d seed=%d acc=%.4f", res.condition, res.size, res.seed, res.test_acc_mean)
        else:
            for size, cond, seed in cells:
                res = run_one(cfg, size, cond, seed, splits, out)
                results.append(res)
                log.info("done %s h=%d seed=%d acc=%.4f", res.condition, res.size, res.seed, res.test_acc_mean)
    except Exception as e:
        manifest = {"status": "failed", "error": f"{type(e).__name__}: {e}",
                    "completed": [r.row() for r in results], "n_cells": len(cells)}
        (out / "partial_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        raise RunFailure(str(e)) from e

    summary_rows = summarize(results, cfg)
    write_csv(out / "runs.csv", RUN_COLUMNS, [r.row() for r in results])
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary_rows)
    summary = {"config": to_dict(cfg), "seed_offset": seed_offset, "summary": summary_rows,
               "runs": [vars(r) for r in results]}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


# --------------------------------------------------------------------------- plot data


def export_plot_data(summary: Optional[dict], out: Path, cfg: Optional[ExperimentConfig] = None,
                     n_bins: int = 20) -> list[Path]:
    """Plot-ready CSVs: accuracy bars, time-constant histograms and device tables."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = summary or {}
    rows = summary.get("summary", [])
    runs = summary.get("runs", [])
    paths = []

    p = out / "accuracy_bars.csv"
    write_csv(p, ACCURACY_COLUMNS, rows)
    paths.append(p)

    hist_rows = []
    for cond in dict.fromkeys(r["condition"] for r in runs):
        for size in dict.fromkeys(r["size"] for r in runs if r["condition"] == cond):
            sel = [r for r in runs if r["condition"] == cond and r["size"] == size]
            for kind in ("tau_mem", "tau_syn"):
                vals = 1e3 * np.concatenate([r[kind] for r in sel])
                lo, hi = float(vals.min()), float(vals.max())
                if hi - lo < 1e-9:
                    lo, hi = lo - 0.5, hi + 0.5
                counts, edges = np.histogram(vals, bins=n_bins, range=(lo, hi))
                for c, a, b in zip(counts, edges[:-1], edges[1:]):
                    hist_rows.append({"condition": cond, "size": size, "kind": kind,
                                      "bin_lo_ms": a, "bin_hi_ms": b, "count": int(c)})
    p = out / "tau_histogram.csv"
    write_csv(p, TAU_HIST_COLUMNS, hist_rows)
    paths.append(p)

    paths.extend(export_device_tables(cfg, out, empty=not rows))
    return paths


def export_device_tables(cfg: Optional[ExperimentConfig], out: Path, empty: bool = False) -> list[Path]:
    cond_rows, cap_rows, disturb_rows = [], [], []
    if cfg is not None and not empty:
        cal, cb, mc = cfg.calibration, cfg.crossbar, cfg.memcapacitor
        levels = devices.default_level_set(cb.n_levels or 16, cb.g_max)
        for k, g in enumerate(levels):
            i_cc = g / cal.g_per_current
            cond_rows.append({"level": k, "i_cc_uA": i_cc,
                              "g_uS": devices.conductance_from_current(i_cc, cal, levels)})
        base = devices.MemcapacitorDevice(mc.c_low, mc.c_high, 0, mc.n_levels)
        for level in range(mc.n_levels):
            dev = devices.program_capacitance(base, level)
            trace = devices.apply_read_disturb(dev, 5 * cal.disturb_settle_pulses, cal)
            cap_rows.append({"level": level, "c_programmed": trace[0],
                             "c_settled": trace[-1],
                             "tau_ms": 1e3 * devices.tau_from_capacitance(trace[0], cal)})
            for n, c in enumerate(trace):
                disturb_rows.append({"level": level, "pulse": n, "capacitance": c})
    specs = [("device_conductance.csv", ("level", "i_cc_uA", "g_uS"), cond_rows),
             ("device_capacitance.csv", ("level", "c_programmed", "c_settled", "tau_ms"), cap_rows),
             ("read_disturb.csv", ("level", "pulse", "capacitance"), disturb_rows)]
    paths = []
    for name, cols, rows in specs:
        write_csv(out / name, cols, rows)
        paths.append(out / name)
    return paths
