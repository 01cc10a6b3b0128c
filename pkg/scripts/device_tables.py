"""Write device-level tables (conductance levels, capacitance levels, read-disturb traces,
sampled time constants) as CSV, and optionally plot them with matplotlib.

    python3 scripts/device_tables.py --out results/devices [--plot]
"""

import argparse
from pathlib import Path

import numpy as np

from memrsnn.config import parse_config
from memrsnn.experiment import export_device_tables, seed_sequence, write_csv
from memrsnn.network import sample_tau_population


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results/devices")
    p.add_argument("--n", type=int, default=10_000, help="sampled neurons for the tau histogram")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="also save PNG figures (needs matplotlib)")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = parse_config({})
    paths = export_device_tables(cfg, out)

    net_cfg = cfg.network_config(64, cfg.conditions[-1], 1, 2)
    taus_ms = 1e3 * sample_tau_population(args.n, net_cfg, np.random.default_rng(seed_sequence(args.seed)))
    counts, edges = np.histogram(taus_ms, bins=20)
    rows = [{"bin_lo_ms": a, "bin_hi_ms": b, "count": int(c)} for a, b, c in zip(edges[:-1], edges[1:], counts)]
    write_csv(out / "tau_population.csv", ("bin_lo_ms", "bin_hi_ms", "count"), rows)
    paths.append(out / "tau_population.csv")
    for path in paths:
        print(path)

    if args.plot:
        import csv

        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with open(out / "read_disturb.csv") as f:
            trace = list(csv.DictReader(f))
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
        for level in sorted({r["level"] for r in trace}, key=int):
            sel = [r for r in trace if r["level"] == level]
            ax0.plot([int(r["pulse"]) for r in sel], [float(r["capacitance"]) for r in sel], label=f"L{level}")
        ax0.set_xlabel("read pulses")
        ax0.set_ylabel("capacitance (norm.)")
        ax0.legend(fontsize=7, ncol=2)
        ax1.bar(edges[:-1], counts, width=np.diff(edges), align="edge")
        ax1.set_xlabel("time constant (ms)")
        ax1.set_ylabel("neurons")
        fig.tight_layout()
        fig.savefig(out / "devices.png", dpi=150)
        print(out / "devices.png")


if __name__ == "__main__":
    main()
