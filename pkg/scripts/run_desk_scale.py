"""Train the desk-scale grid (64 hidden, 4 conditions, 5 seeds) and print the comparison.

    python3 scripts/run_desk_scale.py [--config configs/desk_scale_64.yaml] [--out DIR] [--jobs N]
"""

import argparse
import logging
import time
from pathlib import Path

from memrsnn.config import validate_config
from memrsnn.experiment import export_plot_data, run_grid

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=ROOT / "configs" / "desk_scale_64.yaml")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = validate_config(args.config)
    out = Path(args.out or cfg.output)
    t0 = time.perf_counter()
    summary = run_grid(cfg, out, jobs=args.jobs)
    export_plot_data(summary, out / "plots", cfg)
    rows = {r["condition"]: r for r in summary["summary"]}

    print(f"\n{'condition':>20s} {'test acc':>9s} {'sigma':>7s} {'valid acc':>9s}")
    for name, r in rows.items():
        print(f"{name:>20s} {r['acc_mean']:9.4f} {r['acc_std']:7.4f} {r['valid_acc_mean']:9.4f}")
    base, het = rows.get("no-memcap"), rows.get("memcap-het-trained")
    if base and het:
        print(f"\nhet+trained - baseline: {het['acc_mean'] - base['acc_mean']:+.4f}")
        print(f"sigma ratio het+trained / baseline: {het['acc_std'] / max(base['acc_std'], 1e-12):.3f}")
    print(f"wall time {time.perf_counter() - t0:.0f} s, results in {out}")


if __name__ == "__main__":
    main()
