"""Convert a Spiking Heidelberg Digits HDF5 file to the .evd event format.

    python3 scripts/shd_to_evd.py shd_train.h5 shd_train.evd [--duration-ms 1400]

The HDF5 file holds ragged per-sample arrays ``spikes/times`` (seconds) and
``spikes/units`` (0..699) plus ``labels`` (0..19). Times are rounded to whole
microseconds; events past the duration are dropped. Requires h5py.
"""

import argparse

import numpy as np

from memrsnn.datasets import EventDataset, EventSample, save_events


def convert(src, duration_us=None, n_channels=700, n_classes=20):
    import h5py

    samples = []
    with h5py.File(src, "r") as f:
        times, units, labels = f["spikes"]["times"], f["spikes"]["units"], f["labels"]
        for t, u, y in zip(times, units, labels):
            t_us = np.rint(np.asarray(t, dtype=np.float64) * 1e6).astype(np.uint64)
            u = np.asarray(u, dtype=np.uint32)
            dur = int(t_us.max()) + 1 if duration_us is None and len(t_us) else int(duration_us or 1)
            keep = t_us <= dur
            order = np.argsort(t_us[keep], kind="stable")
            samples.append(EventSample(t_us[keep][order], u[keep][order], int(y), dur))
    return EventDataset(samples, n_channels, n_classes, name="shd")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--duration-ms", type=float, default=None,
                   help="fixed sample duration; default is each sample's last event")
    args = p.parse_args()
    dur = None if args.duration_ms is None else round(args.duration_ms * 1e3)
    ds = convert(args.src, dur)
    save_events(ds, args.dst)
    print(f"{len(ds)} samples, {sum(len(s) for s in ds.samples)} events -> {args.dst}")


if __name__ == "__main__":
    main()
