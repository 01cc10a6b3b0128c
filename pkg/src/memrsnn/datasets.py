"""Labeled spike-event datasets: the ``.evd`` container, binning, and a synthetic
timing-only classification task.

``.evd`` layout (all little-endian)::

    b"EVD1"
    u32 n_channels, u32 n_classes, u64 n_samples
    per sample: u64 n_events, u32 label, u64 duration_us,
                n_events x (u64 time_us, u32 channel)
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .network import SpikeRaster

MAGIC = b"EVD1"
_HEADER = struct.Struct("<IIQ")
_SAMPLE = struct.Struct("<QIQ")
EVENT_DTYPE = np.dtype([("time_us", "<u8"), ("channel", "<u4")])  # packed, 12 bytes


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass
class EventSample:
    times: np.ndarray  # uint64 microseconds, sorted
    channels: np.ndarray  # uint32
    label: int
    duration: int  # microseconds

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.uint64)
        self.channels = np.asarray(self.channels, dtype=np.uint32)
        if self.times.shape != self.channels.shape or self.times.ndim != 1:
            raise DataError("times and channels must be 1-d and equally long")

    def __eq__(self, other):
        if not isinstance(other, EventSample):
            return NotImplemented
        return (self.label == other.label and self.duration == other.duration
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.channels, other.channels))

    def __len__(self):
        return len(self.times)


@dataclass
class EventDataset:
    samples: list
    n_channels: int
    n_classes: int
    name: str = field(default="", compare=False)

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def validate(self) -> None:
        for k, s in enumerate(self.samples):
            _check_sample(s, self.n_channels, self.n_classes, where=f"sample {k}")

    def subset(self, idx) -> "EventDataset":
        return EventDataset([self.samples[i] for i in idx], self.n_channels, self.n_classes, self.name)


def _check_sample(s: EventSample, n_channels: int, n_classes: int, where: str) -> None:
    if not 0 <= s.label < n_classes:
        raise DataError(f"{where}: label {s.label} outside [0, {n_classes - 1}]")
    if len(s):
        if s.channels.max() >= n_channels:
            raise DataError(f"{where}: channel {int(s.channels.max())} >= n_channels={n_channels}")
        if s.times.max() > s.duration:
            raise DataError(f"{where}: event time beyond duration {s.duration}")
        if np.any(np.diff(s.times.astype(np.int64)) < 0):
            raise DataError(f"{where}: events not time-sorted")


# --------------------------------------------------------------------------- binning


def dt_to_us(dt: float) -> int:
    dt_us = round(dt * 1e6)
    if dt_us < 1 or abs(dt * 1e6 - dt_us) > 1e-6:
        raise DataError(f"dt must be a positive whole number of microseconds, got {dt} s")
    return dt_us


def bin_events(sample: EventSample, dt: float, T: int, n_channels: int) -> SpikeRaster:
    """Binary raster: cell (t, c) is 1 iff channel c fired in [t*dt, (t+1)*dt)."""
    if T < 1:
        raise DataError("T must be >= 1")
    dt_us = dt_to_us(dt)
    if len(sample) and sample.channels.max() >= n_channels:
        raise DataError(f"channel {int(sample.channels.max())} >= n_channels={n_channels}")
    raster = np.zeros((T, n_channels), dtype=np.float64)
    bins = sample.times // np.uint64(dt_us)
    keep = bins < T
    raster[bins[keep].astype(np.intp), sample.channels[keep].astype(np.intp)] = 1.0
    return SpikeRaster(raster, dt, sample.label)


def n_bins(ds: EventDataset, dt: float) -> int:
    dt_us = dt_to_us(dt)
    longest = max((s.duration for s in ds.samples), default=dt_us)
    return max(1, math.ceil(longest / dt_us))


def to_arrays(ds: EventDataset, dt: float, T: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Dense rasters (N, T, n_channels) and labels (N,)."""
    T = n_bins(ds, dt) if T is None else T
    x = np.zeros((len(ds), T, ds.n_channels))
    for k, s in enumerate(ds.samples):
        x[k] = bin_events(s, dt, T, ds.n_channels).data
    return x, ds.labels


# --------------------------------------------------------------------------- synthetic task


def generate_synthetic(
    n_classes: int = 4,
    n_channels: int = 32,
    T: int = 100,
    samples_per_class: int = 200,
    jitter: float = 3.0,
    rng: Optional[np.random.Generator] = None,
    dt: float = 1e-3,
    noise_fraction: float = 0.05,
    spikes_per_channel: int = 1,
    min_gap: float = 10.0,
    class_spread: Optional[float] = None,
) -> EventDataset:
    """Timing-only classification task.

    Every class is a random spatiotemporal template in which each channel fires
    exactly ``spikes_per_channel`` times, so per-channel spike counts carry no
    class information. Samples jitter each template spike by a Gaussian of
    ``jitter`` steps, drop each spike with probability ``noise_fraction`` and add
    a Poisson number of spurious spikes (mean ``noise_fraction`` of the template
    size) at uniformly random times and channels. ``min_gap`` (steps) separates
    spikes of one channel within a template.

    With ``class_spread`` set, templates are not independent: every class shifts
    each spike of one shared base pattern by a Gaussian offset of that many steps,
    which makes classes differ only by fine relative timing.
    """
    if n_classes < 2:
        raise DataError("n_classes must be >= 2")
    if n_channels < n_classes:
        raise DataError("n_channels must be >= n_classes")
    if T < 1 or samples_per_class < 0 or jitter < 0 or not 0 <= noise_fraction < 1:
        raise DataError("invalid synthetic task parameters")
    if spikes_per_channel < 1 or (spikes_per_channel - 1) * min_gap >= T:
        raise DataError(
            f"cannot place {spikes_per_channel} spikes per channel {min_gap} steps apart in {T} steps"
        )
    rng = np.random.default_rng() if rng is None else rng
    dt_us = dt_to_us(dt)
    duration = T * dt_us

    if class_spread is None:
        templates = [_template(n_channels, T, spikes_per_channel, min_gap, rng) for _ in range(n_classes)]
    else:
        base_t, base_c = _template(n_channels, T, spikes_per_channel, min_gap, rng)
        templates = [(np.clip(base_t + class_spread * rng.standard_normal(len(base_t)), 0, T), base_c)
                     for _ in range(n_classes)]
    samples = []
    for label, (t_steps, chans) in enumerate(templates):
        for _ in range(samples_per_class):
            keep = rng.random(len(t_steps)) >= noise_fraction
            t = t_steps[keep] + jitter * rng.standard_normal(int(keep.sum()))
            c = chans[keep]
            n_spur = rng.poisson(noise_fraction * len(t_steps))
            t = np.concatenate([t, rng.uniform(0, T, n_spur)])
            c = np.concatenate([c, rng.integers(0, n_channels, n_spur)])
            t_us = np.clip(np.rint(t * dt_us), 0, duration - 1).astype(np.uint64)
            order = np.lexsort((c, t_us))
            samples.append(EventSample(t_us[order], c[order], label, duration))
    return EventDataset(samples, n_channels, n_classes, name="synthetic")


def _template(n_channels, T, k, min_gap, rng):
    times, chans = [], []
    for ch in range(n_channels):
        # k ordered gaps of at least min_gap fit in T steps
        slack = T - (k - 1) * min_gap
        t = np.sort(rng.uniform(0, slack, k)) + min_gap * np.arange(k)
        times.append(t)
        chans.append(np.full(k, ch))
    return np.concatenate(times), np.concatenate(chans)


def split_dataset(ds: EventDataset, fractions: Sequence[float],
                  rng: np.random.Generator) -> list[EventDataset]:
    """Stratified split into ``len(fractions) + 1`` parts; the last takes the remainder."""
    if any(f < 0 for f in fractions) or sum(fractions) >= 1:
        raise DataError("split fractions must be >= 0 and sum below 1")
    labels = ds.labels
    parts = [[] for _ in range(len(fractions) + 1)]
    for c in range(ds.n_classes):
        idx = rng.permutation(np.flatnonzero(labels == c))
        start = 0
        for j, f in enumerate(fractions):
            n = int(round(f * len(idx)))
            parts[j + 1].extend(idx[start:start + n])
            start += n
        parts[0].extend(idx[start:])
    return [ds.subset(sorted(p)) for p in parts]


# --------------------------------------------------------------------------- .evd I/O


def save_events(ds: EventDataset, path) -> None:
    ds.validate()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(ds.n_channels, ds.n_classes, len(ds)))
        for s in ds.samples:
            f.write(_SAMPLE.pack(len(s), s.label, s.duration))
            rec = np.empty(len(s), dtype=EVENT_DTYPE)
            rec["time_us"] = s.times
            rec["channel"] = s.channels
            f.write(rec.tobytes())


def load_events(path) -> EventDataset:
    """Parse an ``.evd`` file; any defect raises ParseError and nothing is returned."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ParseError("bad magic bytes, not an .evd file", 0)
    off = 4
    if len(buf) < off + _HEADER.size:
        raise ParseError("truncated header", off)
    n_channels, n_classes, n_samples = _HEADER.unpack_from(buf, off)
    off += _HEADER.size
    samples = []
    for k in range(n_samples):
        if len(buf) < off + _SAMPLE.size:
            raise ParseError(f"truncated record header of sample {k}", off)
        n_ev, label, duration = _SAMPLE.unpack_from(buf, off)
        start = off
        off += _SAMPLE.size
        nbytes = n_ev * EVENT_DTYPE.itemsize
        if len(buf) < off + nbytes:
            raise ParseError(f"truncated events of sample {k}", off)
        rec = np.frombuffer(buf, dtype=EVENT_DTYPE, count=n_ev, offset=off)
        off += nbytes
        s = EventSample(rec["time_us"].copy(), rec["channel"].copy(), label, duration)
        try:
            _check_sample(s, n_channels, n_classes, where=f"sample {k}")
        except DataError as e:
            raise ParseError(str(e), start) from None
        samples.append(s)
    if off != len(buf):
        raise ParseError("trailing bytes after last sample", off)
    return EventDataset(samples, n_channels, n_classes, name=Path(path).stem)
