"""Phenomenological models of the unified memory stack.

A device operates either as a memcapacitor (non-volatile capacitance states,
used for neuron and synapse time constants) or, after forming, as a memristor
(multi-level conductance, used for synaptic weights on a differential
crossbar). All quantities are in normalized units:

* capacitance: arbitrary units, anchored by ``DeviceCalibration.tau_per_capacitance``
  so the mid level of the nominal device maps to a 20 ms time constant;
* conductance: microsiemens; compliance current: microamperes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

# Measured read-disturb modulation never exceeds this fraction of the programmed state.
MAX_DISTURB_DEPTH = 0.05


class DeviceError(ValueError):
    """Invalid device parameter or operation."""


@dataclass(frozen=True)
class DeviceCalibration:
    tau_per_capacitance: float = 0.016  # seconds per capacitance unit
    g_per_current: float = 1.0  # uS per uA of SET compliance
    disturb_settle_pulses: int = 10
    disturb_depth: float = 0.05

    def __post_init__(self):
        if not self.tau_per_capacitance > 0:
            raise DeviceError("tau_per_capacitance must be > 0")
        if not self.g_per_current > 0:
            raise DeviceError("g_per_current must be > 0")
        if self.disturb_settle_pulses < 1:
            raise DeviceError("disturb_settle_pulses must be >= 1")
        if not 0 <= self.disturb_depth <= MAX_DISTURB_DEPTH:
            raise DeviceError(
                f"disturb_depth must lie in [0, {MAX_DISTURB_DEPTH}], got {self.disturb_depth}"
            )


@dataclass(frozen=True)
class MemcapacitorDevice:
    """A memcapacitor programmed to one of ``n_levels`` capacitance states."""

    c_low: float = 1.0
    c_high: float = 1.5
    level: int = 0
    n_levels: int = 8
    disturb_pulses_seen: int = 0

    def __post_init__(self):
        if not 0 < self.c_low < self.c_high:
            raise DeviceError(f"need 0 < c_low < c_high, got {self.c_low}, {self.c_high}")
        if self.n_levels < 2:
            raise DeviceError("n_levels must be >= 2")
        if not 0 <= self.level < self.n_levels:
            raise IndexError(f"level {self.level} outside [0, {self.n_levels - 1}]")
        if self.disturb_pulses_seen < 0:
            raise DeviceError("disturb_pulses_seen must be >= 0")

    @property
    def cmw_fraction(self) -> float:
        return (self.c_high - self.c_low) / self.c_high

    @property
    def level_fraction(self) -> float:
        return self.level / (self.n_levels - 1)

    @property
    def programmed_capacitance(self) -> float:
        return self.c_low + self.level * (self.c_high - self.c_low) / (self.n_levels - 1)

    def capacitance(self, calib: DeviceCalibration) -> float:
        """Capacitance after the read pulses seen since the last programming."""
        return float(disturb_trace(self, self.disturb_pulses_seen, calib)[-1])

    def read(self, n_pulses: int) -> "MemcapacitorDevice":
        return replace(self, disturb_pulses_seen=self.disturb_pulses_seen + int(n_pulses))


def sample_cmw_population(n: int, rng: np.random.Generator, lo: float, hi: float) -> np.ndarray:
    """Draw ``n`` capacitive-memory-window fractions i.i.d. uniform on [lo, hi]."""
    if n < 1:
        raise DeviceError(f"n must be >= 1, got {n}")
    if not (0 < lo < hi <= 1):
        raise DeviceError(f"CMW bounds must satisfy 0 < lo < hi <= 1, got lo={lo}, hi={hi}")
    return rng.uniform(lo, hi, size=n)


def program_capacitance(dev: MemcapacitorDevice, level: int) -> MemcapacitorDevice:
    if not 0 <= level < dev.n_levels:
        raise IndexError(f"level {level} outside [0, {dev.n_levels - 1}]")
    return replace(dev, level=int(level), disturb_pulses_seen=0)


def disturb_trace(dev: MemcapacitorDevice, n_pulses: int, calib: DeviceCalibration) -> np.ndarray:
    """Capacitance after 0..n_pulses read pulses, starting from the programmed value.

    The loss settles exponentially with ``disturb_settle_pulses`` and its asymptotic
    depth scales with the programmed level, so the lowest state is undisturbed.
    """
    if n_pulses < 0:
        raise DeviceError("n_pulses must be >= 0")
    c0 = dev.programmed_capacitance
    c_inf = c0 * (1.0 - calib.disturb_depth * dev.level_fraction)
    k = np.arange(n_pulses + 1, dtype=np.float64)
    trace = c_inf + (c0 - c_inf) * np.exp(-k / calib.disturb_settle_pulses)
    trace[0] = c0
    return trace


apply_read_disturb = disturb_trace


def tau_from_capacitance(c, calib: DeviceCalibration):
    """Time constant (s) set by capacitance ``c``; tau is proportional to C."""
    c_arr = np.asarray(c, dtype=np.float64)
    if np.any(~(c_arr > 0)):
        raise DeviceError("capacitance must be > 0")
    tau = calib.tau_per_capacitance * c_arr
    return float(tau) if tau.ndim == 0 else tau


def capacitance_from_cmw(cmw, cmw_center: float, c_ref: float = 1.25) -> np.ndarray:
    """Timing capacitance of devices whose windows are ``cmw``.

    The programmable part of a memcapacitor scales with its window, so a device
    population with spread-out windows spreads its capacitance proportionally
    around ``c_ref`` (the capacitance of a device at the window centre).
    """
    cmw = np.asarray(cmw, dtype=np.float64)
    if cmw_center <= 0 or c_ref <= 0:
        raise DeviceError("cmw_center and c_ref must be > 0")
    return c_ref * cmw / cmw_center


# --------------------------------------------------------------------------- memristors


def default_level_set(n_levels: int = 16, g_max: float = 40.0) -> np.ndarray:
    if n_levels < 2:
        raise DeviceError("n_levels must be >= 2")
    return np.linspace(0.0, g_max, n_levels)


def conductance_from_current(i_cc, calib: DeviceCalibration, level_set) -> np.ndarray:
    """Conductance reached by a SET with compliance current ``i_cc`` (uA).

    Linear compliance map followed by a snap to the nearest admissible level;
    ties go to the lower level.
    """
    i_cc = np.asarray(i_cc, dtype=np.float64)
    if np.any(i_cc < 0) or not np.all(np.isfinite(i_cc)):
        raise DeviceError("compliance current must be finite and >= 0")
    levels = np.asarray(level_set, dtype=np.float64)
    g_lin = calib.g_per_current * i_cc
    idx = np.abs(g_lin[..., None] - levels).argmin(axis=-1)
    g = levels[idx]
    return float(g) if g.ndim == 0 else g


def quantize_weights(
    w, n_levels: Optional[int], g_max: float, w_scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Map real weights onto a differential conductance pair.

    ``n_levels`` is the number of levels per polarity (including 0). ``None``
    disables quantization and returns the exact (clipped) analog conductances.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise DeviceError("weights must be finite")
    if n_levels is not None and n_levels < 2:
        raise DeviceError("n_levels must be >= 2")
    if not (g_max > 0 and w_scale > 0):
        raise DeviceError("g_max and w_scale must be > 0")
    mag = np.minimum(np.abs(w), w_scale) / w_scale
    if n_levels is not None:
        step = n_levels - 1
        mag = np.rint(mag * step) / step
    g = mag * g_max
    pos = w > 0
    g_plus = np.where(pos, g, 0.0)
    g_minus = np.where(pos, 0.0, g)
    return g_plus, g_minus


def reconstruct_weights(g_plus, g_minus, g_max: float, w_scale: float) -> np.ndarray:
    return (np.asarray(g_plus) - np.asarray(g_minus)) * (w_scale / g_max)


def apply_cycle_noise(g, sigma_c2c: float, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative Gaussian cycle-to-cycle noise, clamped at zero conductance."""
    if sigma_c2c < 0:
        raise DeviceError("sigma_c2c must be >= 0")
    g = np.asarray(g, dtype=np.float64)
    if sigma_c2c == 0:
        return g.copy()
    eps = rng.standard_normal(g.shape)
    return np.maximum(g * (1.0 + sigma_c2c * eps), 0.0)


@dataclass
class MemristorPair:
    """Differential conductance pair storing a weight matrix on a crossbar."""

    g_plus: np.ndarray
    g_minus: np.ndarray
    level_set: np.ndarray = field(default_factory=default_level_set)
    sigma_c2c: float = 0.05

    @classmethod
    def from_weights(cls, w, n_levels: int = 16, g_max: float = 40.0, w_scale: float = 1.0,
                     sigma_c2c: float = 0.05) -> "MemristorPair":
        gp, gm = quantize_weights(w, n_levels, g_max, w_scale)
        return cls(gp, gm, default_level_set(n_levels, g_max), sigma_c2c)

    def read(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """One noisy read of both devices of every pair."""
        return (apply_cycle_noise(self.g_plus, self.sigma_c2c, rng),
                apply_cycle_noise(self.g_minus, self.sigma_c2c, rng))
