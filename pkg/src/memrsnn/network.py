"""Recurrent spiking network whose weights live on a memristor crossbar and whose
time constants are set by memcapacitors.

Topology: input projection -> one recurrent layer of DPI synapses feeding LIF
neurons -> non-spiking leaky readout. Arrays inside the simulator are
time-major, ``(T, batch, units)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import devices
from .devices import DeviceCalibration
from .neuron import ShapeError, decay_factor, heaviside, soft_spike, soft_spike_grad, surrogate_grad


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CrossbarConfig:
    """How weights are mapped to memristor pairs."""

    n_levels: Optional[int] = 16  # per polarity; None disables quantization
    g_max: float = 40.0  # uS
    w_scale: Optional[float] = None  # None: each matrix uses its own max |w| as full scale
    sigma_c2c: float = 0.05
    noise_in: bool = True
    noise_rec: bool = True
    noise_out: bool = True
    freeze_noise: bool = False  # one noise draw per epoch instead of per forward pass

    def __post_init__(self):
        if self.n_levels is not None and self.n_levels < 2:
            raise ConfigError("crossbar.n_levels must be >= 2 or null")
        if not self.g_max > 0:
            raise ConfigError("crossbar.g_max must be > 0")
        if self.w_scale is not None and not self.w_scale > 0:
            raise ConfigError("crossbar.w_scale must be > 0 or null")
        if self.sigma_c2c < 0:
            raise ConfigError("crossbar.sigma_c2c must be >= 0")


@dataclass(frozen=True)
class NetworkConfig:
    n_in: int = 32
    n_hidden: int = 64
    n_out: int = 4
    dt: float = 1e-3
    threshold: float = 1.0
    beta_sg: float = 10.0
    tau_center: float = 0.02
    tau_out: float = 0.02
    tau_range: float = 0.05  # trainable modulation, fraction of the base value
    heterogeneity: float = 0.5  # half-width of the tau spread, fraction of tau_center
    cmw_center: float = 0.4
    heterogeneous: bool = False
    trainable_tau: bool = False
    memcapacitor: bool = False
    tie_tau: bool = False  # one trainable tau offset per layer instead of per neuron
    init_gain_in: float = 3.0
    init_gain_rec: float = 1.0
    init_gain_out: float = 1.0
    crossbar: CrossbarConfig = field(default_factory=CrossbarConfig)
    calibration: DeviceCalibration = field(default_factory=DeviceCalibration)

    def __post_init__(self):
        for name in ("n_in", "n_hidden", "n_out"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 < self.dt < min(self.tau_center, self.tau_out):
            raise ConfigError("need 0 < dt < tau_center, tau_out")
        if not 0 < self.tau_range < 1:
            raise ConfigError("tau_range must lie in (0, 1)")
        if not 0 < self.heterogeneity < 1:
            raise ConfigError("heterogeneity must lie in (0, 1)")
        lo, hi = self.cmw_bounds
        if not 0 < lo < hi <= 1:
            raise ConfigError("cmw_center*(1 +/- heterogeneity) must lie in (0, 1]")
        if self.dt >= self.tau_center * (1 - self.heterogeneity) * (1 - self.tau_range):
            raise ConfigError("dt must stay below the smallest reachable time constant")
        if not self.memcapacitor and (self.heterogeneous or self.trainable_tau):
            raise ConfigError(
                "heterogeneous or trainable time constants require memcapacitor mode; "
                "standard capacitors give fixed homogeneous time constants"
            )

    @property
    def cmw_bounds(self) -> tuple[float, float]:
        return self.cmw_center * (1 - self.heterogeneity), self.cmw_center * (1 + self.heterogeneity)


@dataclass
class TauBank:
    tau_mem_base: np.ndarray
    tau_syn_base: np.ndarray
    tau_out: float
    p_mem: np.ndarray
    p_syn: np.ndarray
    r: float = 0.05


def effective_tau(bank: TauBank) -> tuple[np.ndarray, np.ndarray]:
    """tau_base * (1 + r*tanh(p)); strictly inside the +/- r band for any finite p."""
    tau_mem = bank.tau_mem_base * (1.0 + bank.r * np.tanh(bank.p_mem))
    tau_syn = bank.tau_syn_base * (1.0 + bank.r * np.tanh(bank.p_syn))
    return tau_mem, tau_syn


@dataclass
class Network:
    w_in: np.ndarray  # (n_in, n_hidden)
    w_rec: np.ndarray  # (n_hidden, n_hidden)
    w_out: np.ndarray  # (n_hidden, n_out)
    tau: TauBank
    crossbar: CrossbarConfig = field(default_factory=CrossbarConfig)
    heterogeneous: bool = False
    trainable_tau: bool = False
    memcapacitor: bool = False
    dt: float = 1e-3
    threshold: float = 1.0
    beta_sg: float = 10.0

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.w_in.shape[0], self.w_in.shape[1], self.w_out.shape[1]

    def copy(self) -> "Network":
        return replace(
            self,
            w_in=self.w_in.copy(),
            w_rec=self.w_rec.copy(),
            w_out=self.w_out.copy(),
            tau=replace(self.tau, tau_mem_base=self.tau.tau_mem_base.copy(),
                        tau_syn_base=self.tau.tau_syn_base.copy(),
                        p_mem=self.tau.p_mem.copy(), p_syn=self.tau.p_syn.copy()),
        )


@dataclass
class SpikeRaster:
    data: np.ndarray  # (T, channels), binary
    dt: float
    label: int = -1


def sample_tau_population(n: int, cfg: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    """Time constants of ``n`` memcapacitors with uniformly spread windows."""
    lo, hi = cfg.cmw_bounds
    cmw = devices.sample_cmw_population(n, rng, lo, hi)
    c_ref = cfg.tau_center / cfg.calibration.tau_per_capacitance
    c = devices.capacitance_from_cmw(cmw, cfg.cmw_center, c_ref)
    return np.atleast_1d(devices.tau_from_capacitance(c, cfg.calibration))


def build_rsnn(cfg: NetworkConfig, rng: np.random.Generator) -> Network:
    n_in, n_h, n_out = cfg.n_in, cfg.n_hidden, cfg.n_out
    w_in = rng.normal(0.0, cfg.init_gain_in / np.sqrt(n_in), size=(n_in, n_h))
    w_rec = rng.normal(0.0, cfg.init_gain_rec / np.sqrt(n_h), size=(n_h, n_h))
    w_out = rng.normal(0.0, cfg.init_gain_out / np.sqrt(n_h), size=(n_h, n_out))
    if cfg.heterogeneous:
        tau_mem = sample_tau_population(n_h, cfg, rng)
        tau_syn = sample_tau_population(n_h, cfg, rng)
    else:
        tau_mem = np.full(n_h, cfg.tau_center)
        tau_syn = np.full(n_h, cfg.tau_center)
    n_p = 1 if cfg.tie_tau else n_h
    bank = TauBank(tau_mem, tau_syn, cfg.tau_out, np.zeros(n_p), np.zeros(n_p), cfg.tau_range)
    return Network(w_in, w_rec, w_out, bank, cfg.crossbar, cfg.heterogeneous,
                   cfg.trainable_tau, cfg.memcapacitor, cfg.dt, cfg.threshold, cfg.beta_sg)


# --------------------------------------------------------------------------- crossbar


def crossbar_mac(g_plus, g_minus, s, scale: float) -> np.ndarray:
    """In-memory multiply-accumulate: scale * sum_i s_i (G+_ij - G-_ij).

    ``s`` may carry leading batch dimensions.
    """
    g_plus = np.asarray(g_plus)
    g_minus = np.asarray(g_minus)
    s = np.asarray(s, dtype=np.float64)
    if g_plus.shape != g_minus.shape or s.shape[-1] != g_plus.shape[0]:
        raise ShapeError(f"cannot drive crossbar {g_plus.shape} with input {s.shape}")
    return scale * (s @ (g_plus - g_minus))


def _full_scale(w: np.ndarray, cb: CrossbarConfig) -> float:
    if cb.w_scale is not None:
        return cb.w_scale
    m = float(np.max(np.abs(w))) if w.size else 0.0
    return m if m > 0 else 1.0


def program_crossbar(w: np.ndarray, cb: CrossbarConfig) -> tuple[np.ndarray, np.ndarray, float]:
    """Quantized conductance pair for ``w`` and the scale converting currents back to weights."""
    w_scale = _full_scale(w, cb)
    g_plus, g_minus = devices.quantize_weights(w, cb.n_levels, cb.g_max, w_scale)
    return g_plus, g_minus, w_scale / cb.g_max


def device_weights(w: np.ndarray, cb: CrossbarConfig, noisy: bool,
                   rng: Optional[np.random.Generator]) -> np.ndarray:
    """Weight matrix actually seen by a forward pass (quantized, optionally one noisy read)."""
    g_plus, g_minus, scale = program_crossbar(w, cb)
    if noisy and cb.sigma_c2c > 0:
        if rng is None:
            raise ValueError("a random stream is required when cycle noise is on")
        g_plus = devices.apply_cycle_noise(g_plus, cb.sigma_c2c, rng)
        g_minus = devices.apply_cycle_noise(g_minus, cb.sigma_c2c, rng)
    return (g_plus - g_minus) * scale


def read_weights(net: Network, rng: Optional[np.random.Generator]):
    """One device read of all three matrices: (W_in, W_rec, W_out)."""
    cb = net.crossbar
    return (device_weights(net.w_in, cb, cb.noise_in, rng),
            device_weights(net.w_rec, cb, cb.noise_rec, rng),
            device_weights(net.w_out, cb, cb.noise_out, rng))


# --------------------------------------------------------------------------- simulation

SPIKE_FUNCTIONS = {
    # forward nonlinearity, derivative used by the backward pass
    "hard": (lambda x, beta_sg: heaviside(x), surrogate_grad),
    "soft": (soft_spike, soft_spike_grad),
    "detached": (lambda x, beta_sg: heaviside(x), lambda x, beta_sg: np.zeros_like(x)),
}


@dataclass
class Trace:
    """Recorded hidden-layer activity of one batched forward pass (time-major)."""

    x_in: np.ndarray  # (T, B, H) feed-forward input currents
    i_syn: np.ndarray  # (T, B, H)
    v_pre: np.ndarray  # (T, B, H) membrane before reset
    s: np.ndarray  # (T, B, H)
    weights: tuple  # device weights used for this pass
    beta_mem: np.ndarray
    beta_syn: np.ndarray
    beta_out: float


def readout_weights(T: int, beta_out: float) -> np.ndarray:
    """c_k with mean_t y_t = sum_k c_k (s_k @ W_out) for the leaky readout from rest."""
    k = np.arange(T)
    return (1.0 - beta_out ** (T - k)) / T


def simulate(net: Network, x: np.ndarray, rng: Optional[np.random.Generator] = None,
             weights=None, spike_fn: str = "hard") -> Trace:
    """Run the hidden layer over a batch of rasters ``x`` of shape (B, T, n_in)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != net.w_in.shape[0]:
        raise ShapeError(f"expected input (batch, T, {net.w_in.shape[0]}), got {x.shape}")
    if weights is None:
        weights = read_weights(net, rng)
    w_in, w_rec, _ = weights
    fwd, _ = SPIKE_FUNCTIONS[spike_fn]
    tau_mem, tau_syn = effective_tau(net.tau)
    n_h = net.w_in.shape[1]
    beta_mem = np.broadcast_to(decay_factor(net.dt, tau_mem), (n_h,))
    beta_syn = np.broadcast_to(decay_factor(net.dt, tau_syn), (n_h,))
    beta_out = decay_factor(net.dt, net.tau.tau_out)
    theta = net.threshold

    B, T, _ = x.shape
    x_in = np.ascontiguousarray(np.einsum("btc,ch->tbh", x, w_in))
    I = np.empty((T, B, n_h))
    V = np.empty((T, B, n_h))
    S = np.empty((T, B, n_h))
    i = np.zeros((B, n_h))
    v = np.zeros((B, n_h))
    s = np.zeros((B, n_h))
    a_syn, a_mem = 1.0 - beta_syn, 1.0 - beta_mem
    for t in range(T):
        i = beta_syn * i + a_syn * (x_in[t] + s @ w_rec)
        v = beta_mem * v + a_mem * i
        s = fwd(v - theta, net.beta_sg)
        I[t], V[t], S[t] = i, v, s
        v = v - theta * s
    return Trace(x_in, I, V, S, weights, beta_mem, beta_syn, beta_out)


def readout_trace(trace: Trace) -> np.ndarray:
    """Leaky readout y_t = b*y_{t-1} + (1-b)*(s_t @ W_out), shape (T, B, n_out)."""
    out = trace.s @ trace.weights[2]
    b = trace.beta_out
    y = np.empty_like(out)
    acc = np.zeros(out.shape[1:])
    for t in range(out.shape[0]):
        acc = b * acc + (1.0 - b) * out[t]
        y[t] = acc
    return y


def mean_readout(trace: Trace) -> np.ndarray:
    """Time-averaged readout (B, n_out), computed in closed form."""
    c = readout_weights(trace.s.shape[0], trace.beta_out)
    return np.einsum("t,tbh->bh", c, trace.s) @ trace.weights[2]


def forward(net: Network, raster, rng: Optional[np.random.Generator] = None):
    """Simulate one sample; returns (readout trace (T, n_out), hidden spikes (T, n_hidden))."""
    data = raster.data if isinstance(raster, SpikeRaster) else np.asarray(raster)
    if data.ndim != 2 or data.shape[1] != net.w_in.shape[0]:
        raise ShapeError(f"raster has {data.shape[-1]} channels, network expects {net.w_in.shape[0]}")
    tr = simulate(net, data[None], rng)
    return readout_trace(tr)[:, 0], tr.s[:, 0]


def predict(net: Network, x: np.ndarray, rng: Optional[np.random.Generator] = None,
            weights=None) -> np.ndarray:
    return mean_readout(simulate(net, x, rng, weights)).argmax(axis=1)
