"""Discrete-time LIF neuron and DPI synapse primitives.

Exponential-Euler discretization: decay is exact, inputs are held constant over
one step. Membrane units are normalized so the threshold is 1.0, which stands
for the 0.6 V ceiling of the analog membrane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


def decay_factor(dt, tau):
    """exp(-dt/tau), elementwise."""
    dt_a = np.asarray(dt, dtype=np.float64)
    tau_a = np.asarray(tau, dtype=np.float64)
    if np.any(~(dt_a > 0)) or np.any(~(tau_a > 0)):
        raise ValueError("dt and tau must be > 0")
    beta = np.exp(-dt_a / tau_a)
    return float(beta) if beta.ndim == 0 else beta


@dataclass(frozen=True)
class NeuronParams:
    tau_mem: np.ndarray
    dt: float = 1e-3
    threshold: float = 1.0
    reset_mode: str = "subtractive"

    def __post_init__(self):
        tau = np.asarray(self.tau_mem, dtype=np.float64)
        if not self.dt > 0 or np.any(~(tau > self.dt)):
            raise ValueError("need tau_mem > dt > 0")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        if self.reset_mode != "subtractive":
            raise ValueError(f"unsupported reset mode {self.reset_mode!r}")

    @property
    def beta(self):
        return decay_factor(self.dt, self.tau_mem)


@dataclass(frozen=True)
class SynapseParams:
    tau_syn: np.ndarray
    dt: float = 1e-3

    def __post_init__(self):
        tau = np.asarray(self.tau_syn, dtype=np.float64)
        if not self.dt > 0 or np.any(~(tau > self.dt)):
            raise ValueError("need tau_syn > dt > 0")

    @property
    def beta(self):
        return decay_factor(self.dt, self.tau_syn)


@dataclass(frozen=True)
class LayerState:
    i_syn: np.ndarray
    v_mem: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "LayerState":
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))


def _check_shapes(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def dpi_step(i_syn, in_current, p: SynapseParams) -> np.ndarray:
    """First-order low-pass synaptic current with unit DC gain."""
    _check_shapes(i_syn, in_current)
    beta = p.beta
    return beta * i_syn + (1.0 - beta) * in_current


def lif_step(state: LayerState, i_in, p: NeuronParams) -> tuple[LayerState, np.ndarray]:
    _check_shapes(state.v_mem, i_in)
    beta = p.beta
    v = beta * state.v_mem + (1.0 - beta) * i_in
    s = (v >= p.threshold).astype(np.float64)
    v = v - p.threshold * s
    return LayerState(state.i_syn, v, s), s


def heaviside(x):
    return (np.asarray(x) >= 0).astype(np.float64)


def surrogate_grad(x, beta_sg: float = 10.0):
    """Fast-sigmoid pseudo-derivative 1/(beta_sg*|x| + 1)**2 used for dS/dv."""
    if not beta_sg > 0:
        raise ValueError("beta_sg must be > 0")
    return 1.0 / (beta_sg * np.abs(x) + 1.0) ** 2


def soft_spike(x, beta_sg: float = 10.0):
    """Smooth spike 0.5*(1 + beta*x/(1 + beta*|x|)).

    Its exact derivative is ``0.5*beta_sg*surrogate_grad(x)``; swapping it in for
    the hard threshold gives a differentiable network on which the BPTT code can
    be checked against finite differences.
    """
    bx = beta_sg * np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + bx / (1.0 + np.abs(bx)))


def soft_spike_grad(x, beta_sg: float = 10.0):
    return 0.5 * beta_sg * surrogate_grad(x, beta_sg)
