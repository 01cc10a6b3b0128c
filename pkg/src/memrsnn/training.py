"""Surrogate-gradient BPTT for the memristive RSNN.

The backward pass is written out by hand over the recorded forward trace. Weight
quantization and read noise use a straight-through convention: the forward pass
sees the device weights, the gradient is applied to the underlying real weights.
Time constants are trained through their bounded reparameterization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .datasets import DataError, EventDataset, to_arrays
from .network import (
    SPIKE_FUNCTIONS,
    Network,
    SpikeRaster,
    Trace,
    effective_tau,
    mean_readout,
    predict,
    read_weights,
    readout_weights,
    simulate,
)

PARAM_NAMES = ("w_in", "w_rec", "w_out", "p_mem", "p_syn")
# tanh(12) = 1 - 7.6e-11: keeps tau strictly inside its band in double precision,
# where tanh of a larger offset rounds to exactly 1
P_MAX = 12.0

METRIC_COLUMNS = ("epoch", "train_loss", "valid_acc_mean", "valid_acc_std", "tau_mem_min", "tau_mem_max")


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr_weights: float = 0.05
    lr_tau: Optional[float] = None  # None: 0.1 * lr_weights
    optimizer: str = "adam"
    momentum: float = 0.9
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    trainable_tau: Optional[bool] = None  # None: follow the network's flag
    sigma_c2c: Optional[float] = None  # None: follow the network's crossbar setting
    grad_clip: Optional[float] = 10.0
    valid_noise_draws: int = 3

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr_weights > 0 or (self.lr_tau is not None and not self.lr_tau > 0):
            raise ValueError("learning rates must be > 0")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValueError("grad_clip must be > 0 or null")
        if self.valid_noise_draws < 1:
            raise ValueError("valid_noise_draws must be >= 1")

    @property
    def tau_lr(self) -> float:
        return 0.1 * self.lr_weights if self.lr_tau is None else self.lr_tau


@dataclass
class Gradients:
    d_w_in: np.ndarray
    d_w_rec: np.ndarray
    d_w_out: np.ndarray
    d_p_mem: np.ndarray
    d_p_syn: np.ndarray

    def items(self):
        return zip(PARAM_NAMES, (self.d_w_in, self.d_w_rec, self.d_w_out, self.d_p_mem, self.d_p_syn))

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for _, g in self.items())))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for _, g in self.items())


def _stack(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple):
        x, y = batch
        return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)
    if len(batch) == 0:
        raise DataError("empty batch")
    x = np.stack([r.data if isinstance(r, SpikeRaster) else r for r in batch]).astype(np.float64)
    y = np.array([r.label for r in batch], dtype=np.int64)
    return x, y


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -float(np.mean(log_p[np.arange(n), labels]))
    g = np.exp(log_p)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def backprop(net: Network, x: np.ndarray, tr: Trace, g_logits: np.ndarray,
             spike_fn: str = "hard", trainable_tau: Optional[bool] = None) -> Gradients:
    """Reverse-mode pass through the recorded trace of one batch."""
    _, dspike = SPIKE_FUNCTIONS[spike_fn]
    _, w_rec, w_out = tr.weights
    T, B, H = tr.s.shape
    theta = net.threshold
    bm, bs = tr.beta_mem, tr.beta_syn
    am, as_ = 1.0 - bm, 1.0 - bs

    c = readout_weights(T, tr.beta_out)
    gs_out = g_logits @ w_out.T  # (B, H), scaled by c_t per step
    d_w_out = np.einsum("t,tbh->bh", c, tr.s).T @ g_logits

    gin_all = np.empty((T, B, H))
    gv = np.zeros((B, H))
    gi = np.zeros((B, H))
    gs_rec = np.zeros((B, H))
    d_bm = np.zeros(H)
    d_bs = np.zeros(H)
    zeros = np.zeros((B, H))
    w_rec_t = w_rec.T
    for t in range(T - 1, -1, -1):
        if t > 0:
            i_prev = tr.i_syn[t - 1]
            v_prev = tr.v_pre[t - 1] - theta * tr.s[t - 1]
            s_prev = tr.s[t - 1]
        else:
            i_prev = v_prev = s_prev = zeros
        gs = c[t] * gs_out + gs_rec - theta * gv
        gvpre = gv + gs * dspike(tr.v_pre[t] - theta, net.beta_sg)
        d_bm += np.einsum("bh,bh->h", gvpre, v_prev - tr.i_syn[t])
        gi = gi + gvpre * am
        gv = gvpre * bm
        in_t = tr.x_in[t] + s_prev @ w_rec
        d_bs += np.einsum("bh,bh->h", gi, i_prev - in_t)
        gin = gi * as_
        gin_all[t] = gin
        gi = gi * bs
        gs_rec = gin @ w_rec_t

    d_w_in = np.einsum("btc,tbh->ch", x, gin_all)
    d_w_rec = np.einsum("tbi,tbh->ih", tr.s[:-1], gin_all[1:])

    trainable = net.trainable_tau if trainable_tau is None else trainable_tau
    if trainable:
        d_p_mem = _tau_param_grad(d_bm, bm, net.tau.tau_mem_base, net.tau.p_mem, net)
        d_p_syn = _tau_param_grad(d_bs, bs, net.tau.tau_syn_base, net.tau.p_syn, net)
    else:
        d_p_mem = np.zeros_like(net.tau.p_mem)
        d_p_syn = np.zeros_like(net.tau.p_syn)
    return Gradients(d_w_in, d_w_rec, d_w_out, d_p_mem, d_p_syn)


def _tau_param_grad(d_beta, beta, tau_base, p, net: Network) -> np.ndarray:
    # beta = exp(-dt/tau), tau = tau_base * (1 + r*tanh(p))
    r = net.tau.r
    th = np.tanh(p)
    tau = tau_base * (1.0 + r * th)
    d_p = d_beta * beta * net.dt / tau**2 * tau_base * r * (1.0 - th**2)
    if p.shape != d_p.shape:
        d_p = d_p.sum(keepdims=True).reshape(p.shape)
    return d_p


def loss_and_grads(net: Network, batch, rng: Optional[np.random.Generator] = None,
                   spike_fn: str = "hard", trainable_tau: Optional[bool] = None,
                   weights=None) -> tuple[float, Gradients]:
    """Cross-entropy of the time-averaged readout and its BPTT gradients.

    ``batch`` is a list of SpikeRaster or an ``(x, labels)`` pair with
    ``x`` of shape (B, T, n_in).
    """
    x, labels = _stack(batch)
    n_out = net.w_out.shape[1]
    if labels.size == 0:
        raise DataError("empty batch")
    if labels.min() < 0 or labels.max() >= n_out:
        raise DataError(f"labels must lie in [0, {n_out - 1}]")
    tr = simulate(net, x, rng, weights=weights, spike_fn=spike_fn)
    loss, g_logits = cross_entropy(mean_readout(tr), labels)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss, backprop(net, x, tr, g_logits, spike_fn, trainable_tau)


# --------------------------------------------------------------------------- optimizers


def init_opt_state(net: Network, cfg: TrainConfig) -> dict:
    params = _params(net)
    state = {"step": 0}
    if cfg.optimizer == "adam":
        state["m"] = {k: np.zeros_like(v) for k, v in params.items()}
        state["v"] = {k: np.zeros_like(v) for k, v in params.items()}
    else:
        state["buf"] = {k: np.zeros_like(v) for k, v in params.items()}
    return state


def _params(net: Network) -> dict:
    return {"w_in": net.w_in, "w_rec": net.w_rec, "w_out": net.w_out,
            "p_mem": net.tau.p_mem, "p_syn": net.tau.p_syn}


def optimizer_step(net: Network, grads: Gradients, opt_state: Optional[dict],
                   cfg: TrainConfig) -> tuple[Network, dict]:
    """One clipped update; returns a new network and the advanced optimizer state."""
    if not grads.all_finite():
        raise NumericError("non-finite gradients")
    if opt_state is None:
        opt_state = init_opt_state(net, cfg)
    trainable = net.trainable_tau if cfg.trainable_tau is None else cfg.trainable_tau
    scale = 1.0
    if cfg.grad_clip is not None:
        norm = grads.global_norm()
        if norm > cfg.grad_clip:
            scale = cfg.grad_clip / norm

    step = opt_state["step"] + 1
    new = {}
    params = _params(net)
    for name, g in grads.items():
        p = params[name]
        if name.startswith("p_") and not trainable:
            new[name] = p.copy()
            continue
        lr = cfg.tau_lr if name.startswith("p_") else cfg.lr_weights
        g = g * scale
        if cfg.optimizer == "adam":
            b1, b2 = cfg.adam_betas
            m = opt_state["m"][name] = b1 * opt_state["m"][name] + (1 - b1) * g
            v = opt_state["v"][name] = b2 * opt_state["v"][name] + (1 - b2) * g * g
            m_hat = m / (1 - b1**step)
            v_hat = v / (1 - b2**step)
            new[name] = p - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        else:
            buf = opt_state["buf"][name] = cfg.momentum * opt_state["buf"][name] + g
            new[name] = p - lr * buf
        if name.startswith("p_"):
            new[name] = np.clip(new[name], -P_MAX, P_MAX)
    opt_state["step"] = step
    tau = replace(net.tau, p_mem=new["p_mem"], p_syn=new["p_syn"])
    return replace(net, w_in=new["w_in"], w_rec=new["w_rec"], w_out=new["w_out"], tau=tau), opt_state


# --------------------------------------------------------------------------- loops


def _as_arrays(data, dt: float) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple):
        return np.asarray(data[0], dtype=np.float64), np.asarray(data[1], dtype=np.int64)
    if isinstance(data, EventDataset):
        return to_arrays(data, dt)
    return _stack(list(data))


def _with_sigma(net: Network, sigma: Optional[float]) -> Network:
    if sigma is None or sigma == net.crossbar.sigma_c2c:
        return net
    return replace(net, crossbar=replace(net.crossbar, sigma_c2c=sigma))


def evaluate(net: Network, dataset, n_noise_draws: int = 10,
             rng: Optional[np.random.Generator] = None, chunk: int = 256) -> tuple[float, float]:
    """Accuracy mean and sample std over independent device-noise realizations.

    Each draw is one noisy read of every crossbar, shared by the whole dataset.
    """
    if n_noise_draws < 1:
        raise ValueError("n_noise_draws must be >= 1")
    x, y = _as_arrays(dataset, net.dt)
    if len(y) == 0:
        raise DataError("empty dataset")
    rng = np.random.default_rng(0) if rng is None else rng
    accs = []
    for _ in range(n_noise_draws):
        weights = read_weights(net, rng)
        pred = np.concatenate([predict(net, x[k:k + chunk], weights=weights)
                               for k in range(0, len(y), chunk)])
        accs.append(float(np.mean(pred == y)))
    accs = np.asarray(accs)
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return float(np.mean(accs)), std


def tau_summary(net: Network) -> dict:
    tau_mem, tau_syn = effective_tau(net.tau)
    tau_mem = np.broadcast_to(tau_mem, net.tau.tau_mem_base.shape)
    return {"tau_mem_min": float(np.min(tau_mem)), "tau_mem_max": float(np.max(tau_mem))}


def train(net: Network, train_set, valid_set, cfg: TrainConfig,
          log=None) -> tuple[Network, list[dict]]:
    """Mini-batch BPTT with fresh device noise per forward pass.

    Returns the network with the best validation accuracy and one metrics row
    per epoch.
    """
    if cfg.epochs == 0:
        return net, []
    net = _with_sigma(net, cfg.sigma_c2c)
    if cfg.trainable_tau is not None:
        net = replace(net, trainable_tau=cfg.trainable_tau)
    x_tr, y_tr = _as_arrays(train_set, net.dt)
    valid = _as_arrays(valid_set, net.dt)
    if len(y_tr) == 0 or len(valid[1]) == 0:
        raise DataError("train and validation sets must be non-empty")

    shuffle_rng, noise_rng, eval_rng = (np.random.default_rng(s)
                                        for s in np.random.SeedSequence(cfg.seed).spawn(3))
    opt_state = init_opt_state(net, cfg)
    best, best_acc = net.copy(), -np.inf
    metrics = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(y_tr))
        frozen = int(noise_rng.integers(2**63)) if net.crossbar.freeze_noise else None
        losses = []
        for k in range(0, len(order), cfg.batch_size):
            idx = order[k:k + cfg.batch_size]
            rng = np.random.default_rng(frozen) if frozen is not None else noise_rng
            loss, grads = loss_and_grads(net, (x_tr[idx], y_tr[idx]), rng)
            net, opt_state = optimizer_step(net, grads, opt_state, cfg)
            losses.append(loss * len(idx))
        acc_mean, acc_std = evaluate(net, valid, cfg.valid_noise_draws, eval_rng)
        row = {"epoch": epoch, "train_loss": float(np.sum(losses) / len(y_tr)),
               "valid_acc_mean": acc_mean, "valid_acc_std": acc_std, **tau_summary(net)}
        metrics.append(row)
        if log is not None:
            log(row)
        if acc_mean > best_acc:
            best, best_acc = net.copy(), acc_mean
    return best, metrics
