"""Versioned binary checkpoints for :class:`~memrsnn.network.Network`.

Layout, all little-endian::

    b"MCRSNN01"
    u32 n_in, u32 n_hidden, u32 n_out, u32 n_tau_params
    u32 flags          bit0 heterogeneous, bit1 trainable_tau, bit2 memcapacitor,
                       bit3 noise_in, bit4 noise_rec, bit5 noise_out, bit6 freeze_noise
    u32 n_levels       0 = quantization off
    f64 g_max, f64 w_scale (NaN = per-matrix full scale), f64 sigma_c2c
    f64 dt, f64 threshold, f64 beta_sg, f64 tau_out, f64 tau_range
    f64 w_in[n_in*n_hidden], w_rec[n_hidden*n_hidden], w_out[n_hidden*n_out]   (row-major)
    f64 tau_mem_base[n_hidden], tau_syn_base[n_hidden]
    f64 p_mem[n_tau_params], p_syn[n_tau_params]
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .network import CrossbarConfig, Network, TauBank

MAGIC = b"MCRSNN01"
_HEAD = struct.Struct("<IIIIII")
_FLOATS = struct.Struct("<8d")
_FLAG_NAMES = ("heterogeneous", "trainable_tau", "memcapacitor",
               "noise_in", "noise_rec", "noise_out", "freeze_noise")


class CheckpointError(ValueError):
    pass


def _flags(net: Network) -> int:
    vals = (net.heterogeneous, net.trainable_tau, net.memcapacitor, net.crossbar.noise_in,
            net.crossbar.noise_rec, net.crossbar.noise_out, net.crossbar.freeze_noise)
    return sum(int(bool(v)) << k for k, v in enumerate(vals))


def to_bytes(net: Network) -> bytes:
    n_in, n_h, n_out = net.sizes
    cb = net.crossbar
    n_p = net.tau.p_mem.size
    if net.tau.p_syn.size != n_p:
        raise CheckpointError("p_mem and p_syn must have the same length")
    parts = [
        MAGIC,
        _HEAD.pack(n_in, n_h, n_out, n_p, _flags(net), cb.n_levels or 0),
        _FLOATS.pack(cb.g_max, math.nan if cb.w_scale is None else cb.w_scale, cb.sigma_c2c,
                     net.dt, net.threshold, net.beta_sg, net.tau.tau_out, net.tau.r),
    ]
    for arr in (net.w_in, net.w_rec, net.w_out, net.tau.tau_mem_base, net.tau.tau_syn_base,
                net.tau.p_mem, net.tau.p_syn):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> Network:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a network checkpoint (bad magic bytes)")
    off = 8
    if len(buf) < off + _HEAD.size + _FLOATS.size:
        raise CheckpointError("truncated checkpoint header")
    n_in, n_h, n_out, n_p, flags, n_levels = _HEAD.unpack_from(buf, off)
    off += _HEAD.size
    g_max, w_scale, sigma, dt, theta, beta_sg, tau_out, r = _FLOATS.unpack_from(buf, off)
    off += _FLOATS.size
    shapes = [(n_in, n_h), (n_h, n_h), (n_h, n_out), (n_h,), (n_h,), (n_p,), (n_p,)]
    expected = off + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(buf) != expected:
        raise CheckpointError(f"checkpoint is {len(buf)} bytes, header implies {expected}")
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shape))
        off += 8 * n
    f = {name: bool(flags >> k & 1) for k, name in enumerate(_FLAG_NAMES)}
    cb = CrossbarConfig(n_levels=n_levels or None, g_max=g_max,
                        w_scale=None if math.isnan(w_scale) else w_scale, sigma_c2c=sigma,
                        noise_in=f["noise_in"], noise_rec=f["noise_rec"], noise_out=f["noise_out"],
                        freeze_noise=f["freeze_noise"])
    w_in, w_rec, w_out, tm, ts, pm, ps = arrays
    bank = TauBank(tm, ts, tau_out, pm, ps, r)
    return Network(w_in, w_rec, w_out, bank, cb, f["heterogeneous"], f["trainable_tau"],
                   f["memcapacitor"], dt, theta, beta_sg)


def save_network(net: Network, path) -> None:
    Path(path).write_bytes(to_bytes(net))


def load_network(path) -> Network:
    return from_bytes(Path(path).read_bytes())
