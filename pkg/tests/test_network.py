import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memrsnn import devices
from memrsnn.checkpoint import CheckpointError, from_bytes, load_network, save_network, to_bytes
from memrsnn.network import (
    ConfigError,
    CrossbarConfig,
    NetworkConfig,
    SpikeRaster,
    TauBank,
    build_rsnn,
    crossbar_mac,
    effective_tau,
    forward,
    simulate,
)
from memrsnn.neuron import LayerState, NeuronParams, ShapeError, SynapseParams, decay_factor, dpi_step, lif_step

IDEAL = CrossbarConfig(n_levels=None, sigma_c2c=0.0)


def small_cfg(**kw):
    base = dict(n_in=6, n_hidden=10, n_out=3, init_gain_in=60.0, init_gain_rec=10.0, init_gain_out=5.0)
    base.update(kw)
    return NetworkConfig(**base)


def random_raster(rng, T=40, n=6, p=0.15):
    return (rng.random((T, n)) < p).astype(float)


def reference_forward(net, raster):
    """Per-sample loop over the neuron primitives with ideal (unquantized, noiseless) weights."""
    tau_mem, tau_syn = effective_tau(net.tau)
    n_h = net.w_rec.shape[0]
    pn = NeuronParams(np.broadcast_to(tau_mem, (n_h,)), net.dt, net.threshold)
    ps = SynapseParams(np.broadcast_to(tau_syn, (n_h,)), net.dt)
    b_out = decay_factor(net.dt, net.tau.tau_out)
    state = LayerState.zeros(n_h)
    y = np.zeros(net.w_out.shape[1])
    ys, ss = [], []
    for x_t in raster:
        i = dpi_step(state.i_syn, x_t @ net.w_in + state.s @ net.w_rec, ps)
        state, s = lif_step(LayerState(i, state.v_mem, state.s), i, pn)
        y = b_out * y + (1 - b_out) * (s @ net.w_out)
        ys.append(y.copy())
        ss.append(s)
    return np.array(ys), np.array(ss)


# ---------------------------------------------------------------- build


def test_homogeneous_tau_is_exactly_20ms():
    net = build_rsnn(small_cfg(), np.random.default_rng(0))
    assert np.all(net.tau.tau_mem_base == 0.02)
    assert np.all(net.tau.tau_syn_base == 0.02)
    assert np.all(net.tau.p_mem == 0) and np.all(net.tau.p_syn == 0)


def test_heterogeneous_tau_range():
    cfg = small_cfg(n_hidden=128, memcapacitor=True, heterogeneous=True)
    net = build_rsnn(cfg, np.random.default_rng(3))
    for tau in (net.tau.tau_mem_base, net.tau.tau_syn_base):
        assert tau.min() >= 0.010 - 1e-15 and tau.max() <= 0.030 + 1e-15
        # mean of 128 uniforms on [10, 30] ms: std of the mean is 0.51 ms
        assert abs(tau.mean() - 0.020) < 0.002
    assert not np.array_equal(net.tau.tau_mem_base, net.tau.tau_syn_base)


def test_build_deterministic():
    cfg = small_cfg(memcapacitor=True, heterogeneous=True)
    a = build_rsnn(cfg, np.random.default_rng(11))
    b = build_rsnn(cfg, np.random.default_rng(11))
    assert to_bytes(a) == to_bytes(b)


def test_build_rejects_bad_configs():
    with pytest.raises(ConfigError):
        small_cfg(n_hidden=0)
    with pytest.raises(ConfigError):
        small_cfg(heterogeneous=True)  # no memcapacitor
    with pytest.raises(ConfigError):
        small_cfg(trainable_tau=True)
    with pytest.raises(ConfigError):
        CrossbarConfig(n_levels=1)


def test_tied_tau_parameters():
    net = build_rsnn(small_cfg(memcapacitor=True, trainable_tau=True, tie_tau=True), np.random.default_rng(0))
    assert net.tau.p_mem.shape == (1,)
    net.tau.p_mem[:] = 0.7
    tau_mem, _ = effective_tau(net.tau)
    assert np.allclose(tau_mem, 0.02 * (1 + 0.05 * np.tanh(0.7)))


# ---------------------------------------------------------------- crossbar


def test_crossbar_zero_and_basis():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(8, 4))
    gp, gm = devices.quantize_weights(w, 16, 40.0, 3.0)
    scale = 3.0 / 40.0
    assert np.all(crossbar_mac(gp, gm, np.zeros(8), scale) == 0)
    recon = devices.reconstruct_weights(gp, gm, 40.0, 3.0)
    e = np.zeros(8)
    e[5] = 1
    np.testing.assert_allclose(crossbar_mac(gp, gm, e, scale), recon[5], rtol=1e-15)


def test_crossbar_shape_error():
    with pytest.raises(ShapeError):
        crossbar_mac(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(4), 1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_levels=st.integers(2, 64))
def test_crossbar_equals_dense_matmul(seed, n_levels):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(8, 4))
    w_scale = float(np.abs(w).max())
    gp, gm = devices.quantize_weights(w, n_levels, 40.0, w_scale)
    s = (rng.random((5, 8)) < 0.5).astype(float)
    dense = s @ devices.reconstruct_weights(gp, gm, 40.0, w_scale)
    mac = crossbar_mac(gp, gm, s, w_scale / 40.0)
    np.testing.assert_allclose(mac, dense, rtol=1e-12, atol=1e-12 * w_scale)


# ---------------------------------------------------------------- forward


def test_forward_shapes_and_quiescence():
    net = build_rsnn(small_cfg(), np.random.default_rng(0))
    y, s = forward(net, SpikeRaster(np.zeros((25, 6)), 1e-3), np.random.default_rng(0))
    assert y.shape == (25, 3) and s.shape == (25, 10)
    assert np.all(y == 0) and np.all(s == 0)


def test_forward_channel_mismatch():
    net = build_rsnn(small_cfg(), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        forward(net, np.zeros((10, 5)))


@pytest.mark.parametrize("hetero", [False, True])
def test_forward_matches_ideal_reference(hetero):
    cfg = small_cfg(crossbar=IDEAL, memcapacitor=hetero, heterogeneous=hetero, trainable_tau=hetero)
    rng = np.random.default_rng(5)
    net = build_rsnn(cfg, rng)
    if hetero:
        net.tau.p_mem[:] = rng.normal(size=10)
        net.tau.p_syn[:] = rng.normal(size=10)
    raster = random_raster(rng)
    y, s = forward(net, raster)
    y_ref, s_ref = reference_forward(net, raster)
    assert s.sum() > 0  # the comparison is not vacuous
    np.testing.assert_array_equal(s, s_ref)
    np.testing.assert_allclose(y, y_ref, rtol=1e-12, atol=1e-12)


def test_forward_noise_deterministic_given_seed():
    net = build_rsnn(small_cfg(), np.random.default_rng(0))
    raster = random_raster(np.random.default_rng(1))
    a = forward(net, raster, np.random.default_rng(9))
    b = forward(net, raster, np.random.default_rng(9))
    c = forward(net, raster, np.random.default_rng(10))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])


def test_noise_requires_rng():
    net = build_rsnn(small_cfg(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(net, random_raster(np.random.default_rng(1)))


def test_batched_simulation_matches_single():
    net = build_rsnn(small_cfg(crossbar=IDEAL), np.random.default_rng(2))
    rng = np.random.default_rng(3)
    x = np.stack([random_raster(rng) for _ in range(4)])
    tr = simulate(net, x)
    for b in range(4):
        _, s = forward(net, x[b])
        np.testing.assert_array_equal(tr.s[:, b], s)


# ---------------------------------------------------------------- time constants


def test_effective_tau_examples():
    bank = TauBank(np.array([0.02]), np.array([0.02]), 0.02, np.array([0.0]), np.array([1.0]))
    tm, ts = effective_tau(bank)
    assert tm[0] == 0.02
    # 20 (1 + 0.05 tanh 1) ms, mpmath
    assert ts[0] * 1e3 == pytest.approx(20.7615941559557649, abs=1e-12)
    bank.p_mem[:] = 1e6
    assert effective_tau(bank)[0][0] == pytest.approx(0.021, rel=1e-12)


@given(p=st.floats(-1e6, 1e6), base=st.floats(1e-3, 1.0))
def test_effective_tau_inside_band(p, base):
    bank = TauBank(np.array([base]), np.array([base]), 0.02, np.array([p]), np.array([-p]))
    for tau in effective_tau(bank):
        assert 0.95 * base <= tau[0] <= 1.05 * base


# ---------------------------------------------------------------- checkpoint


def assert_networks_identical(a, b):
    assert to_bytes(a) == to_bytes(b)
    for name in ("w_in", "w_rec", "w_out"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    for name in ("tau_mem_base", "tau_syn_base", "p_mem", "p_syn"):
        np.testing.assert_array_equal(getattr(a.tau, name), getattr(b.tau, name))
    assert a.crossbar == b.crossbar
    assert (a.heterogeneous, a.trainable_tau, a.memcapacitor) == (b.heterogeneous, b.trainable_tau, b.memcapacitor)
    assert (a.dt, a.threshold, a.beta_sg, a.tau.tau_out, a.tau.r) == (b.dt, b.threshold, b.beta_sg, b.tau.tau_out, b.tau.r)


@pytest.mark.parametrize("kw", [
    {},
    {"memcapacitor": True, "heterogeneous": True, "trainable_tau": True},
    {"memcapacitor": True, "trainable_tau": True, "tie_tau": True,
     "crossbar": CrossbarConfig(n_levels=None, w_scale=2.5, sigma_c2c=0.0, noise_rec=False)},
])
def test_checkpoint_round_trip(tmp_path, kw):
    net = build_rsnn(small_cfg(**kw), np.random.default_rng(4))
    net.tau.p_mem[:] = np.random.default_rng(5).normal(size=net.tau.p_mem.shape)
    path = tmp_path / "net.mcrsnn"
    save_network(net, path)
    assert path.read_bytes()[:8] == b"MCRSNN01"
    assert_networks_identical(net, load_network(path))


def test_checkpoint_rejects_corruption():
    buf = to_bytes(build_rsnn(small_cfg(), np.random.default_rng(0)))
    with pytest.raises(CheckpointError):
        from_bytes(b"XXXXXXXX" + buf[8:])
    with pytest.raises(CheckpointError):
        from_bytes(buf[:-8])
