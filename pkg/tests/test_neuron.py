import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memrsnn.neuron import (
    LayerState,
    NeuronParams,
    ShapeError,
    SynapseParams,
    decay_factor,
    dpi_step,
    lif_step,
    soft_spike,
    soft_spike_grad,
    surrogate_grad,
)


def tau_for_beta(beta, dt=1e-3):
    return -dt / math.log(beta)


def test_decay_factor_values():
    # mpmath, 30 digits: exp(-0.05), exp(-1)
    assert decay_factor(1e-3, 20e-3) == pytest.approx(0.951229424500714009, abs=1e-15)
    assert decay_factor(5e-3, 5e-3) == pytest.approx(0.367879441171442322, abs=1e-15)
    assert decay_factor(1e-3, 1e12) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("dt,tau", [(0, 1), (-1e-3, 0.02), (1e-3, 0), (1e-3, -0.02)])
def test_decay_factor_domain(dt, tau):
    with pytest.raises(ValueError):
        decay_factor(dt, tau)


def test_params_validate():
    with pytest.raises(ValueError):
        NeuronParams(np.array([0.5e-3]), dt=1e-3)
    with pytest.raises(ValueError):
        SynapseParams(np.array([1e-3]), dt=1e-3)
    with pytest.raises(ValueError):
        NeuronParams(np.array([0.02]), threshold=0.0)


def test_dpi_one_step():
    p = SynapseParams(np.array([tau_for_beta(0.9)]))
    assert dpi_step(np.array([1.0]), np.array([2.0]), p)[0] == pytest.approx(1.1, abs=1e-14)


def test_dpi_pure_decay_and_fixed_point():
    p = SynapseParams(np.full(3, 0.02))
    i = np.array([1.0, -0.5, 2.0])
    i0 = i.copy()
    for _ in range(50):
        i = dpi_step(i, np.zeros(3), p)
    np.testing.assert_allclose(i, p.beta**50 * i0, rtol=1e-12)
    i = np.zeros(3)
    for _ in range(2000):
        i = dpi_step(i, np.full(3, 0.7), p)
    np.testing.assert_allclose(i, 0.7, rtol=1e-12)


def test_dpi_shape_mismatch():
    with pytest.raises(ShapeError):
        dpi_step(np.zeros(3), np.zeros(4), SynapseParams(np.full(3, 0.02)))


def test_lif_rest_state():
    state, s = lif_step(LayerState.zeros(4), np.zeros(4), NeuronParams(np.full(4, 0.02)))
    assert np.all(state.v_mem == 0) and np.all(s == 0)


def test_lif_one_step():
    p = NeuronParams(np.array([tau_for_beta(0.9)]))
    state, s = lif_step(LayerState(np.zeros(1), np.array([0.5]), np.zeros(1)), np.array([1.0]), p)
    assert state.v_mem[0] == pytest.approx(0.55, abs=1e-14)
    assert s[0] == 0


def test_lif_subtractive_reset():
    # very long tau: beta -> 1, v carries over unchanged before thresholding
    p = NeuronParams(np.array([1e9]))
    state, s = lif_step(LayerState(np.zeros(1), np.array([1.2]), np.zeros(1)), np.zeros(1), p)
    assert s[0] == 1
    assert state.v_mem[0] == pytest.approx(0.2, abs=1e-9)


def test_lif_shape_mismatch():
    with pytest.raises(ShapeError):
        lif_step(LayerState.zeros(3), np.zeros(2), NeuronParams(np.full(3, 0.02)))


def test_pure_decay_exact_1000_steps():
    p = NeuronParams(np.full(5, 0.02))
    v0 = np.array([0.9, 0.5, -0.3, 0.1, 0.99])
    state = LayerState(np.zeros(5), v0.copy(), np.zeros(5))
    for _ in range(1000):
        state, s = lif_step(state, np.zeros(5), p)
        assert not s.any()
    np.testing.assert_allclose(state.v_mem, p.beta**1000 * v0, rtol=1e-12, atol=0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), tau_ms=st.floats(2, 100))
def test_membrane_bounded_for_unit_inputs(seed, tau_ms):
    rng = np.random.default_rng(seed)
    pn = NeuronParams(np.full(8, tau_ms * 1e-3))
    ps = SynapseParams(np.full(8, tau_ms * 1e-3))
    state = LayerState.zeros(8)
    for _ in range(300):
        i = dpi_step(state.i_syn, rng.uniform(0, 1, 8), ps)
        state, s = lif_step(LayerState(i, state.v_mem, state.s), i, pn)
        assert np.all(state.v_mem >= -1.0) and np.all(state.v_mem <= 2.0)
        assert set(np.unique(s)) <= {0.0, 1.0}


def spike_count(drive, steps=500):
    p = NeuronParams(np.array([0.02]))
    state = LayerState.zeros(1)
    n = 0
    for _ in range(steps):
        state, s = lif_step(state, np.array([drive]), p)
        n += int(s[0])
    return n


def test_spike_count_monotone_in_drive():
    counts = [spike_count(d) for d in np.linspace(0, 5, 26)]
    assert counts[0] == 0
    assert all(b >= a for a, b in zip(counts, counts[1:]))


def test_surrogate_values():
    assert surrogate_grad(0.0) == 1.0
    assert surrogate_grad(0.1, 10.0) == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ValueError):
        surrogate_grad(0.1, 0.0)


@given(x=st.floats(-1e3, 1e3), y=st.floats(-1e3, 1e3), beta=st.floats(0.1, 100))
def test_surrogate_even_bounded_monotone(x, y, beta):
    gx = surrogate_grad(x, beta)
    assert 0 < gx <= 1
    assert gx == surrogate_grad(-x, beta)
    if abs(x) < abs(y):
        assert gx >= surrogate_grad(y, beta)


def test_soft_spike_derivative_matches_finite_difference():
    x = np.linspace(-2, 2, 41) + 0.013
    h = 1e-6
    fd = (soft_spike(x + h) - soft_spike(x - h)) / (2 * h)
    np.testing.assert_allclose(soft_spike_grad(x), fd, rtol=1e-6)
