from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quantnet.core import NetworkError, complexity, eval_exact, eval_f64, validate
from quantnet.gadgets import (
    WeightScheme,
    build_abs,
    build_g,
    build_h_block,
    build_multiplier,
    build_squaring,
    build_weight_gadget_linear,
    build_weight_gadget_nonlinear,
    ceil_root,
    nearest_multiple,
)
from quantnet.verify import reference_interp_oracle


def tent(x):
    return 2 * x if x < F(1, 2) else 2 * (1 - x)


def test_tent_examples():
    g = build_g()
    assert eval_exact(g, [F(0)]) == 0
    assert eval_exact(g, [F(1)]) == 0
    assert eval_exact(g, [F(1, 2)]) == 1
    assert eval_exact(g, [F(3, 8)]) == F(3, 4)
    for k in range(65):
        x = F(k, 64)
        assert eval_exact(g, [x]) == tent(x)


@pytest.mark.parametrize("r", range(1, 7))
def test_squaring_breakpoints(r):
    net = build_squaring(r)
    for k in range(2 ** r + 1):
        x = F(k, 2 ** r)
        assert eval_exact(net, [x]) == x * x
    assert eval_exact(net, [F(0)]) == 0


def test_squaring_r1_midpoint_saturates():
    net = build_squaring(1)
    assert eval_exact(net, [F(1, 4)]) == F(1, 8)
    assert F(1, 8) - F(1, 16) == F(1, 16)


def test_squaring_width_constant():
    widths = [complexity(build_squaring(r)).max_width for r in range(1, 11)]
    assert max(widths) == widths[-1] <= 4
    assert all(build_squaring(r).depth == 3 * r + 1 for r in range(1, 11))


def test_squaring_rejects_r0():
    with pytest.raises(NetworkError):
        build_squaring(0)


def test_abs_examples():
    net = build_abs()
    assert eval_exact(net, [F("-0.73")]) == F("0.73")
    assert eval_exact(net, [F(0)]) == 0
    assert eval_exact(net, [F(1)]) == 1


def test_multiplier_examples():
    net = build_multiplier(2)
    assert eval_exact(net, [F(1, 2), F(0)]) == 0
    assert eval_exact(net, [F(1, 2), F(1, 2)]) == F(1, 4)


@pytest.mark.parametrize("r", [2, 4])
def test_multiplier_grid_bound_and_symmetry(r):
    net = build_multiplier(r)
    ax = np.linspace(-1, 1, 65)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    v = eval_f64(net, np.stack([X.ravel(), Y.ravel()], -1)).reshape(X.shape)
    assert np.max(np.abs(v - X * Y)) <= 6 * 2.0 ** (-2 * (r + 1))
    assert np.array_equal(v, v.T)


@settings(max_examples=40, deadline=None)
@given(st.integers(-32, 32))
def test_multiplier_zero_exact(k):
    net = build_multiplier(3)
    y = F(k, 32)
    assert eval_exact(net, [F(0), y]) == 0
    assert eval_exact(net, [y, F(0)]) == 0


def test_ceil_root():
    assert ceil_root(16, 2) == 4
    assert ceil_root(17, 2) == 5
    assert ceil_root(27, 3) == 3
    assert ceil_root(28, 3) == 4


@given(st.fractions(min_value=-1, max_value=1), st.integers(1, 12))
def test_nearest_multiple_oracle(w, t):
    wp = nearest_multiple(w, t)
    step = F(1, 2 ** t)
    assert (wp / step).denominator == 1
    assert abs(wp - w) <= step / 2
    # brute-force nearest over the neighbouring grid values
    k = (w / step).__floor__()
    cands = [k * step, (k + 1) * step]
    assert abs(wp - w) == min(abs(c - w) for c in cands)


def test_nearest_multiple_ties_toward_zero():
    assert nearest_multiple(F(3, 16), 3) == F(1, 8)
    assert nearest_multiple(F(-3, 16), 3) == F(-1, 8)


def test_weight_gadget_examples():
    z = build_weight_gadget_nonlinear(F(0), 5, 3)
    assert all(eval_exact(z, [x]) == 0 for x in (F(-1), F(1, 3), F(1)))
    one = build_weight_gadget_nonlinear(F(1), 4, 2)
    assert all(eval_exact(one, [x]) == x for x in (F(-1), F(-1, 7), F(1, 2), F(1)))
    g = build_weight_gadget_nonlinear(F("0.3"), 3, 2)
    assert F(g.meta["w_prime"]) == F(1, 4)
    assert eval_exact(g, [F(-1, 2)]) == F(-1, 8)


def test_nonlinear_codebook_shape():
    s = WeightScheme.nonlinear(9, 3)
    assert s.rho == 3 and s.t == 9
    assert set(s.codebook.values) == {F(1, 2), F(-1, 2), F(1, 8)}
    s4 = WeightScheme.nonlinear(10, 4)
    assert s4.rho == 3 and s4.t == 27
    assert set(s4.codebook.values) == {F(1, 2), F(-1, 2), F(1, 8), F(1, 512)}


def test_nonlinear_radix_records_effective_t():
    g = build_weight_gadget_nonlinear(F(5, 7), 10, 3)
    assert g.meta["t_requested"] == 10 and g.meta["t_effective"] == 16 and g.meta["rho"] == 4
    assert abs(F(g.meta["w_prime"]) - F(5, 7)) <= F(1, 2 ** 16)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(-256, 256),
    st.sampled_from([(2, 4), (2, 8), (3, 4), (3, 9), (4, 8)]),
    st.integers(-64, 64),
    st.integers(0, 8),
)
def test_weight_gadget_linearity(k, lt, xi, ai):
    lam, t = lt
    w = F(k, 256)
    net = build_weight_gadget_nonlinear(w, t, lam)
    x, a = F(xi, 64), F(ai, 8)
    wp = F(net.meta["w_prime"])
    y = eval_exact(net, [x])
    assert y == wp * x
    assert eval_exact(net, [-x]) == -y
    assert eval_exact(net, [a * x]) == a * y


def test_linear_gadget_examples():
    g = build_weight_gadget_linear(F(5, 16), 4, 4)
    assert eval_exact(g, [F(1)]) == F(5, 16)
    h = build_weight_gadget_linear(F(-1, 2), 1, 2)
    assert all(eval_exact(h, [x]) == -x / 2 for x in (F(-1), F(1, 3), F(1)))
    d = build_weight_gadget_linear(F(4095, 4096), 12, 16)
    assert d.depth - 1 <= 12 // 4 + 1
    assert validate(d) == []


def test_linear_gadget_rejects_non_power_of_two():
    with pytest.raises(NetworkError):
        build_weight_gadget_linear(F(1, 2), 4, 3)
    with pytest.raises(NetworkError):
        build_weight_gadget_linear(F(3, 2), 4, 4)
    with pytest.raises(NetworkError):
        build_weight_gadget_nonlinear(F(1, 2), 4, 1)


def test_h_block_examples():
    net = build_h_block(4, 2)
    assert eval_exact(net, [F(1, 2)]) == 1
    assert eval_exact(net, [F(5, 8)]) == F(1, 2)
    for k in range(97):
        x = F(k, 96)
        if abs(x - F(1, 2)) >= F(2, 12):
            assert eval_exact(net, [x]) == 0
    with pytest.raises(NetworkError):
        build_h_block(4, 5)


def test_squaring_matches_reference_oracle():
    for r in (1, 3, 5):
        net = build_squaring(r)
        bps = [F(k, 2 ** r) for k in range(2 ** r + 1)]
        g = reference_interp_oracle(bps, [x * x for x in bps])
        xs = np.arange(4097) / 4096
        ys = eval_f64(net, xs[:, None])
        want = np.array([float(g(F(k, 4096))) for k in range(4097)])
        assert np.max(np.abs(ys - want)) == 0
