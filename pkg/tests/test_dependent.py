import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quantnet.core import NetworkError, eval_exact, eval_f64, validate
from quantnet.dependent import (
    Strategy,
    best_path,
    build_dependent,
    ftilde_breakpoints,
    ftilde_eval,
    interpolation_data,
    plan_dependent,
)
from quantnet.functions import get_function, random_pwl
from quantnet.verify import sup_error


def test_breakpoint_examples():
    assert ftilde_breakpoints(lambda x: F(0), 3, 5) == [0] * 6
    assert ftilde_breakpoints(lambda x: x, 2, 4)[1] == F(1, 4)
    assert ftilde_breakpoints(lambda x: x / 3, 1, 2)[1] == F(1, 4)


def test_third_dynamics_against_simulation():
    f = lambda x: x / 3
    # explicit Euler walk of the slope-sign rule on a fine grid
    T, t, steps = 2, 1, 4096
    bp = ftilde_breakpoints(f, t, T)
    h = F(1, steps)
    for i in range(T):
        a = F(i, T)
        off = bp[i + 1] - f(F(i + 1, T))
        y = bp[i]
        for k in range(1, steps // T + 1):
            x = a + k * h
            fplus = f(x) + off
            if y < fplus:
                y = min(y + h, fplus)
            elif y > fplus:
                y = max(y - h, fplus)
            assert abs(ftilde_eval(f, t, T, x, bp) - y) <= h
            assert abs(y - f(x)) <= F(1, 4)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([(4, 2), (16, 4), (8, 3)]))
def test_ftilde_properties(seed, Tt):
    T, t = Tt
    f = random_pwl(seed)
    bp = ftilde_breakpoints(f, t, T)
    for i, v in enumerate(bp):
        fx = f(F(i, T))
        assert 0 <= v - fx <= F(1, 2 ** t * T)
        assert ftilde_eval(f, t, T, F(i, T), bp) == v
    xs = [F(k, 8 * T) for k in range(8 * T + 1)]
    ys = [ftilde_eval(f, t, T, x, bp) for x in xs]
    for x, y in zip(xs, ys):
        assert abs(y - f(x)) <= F(1, 2 ** t * T)
    for k in range(len(xs) - 1):
        assert abs(ys[k + 1] - ys[k]) <= (xs[k + 1] - xs[k])


def test_ftilde_on_grid_function_is_identity():
    f = lambda x: x / 2
    for k in range(17):
        x = F(k, 16)
        assert ftilde_eval(f, 2, 4, x) == f(x)


def test_ftilde_rejects_outside():
    with pytest.raises(NetworkError):
        ftilde_eval(lambda x: x, 1, 2, F(3, 2))


def test_best_path_brute_force():
    import itertools

    rng = np.random.default_rng(0)
    for m in (2, 4):
        for _ in range(20):
            targets = [F(int(v), 64) for v in rng.integers(-40, 41, m + 1)]
            path = best_path(targets, m)
            assert path[0] == path[-1] == 0
            assert all(abs(a - b) <= 1 for a, b in zip(path, path[1:]))
            cost = max(abs(tg - c * F(2, m)) for tg, c in zip(targets, path))
            best = None
            for steps in itertools.product((-1, 0, 1), repeat=m):
                walk = list(itertools.accumulate(steps, initial=0))
                if walk[-1] != 0:
                    continue
                c = max(abs(tg - w * F(2, m)) for tg, w in zip(targets, walk))
                best = c if best is None else min(best, c)
            assert cost == best


def test_plan_fields():
    p = plan_dependent(F(1, 10))
    assert p.T_formula == 10 and p.T == 16 and p.t == 4
    c = plan_dependent(F(1, 100), Strategy.CACHED)
    L = math.log2(100)
    assert c.m_formula == math.ceil(L / 2) and c.m == 4 and c.t == 2
    assert c.T_formula == math.ceil(8 / (0.01 * L))
    assert c.delta == F(1, 32)
    for p in (plan_dependent(F(1, 20), s) for s in Strategy):
        assert p.error_budget()["total"] <= p.epsilon


def test_plan_errors():
    with pytest.raises(NetworkError):
        plan_dependent(F(3, 2))
    with pytest.raises(NetworkError):
        plan_dependent(F(1, 10), Strategy.CACHED, lam=1)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_zero_function(strategy):
    net = build_dependent(get_function("zero"), F(1, 10), strategy=strategy)
    assert validate(net) == []
    assert all(eval_exact(net, [F(k, 9)]) == 0 for k in range(10))


def test_identity_interpolation():
    f = get_function("identity")
    net = build_dependent(f, F(1, 10))
    assert validate(net) == []
    cert = sup_error(net, f, F(1, 1024), eps=F(1, 10))
    assert cert.passed and cert.measured_sup_error <= 1 / 16 / 16


@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("seed", [1, 2])
def test_random_pwl_builds(strategy, seed):
    f = get_function(f"pwl:seed={seed}:kinks=7")
    net = build_dependent(f, F(1, 20), strategy=strategy)
    assert validate(net) == []
    cert = sup_error(net, f, F(1, 4096), eps=F(1, 20))
    assert cert.passed


def test_network_equals_interpolant_at_knots():
    f = get_function("pwl:seed=5:kinks=7")
    p = plan_dependent(F(1, 20), Strategy.CACHED)
    values, _ = interpolation_data(f, p)
    net = build_dependent(f, plan=p)
    fine = p.fine
    for k in range(0, fine + 1, 3):
        assert eval_exact(net, [F(k, fine)]) == values[k]
    xs = np.linspace(0, 1, 513)
    assert np.all(np.isfinite(eval_f64(net, xs[:, None])))


def test_requires_one_dimensional():
    with pytest.raises(NetworkError):
        build_dependent(get_function("poly:xy_half"), F(1, 10))
