import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quantnet.bounds import (
    BoundModel,
    NoInteriorMinimum,
    bitwidth_opt,
    bound_formulas,
    dM_dlam,
    emit_figure1_data,
    figure1_csv,
    lambda_opt,
    memory_bound,
    ms,
    overhead_report,
    projections,
)
from quantnet.core import NetworkError

MODELS = [
    BoundModel(1, 1, 0.125),
    BoundModel(1, 3, 0.01),
    BoundModel(10, 2, 0.1),
    BoundModel(784, 1, 0.01),
    BoundModel(150528, 1, 0.1),
    BoundModel(10 ** 6, 4, 1e-6),
]


def test_memory_bound_at_two():
    m = BoundModel(1, 1, 0.125, theta1=3.0)
    assert memory_bound(2, m) == pytest.approx(2 * 3.0 * m.theta2 ** 2)


def test_theta2_example():
    m = BoundModel(1, 1, 1 / 8)
    assert m.theta2 == pytest.approx(math.log2(48))
    assert memory_bound(2, m) == pytest.approx(2 * 31.19, rel=1e-3)


def test_memory_bound_limit():
    m = BoundModel(3, 1, 0.1)
    lam = 2.0 ** 40
    assert memory_bound(lam, m) / (lam * math.log2(lam)) == pytest.approx(m.theta2, rel=1e-9)


def test_lambda_below_two():
    with pytest.raises(NetworkError):
        memory_bound(1.5, MODELS[0])


@pytest.mark.parametrize("model", MODELS)
def test_ms_signs(model):
    assert ms(2, model) == pytest.approx(1 + 1 / math.log(2) - 2 * math.log(model.theta2))
    assert ms(2, model) < 0
    assert ms(2.0 ** 300, model) > 0


@pytest.mark.parametrize("model", MODELS[:4])
def test_ms_matches_finite_difference(model):
    for k in range(1, 11):
        lam = 2.0 ** k
        h = lam * 1e-6
        fd = (memory_bound(lam + h, model) - memory_bound(lam - h, model)) / (2 * h) if lam > 2 else (
            memory_bound(lam + h, model) - memory_bound(lam, model)) / h
        assert np.sign(fd) == np.sign(ms(lam, model))
        assert dM_dlam(lam, model) == pytest.approx(fd, rel=1e-4)


@pytest.mark.parametrize("model", MODELS)
def test_single_sign_change(model):
    lams = 2.0 ** np.linspace(1, 64, 2000)
    s = np.array([ms(v, model) for v in lams])
    assert np.count_nonzero(np.diff(np.sign(s))) == 1
    small = lams[lams <= 2 ** 20]
    vals = np.array([ms(v, model) for v in small])
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("model", MODELS)
def test_lambda_opt_is_local_and_global_minimum(model):
    lam = lambda_opt(model)
    assert abs(ms(lam, model)) < 1e-6
    m0 = memory_bound(lam, model)
    assert memory_bound(lam + 1e-6 * lam, model) >= m0
    assert memory_bound(max(2, lam - 1e-6 * lam), model) >= m0
    scan = np.linspace(2, 10 * lam, 5000)
    assert min(memory_bound(v, model) for v in scan) >= m0 * (1 - 1e-12)


def test_theta1_does_not_move_argmin():
    vals = [lambda_opt(BoundModel(784, 1, 0.01, theta1=t)) for t in (0.1, 1, 10)]
    assert max(vals) - min(vals) == 0


def test_no_interior_minimum():
    with pytest.raises(NoInteriorMinimum):
        lambda_opt(BoundModel(1, 1, 0.5))


def test_mnist_bitwidth_range():
    assert 1 <= bitwidth_opt(BoundModel(784, 1, 0.01)) <= 4


def test_bitwidth_monotone_in_d():
    bws = [bitwidth_opt(BoundModel(10 ** k, 1, 0.01)) for k in range(1, 7)]
    assert all(a <= b for a, b in zip(bws, bws[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(100, 10 ** 6), st.integers(1, 5))
def test_eps_barely_matters_for_large_d(d, n):
    a = bitwidth_opt(BoundModel(d, n, 0.1))
    b = bitwidth_opt(BoundModel(d, n, 0.01))
    assert abs(a - b) < 0.5


def test_projections():
    p = projections(BoundModel(784, 1, 0.01))
    lam = p["lambda_opt"]
    assert math.floor(lam) <= p["lambda_int"] <= math.ceil(lam)
    assert p["lambda_pow2"] & (p["lambda_pow2"] - 1) == 0


def test_bound_formulas():
    assert bound_formulas("T4", 1, 1, 0.1, 4)["bits"] == pytest.approx(20)
    eps = 0.05
    L = math.log2(1 / eps)
    assert bound_formulas("T1", 2, 1, eps, 2)["weights"] == pytest.approx(2 * L ** 2 * (1 / eps) ** 2)
    assert bound_formulas("T2", 3, 2, eps, 8)["depth"] == pytest.approx(L)
    with pytest.raises(NetworkError):
        bound_formulas("T3", 2, 1, 0.1, 2)
    with pytest.raises(NetworkError):
        bound_formulas("T5", 1, 1, 0.1, 2)


def test_overhead():
    r = overhead_report(1, 1, 2.0 ** -8, 2)
    assert r["overhead_factor"] == pytest.approx(16)
    assert r["quantized_upper"] / r["unquantized_upper"] == pytest.approx(16)
    ratios = [overhead_report(1, 1, 2.0 ** -k, 3)["overhead_factor"] / k ** 5 for k in range(4, 41)]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] < 1e-6
    # the log part shrinks with lambda; the full product only up to its minimum
    L = 16
    logs = [L ** (1 / (lam - 1)) for lam in (2, 3, 4, 8, 64)]
    assert all(a > b for a, b in zip(logs, logs[1:]))
    facs = [overhead_report(1, 1, 2.0 ** -L, lam)["overhead_factor"] for lam in (2, 3, 4)]
    assert all(a > b for a, b in zip(facs, facs[1:]))
    assert overhead_report(1, 1, 2.0 ** -L, 8)["overhead_factor"] > facs[-1]


def test_figure1_rows():
    rows = emit_figure1_data([1, 100, 784], [1, 2], [0.1, 0.01])
    for row in rows:
        model = BoundModel(row["d"], row["n"], row["epsilon"])
        assert row["bitwidth_opt"] == bitwidth_opt(model)
        if row["lambda"] == 2.0:
            assert row["scaled_derivative"] < 0
        theta2 = model.theta2
        lam = row["lambda"]
        assert row["scaled_derivative"] == pytest.approx(dM_dlam(lam, model) * theta2 ** (-lam / (lam - 1)))
    text = figure1_csv(rows)
    assert text.count("\n") == len(rows) + 5
    assert "d,n,epsilon,lambda,scaled_derivative,bitwidth_opt" in text
