from fractions import Fraction as F

import numpy as np
import pytest

from quantnet.core import NetworkError, eval_exact, eval_f64
from quantnet.dependent import build_dependent
from quantnet.functions import TargetFunction, get_function
from quantnet.gadgets import build_squaring
from quantnet.independent import build_independent, plan_independent
from quantnet.verify import (
    GridTooLarge,
    count_flippable,
    default_spacing,
    flip_weight,
    reference_interp_oracle,
    run_property_suite,
    sup_error,
)


def square_fn():
    return TargetFunction.from_callable(lambda x: x * x, 1, 1, name="square")


def test_squaring_measured_error():
    net = build_squaring(3)
    f = get_function("poly:x2_half")
    # the squaring net approximates x**2, i.e. 2 f
    xs = np.arange(8193) / 8192
    err = np.max(np.abs(eval_f64(net, xs[:, None]) - xs ** 2))
    assert err == 2.0 ** -8
    assert f.d == 1


def test_oracle_example():
    g = reference_interp_oracle([0, F(1, 2), 1], [0, F(1, 4), 1])
    assert g(F(1, 4)) == F(1, 8)
    assert g(-1) == 0 and g(2) == 1


@pytest.mark.parametrize("r", range(1, 7))
def test_oracle_against_squaring(r):
    net = build_squaring(r)
    bps = [F(k, 2 ** r) for k in range(2 ** r + 1)]
    g = reference_interp_oracle(bps, [b * b for b in bps])
    for k in range(0, 4097, 37):
        x = F(k, 4096)
        assert eval_exact(net, [x]) == g(x)


def test_oracle_rejects_unsorted():
    with pytest.raises(ValueError):
        reference_interp_oracle([0, 1, F(1, 2)], [0, 1, 2])
    with pytest.raises(ValueError):
        reference_interp_oracle([0, 1], [0])


def test_certificate_pass_and_fail():
    p = plan_independent(1, 1, F(1, 2))
    f = get_function("linear:x_half")
    net = build_independent(f, p)
    h = default_spacing(net)
    assert h == F(1, 96)
    ok = sup_error(net, f, h, eps=F(1, 2))
    assert ok.passed and ok.certified_sup_error == ok.measured_sup_error + ok.slope_slack
    assert ok.exact_error_at_argmax == pytest.approx(ok.measured_sup_error, abs=1e-12)
    bad = sup_error(net, f, h, eps=ok.measured_sup_error / 2)
    assert not bad.passed
    doc = ok.to_dict()
    assert doc["pass"] is True and doc["schema"] == "qnet-cert/1"


def test_certificate_uses_construction_slope():
    f = get_function("pwl:seed=3:kinks=7")
    net = build_dependent(f, F(1, 10))
    cert = sup_error(net, f, default_spacing(net), eps=F(1, 10))
    assert cert.lipschitz_source == "construction"
    assert cert.passed


def test_sup_error_argument_checks():
    net = build_squaring(2)
    with pytest.raises(NetworkError):
        sup_error(net, square_fn(), F(2, 7))
    with pytest.raises(NetworkError):
        sup_error(net, get_function("poly:xy_half"), F(1, 8))
    with pytest.raises(GridTooLarge):
        sup_error(net, square_fn(), F(1, 10 ** 6), point_cap=1000)


def test_flip_weight_changes_function():
    net = build_squaring(3)
    assert count_flippable(net) > 0
    seen = 0
    for which in range(count_flippable(net)):
        bad = flip_weight(net, which=which)
        xs = np.arange(257)[:, None] / 256
        if np.any(eval_f64(bad, xs) != eval_f64(net, xs)):
            seen += 1
    assert seen > 0


def test_property_suite_small_passes():
    rep = run_property_suite(seed=0, sizes="small")
    assert rep["passed"] and rep["failed"] == [], rep["failed"]
    assert len(rep["properties"]) > 10


def test_property_suite_detects_mutation():
    rep = run_property_suite(seed=0, sizes="small", mutate="squaring")
    assert not rep["passed"]
    assert any(name.startswith("gadgets.") for name in rep["failed"])
