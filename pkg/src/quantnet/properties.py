"""Deterministic property suite over every module.

Each check yields a :class:`PropertyResult`.  ``max_slack`` is the worst
observed ``value - bound`` for inequality checks (<= 0 means it held) and the
worst absolute mismatch for equality checks.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from . import bounds, dependent, gadgets, independent, serialize
from .core import QuantizedNetwork, complexity, eval_exact, eval_f64, validate
from .functions import get_function, random_pwl

SIZES = {
    "small": {"r_max": 4, "grid": 65, "pwl": 4, "eps": (0.5, 0.25), "models": 20, "weights": 8},
    "full": {"r_max": 8, "grid": 257, "pwl": 50, "eps": (0.5, 0.25, 0.1), "models": 100, "weights": 64},
}


@dataclass
class PropertyResult:
    module: str
    name: str
    passed: bool
    count: int
    max_slack: float
    detail: str = ""


class _Recorder:
    def __init__(self):
        self.results: list[PropertyResult] = []

    def add(self, module, name, passed, count, slack, detail=""):
        self.results.append(PropertyResult(module, name, bool(passed), int(count), float(slack), detail))

    def guard(self, module, name, fn):
        try:
            fn()
        except Exception as exc:  # a crashing check is a failing check
            self.add(module, name, False, 0, math.inf, f"{type(exc).__name__}: {exc}")


def _squaring_checks(rec: _Recorder, r: int, net: QuantizedNetwork, grid: int):
    # breakpoint exactness
    bad = 0
    worst = Fraction(0)
    for k in range(2 ** r + 1):
        x = Fraction(k, 2 ** r)
        diff = abs(eval_exact(net, [x]) - x * x)
        worst = max(worst, diff)
        bad += diff != 0
    rec.add("gadgets", f"squaring_breakpoints_exact[r={r}]", bad == 0, 2 ** r + 1, float(worst))
    # monotone on a grid
    xs = np.linspace(0.0, 1.0, grid * 2 ** r + 1)
    ys = eval_f64(net, xs[:, None])
    drop = float(np.max(-np.diff(ys), initial=0.0))
    rec.add("gadgets", f"squaring_monotone[r={r}]", drop <= 0, len(xs), drop)
    # saturation: error at every midpoint is exactly 2^-2(r+1), the grid max equals it
    bound = Fraction(1, 2 ** (2 * (r + 1)))
    mids = [Fraction(2 * k + 1, 2 ** (r + 1)) for k in range(2 ** r)]
    mid_err = [eval_exact(net, [x]) - x * x for x in mids]
    grid_err = float(np.max(np.abs(ys - xs ** 2)))
    ok = all(e == bound for e in mid_err) and grid_err <= float(bound) * (1 + 1e-12)
    rec.add("gadgets", f"squaring_error_saturation[r={r}]", ok, len(mids) + len(xs), grid_err - float(bound))


def run_property_suite(seed: int = 0, sizes: str = "small", mutate: str | None = None) -> dict:
    """Run every invariant check; ``mutate='squaring'`` runs the squaring checks on a
    copy with one flipped weight, which must make them fail."""
    from .verify import flip_weight, reference_interp_oracle

    cfg = SIZES[sizes]
    rng = random.Random(seed)
    rec = _Recorder()
    catalog: list[QuantizedNetwork] = []

    # --- gadgets
    def squaring():
        for r in range(1, cfg["r_max"] + 1):
            net = gadgets.build_squaring(r)
            catalog.append(net)
            if mutate == "squaring":
                net = flip_weight(net, seed + r)
            _squaring_checks(rec, r, net, 8)

    def oracle():
        worst, count = Fraction(0), 0
        for r in range(1, cfg["r_max"] + 1):
            net = gadgets.build_squaring(r)
            if mutate == "squaring":
                net = flip_weight(net, seed + r)
            bps = [Fraction(k, 2 ** r) for k in range(2 ** r + 1)]
            g = reference_interp_oracle(bps, [x * x for x in bps])
            for k in range(4 * 2 ** r + 1):
                x = Fraction(k, 4 * 2 ** r)
                worst = max(worst, abs(eval_exact(net, [x]) - g(x)))
                count += 1
        rec.add("verify", "oracle_matches_squaring", worst == 0, count, float(worst))

    def mult():
        for r in (2, 3):
            net = gadgets.build_multiplier(r)
            catalog.append(net)
            ax = np.linspace(-1.0, 1.0, cfg["grid"])
            X, Y = np.meshgrid(ax, ax, indexing="ij")
            pts = np.stack([X.ravel(), Y.ravel()], -1)
            v = eval_f64(net, pts).reshape(X.shape)
            asym = float(np.max(np.abs(v - v.T)))
            rec.add("gadgets", f"multiplier_symmetry[r={r}]", asym == 0, v.size, asym)
            bound = 6 * 2.0 ** (-2 * (r + 1))
            err = float(np.max(np.abs(v - X * Y)))
            rec.add("gadgets", f"multiplier_bound[r={r}]", err <= bound, v.size, err - bound)
            zs = [Fraction(rng.randint(-64, 64), 64) for _ in range(16)]
            zero = max(max(abs(eval_exact(net, [z, 0])), abs(eval_exact(net, [0, z]))) for z in zs)
            rec.add("gadgets", f"multiplier_zero[r={r}]", zero == 0, 2 * len(zs), float(zero))

    def weights():
        worst, count, cnt_slack = Fraction(0), 0, -math.inf
        for _ in range(cfg["weights"]):
            lam = rng.choice([2, 3, 4])
            t = rng.choice([4, 6, 9])
            w = Fraction(rng.randint(-2 ** 12, 2 ** 12), 2 ** 12)
            net = gadgets.build_weight_gadget_nonlinear(w, t, lam)
            catalog.append(net)
            for _ in range(4):
                x = Fraction(rng.randint(-256, 256), 256)
                a = Fraction(rng.randint(0, 8), 8)
                y = eval_exact(net, [x])
                if abs(a * x) <= 1:
                    worst = max(worst, abs(eval_exact(net, [a * x]) - a * y))
                worst = max(worst, abs(eval_exact(net, [-x]) + y))
                count += 1
            te, rho = net.meta["t_effective"], net.meta["rho"]
            c = complexity(net)
            cnt_slack = max(cnt_slack, c.weight_count - (4 * te * lam * (rho - 1) + 8 * te + 4),
                            (c.depth - 1) - (lam * (rho - 1) + 1))
        rec.add("gadgets", "weight_gadget_linearity", worst == 0, count, float(worst))
        rec.add("gadgets", "weight_gadget_counts", cnt_slack <= 0, cfg["weights"], cnt_slack)

    def hblock():
        worst = Fraction(0)
        count = 0
        for N, m in ((4, 0), (4, 2), (5, 5)):
            net = gadgets.build_h_block(N, m)
            catalog.append(net)
            for k in range(24 * N + 1):
                x = Fraction(k, 24 * N)
                want = independent.trapezoid_value(3 * N * x - 3 * m)
                worst = max(worst, abs(eval_exact(net, [x]) - want))
                count += 1
        rec.add("gadgets", "h_block_trapezoid", worst == 0, count, float(worst))

    # --- function-independent synthesis
    def partition():
        for d in (1, 2):
            plan = independent.plan_independent(d, 1, 0.5 if d == 1 else Fraction(9, 10))
            net = independent.build_partition(plan)
            catalog.append(net)
            N = plan.N
            pts = np.array([[rng.random() for _ in range(d)] for _ in range(200)])
            h = eval_f64(net, pts).reshape(len(pts), d, N + 1)
            psi = np.ones((len(pts),) + (N + 1,) * d)
            for k in range(d):
                shape = [len(pts)] + [1] * d
                shape[k + 1] = N + 1
                psi = psi * h[:, k, :].reshape(shape)
            sums = psi.reshape(len(pts), -1).sum(1)
            pou = float(np.max(np.abs(sums - 1)))
            rec.add("independent", f"partition_of_unity[d={d}]", pou <= 1e-9, len(pts), pou)
            grid = np.stack(np.meshgrid(*[np.arange(N + 1)] * d, indexing="ij"), -1).reshape(-1, d) / N
            flat = psi.reshape(len(pts), -1)
            dist = np.max(np.abs(pts[:, None, :] - grid[None, :, :]), axis=2)
            outside = float(np.max(np.where(dist >= 2 / (3 * N), np.abs(flat), 0.0)))
            rec.add("independent", f"support[d={d}]", outside == 0, flat.size, outside)
            active = int(np.max(np.sum(flat != 0, axis=1)))
            rec.add("independent", f"active_blocks[d={d}]", active <= 2 ** d, len(pts), active - 2 ** d)

    def end_to_end():
        from .verify import sup_error

        cases = [("linear:x_half", 1, 1), ("abs_centered", 1, 1), ("poly:x2_half", 1, 2)]
        for name, d, n in cases:
            for eps in cfg["eps"]:
                f = get_function(name)
                plan = independent.plan_independent(d, n, eps)
                net = independent.build_independent(f, plan)
                catalog.append(net)
                budget = float(independent.error_budget(plan)["total"])
                cert = sup_error(net, f, Fraction(1, 8 * plan.N), eps)
                rec.add("independent", f"end_to_end[{name},eps={eps}]",
                        cert.passed and cert.measured_sup_error <= budget, cert.points,
                        cert.certified_sup_error - float(eps))

    def counting():
        ratios = []
        f = get_function("abs_centered")
        for eps in (0.5, 0.25, 0.1, 0.05):
            plan = independent.plan_independent(1, 1, eps)
            net = independent.build_independent(f, plan)
            s = plan.scheme()
            ratios.append(complexity(net).weight_count / (plan.lam * s.t ** (1 / (plan.lam - 1) + 1) * plan.N))
        rec.add("independent", "weight_count_trend", ratios[-1] <= 1.5 * ratios[0], len(ratios),
                ratios[-1] - 1.5 * ratios[0], "ratios " + ", ".join(f"{r:.3f}" for r in ratios))

    # --- function-dependent synthesis
    def prop4():
        lip_worst, bp_bad, err_worst, one_bad, count = 0.0, 0, -math.inf, 0, 0
        for s in range(cfg["pwl"]):
            p = random_pwl(seed * 1000 + s)
            for T in (4, 16):
                for t in (2, 4):
                    bp = dependent.ftilde_breakpoints(p, t, T)
                    xs = [Fraction(k, 16 * T) for k in range(16 * T + 1)]
                    vals = [dependent.ftilde_eval(p, t, T, x, bp) for x in xs]
                    for a, b, va, vb in zip(xs, xs[1:], vals, vals[1:]):
                        lip_worst = max(lip_worst, float(abs(vb - va) / (b - a)) - 1)
                    for i in range(T + 1):
                        x = Fraction(i, T)
                        want = Fraction(math.ceil(T * p(x) * 2 ** t), 2 ** t * T)
                        bp_bad += bp[i] != want or vals[16 * i] != want
                        one_bad += bp[i] < p(x)
                    bound = Fraction(1, 2 ** t * T)
                    err_worst = max(err_worst, max(float(abs(v - p(x)) - bound) for x, v in zip(xs, vals)))
                    count += len(xs)
        rec.add("dependent", "prop4_lipschitz", lip_worst <= 1e-9, count, lip_worst)
        rec.add("dependent", "prop4_breakpoints", bp_bad == 0, count, bp_bad)
        rec.add("dependent", "prop4_error", err_worst <= 0, count, err_worst)
        rec.add("dependent", "one_sided", one_bad == 0, count, one_bad)

    def dep_end_to_end():
        from .verify import sup_error

        for s in range(min(cfg["pwl"], 3)):
            f = get_function(f"pwl:seed={seed * 1000 + s}:kinks=7")
            for strat in dependent.Strategy:
                for eps in (0.2, 0.1):
                    net = dependent.build_dependent(f, eps, 2, "nonlinear", strat)
                    catalog.append(net)
                    plan = net.meta["plan"]
                    cert = sup_error(net, f, Fraction(1, 8 * plan["T"] * 2 ** plan["t"]), eps)
                    rec.add("dependent", f"end_to_end[{strat.value},seed={s},eps={eps}]", cert.passed,
                            cert.points, cert.certified_sup_error - eps)

    # --- bounds
    def bound_props():
        inc_bad, min_bad, inv_bad = 0, 0, 0
        lams = [2.0 * 2 ** (k / 8) for k in range(0, 8 * 19)]
        for _ in range(cfg["models"]):
            d = int(10 ** rng.uniform(0, 6))
            n = rng.choice([1, 2, 4])
            eps = 10 ** rng.uniform(-4, math.log10(0.49))
            model = bounds.BoundModel(d, n, eps)
            vals = [bounds.ms(lam, model) for lam in lams]
            inc_bad += any(b <= a for a, b in zip(vals, vals[1:]))
            lo = bounds.lambda_opt(model)
            m0 = bounds.memory_bound(lo, model)
            scan = np.linspace(2.0, 10 * lo, 2000)
            min_bad += any(bounds.memory_bound(float(x), model) < m0 * (1 - 1e-12) for x in scan)
            for th in (0.1, 10.0):
                other = bounds.lambda_opt(bounds.BoundModel(d, n, eps, th))
                inv_bad += abs(other - lo) > 1e-9 * lo
        rec.add("bounds", "ms_strictly_increasing", inc_bad == 0, cfg["models"], inc_bad)
        rec.add("bounds", "lambda_opt_minimal", min_bad == 0, cfg["models"], min_bad)
        rec.add("bounds", "theta1_invariance", inv_bad == 0, 2 * cfg["models"], inv_bad)

    # --- core
    def core_props():
        bad = [n.meta.get("name", "?") for n in catalog if validate(n)]
        rec.add("qnet-core", "validate_empty", not bad, len(catalog), len(bad), ", ".join(bad[:5]))
        worst_rt, worst_fe, count = 0.0, 0.0, 0
        for net in catalog[:: max(1, len(catalog) // 12)]:
            back = serialize.from_json(serialize.to_json(net))
            for _ in range(5):
                lo_hi = net.domain or ((Fraction(0), Fraction(1)),) * net.input_dim
                x = [lo + (hi - lo) * Fraction(rng.randint(0, 1024), 1024) for lo, hi in lo_hi]
                a, b = eval_exact(net, x), eval_exact(back, x)
                a0 = a[0] if isinstance(a, tuple) else a
                if a != b:
                    worst_rt = 1.0
                fv = eval_f64(net, [float(v) for v in x])
                fv0 = float(np.ravel(fv)[0])
                worst_fe = max(worst_fe, abs(fv0 - float(a0)))
                count += 1
        rec.add("qnet-core", "json_roundtrip_identical", worst_rt == 0, count, worst_rt)
        rec.add("qnet-core", "float_exact_agree", worst_fe <= 1e-12, count, worst_fe)

    steps = [
        ("gadgets", "squaring", squaring),
        ("verify", "oracle", oracle),
        ("gadgets", "multiplier", mult),
        ("gadgets", "weights", weights),
        ("gadgets", "h_block", hblock),
        ("independent", "partition", partition),
        ("independent", "end_to_end", end_to_end),
        ("independent", "counting", counting),
        ("dependent", "prop4", prop4),
        ("dependent", "end_to_end", dep_end_to_end),
        ("bounds", "bounds", bound_props),
        ("qnet-core", "core", core_props),
    ]
    for module, name, fn in steps:
        rec.guard(module, name, fn)
    results = [asdict(r) for r in rec.results]
    return {
        "schema": "qnet-suite/1",
        "seed": seed,
        "sizes": sizes,
        "mutate": mutate,
        "passed": all(r["passed"] for r in results),
        "failed": [f"{r['module']}.{r['name']}" for r in results if not r["passed"]],
        "properties": results,
    }


def format_table(report: dict) -> str:
    rows = [("module", "property", "ok", "count", "max_slack")]
    for r in report["properties"]:
        rows.append((r["module"], r["name"], "PASS" if r["passed"] else "FAIL", str(r["count"]), f"{r['max_slack']:.3g}"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    lines.append(f"overall: {'PASS' if report['passed'] else 'FAIL'}")
    return "\n".join(lines)

