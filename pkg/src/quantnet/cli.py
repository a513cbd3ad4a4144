"""Command-line front end.

Exit codes: 0 success, 1 certificate or suite failure, 2 invalid configuration,
3 resource cap exceeded, 4 invalid network artifact.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import bounds, serialize
from .core import MalformedNetworkError, NetworkError, complexity, eval_exact, validate
from .dependent import Strategy, build_dependent, plan_dependent
from .functions import REGISTRY_HELP, get_function
from .independent import DEFAULT_WEIGHT_CAP, ResourceCapError, build_independent, plan_independent
from .verify import default_spacing, sup_error

OK, CERT_FAIL, BAD_CONFIG, RESOURCE_CAP, BAD_ARTIFACT = 0, 1, 2, 3, 4


class ConfigError(Exception):
    pass


def _dump(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _floats(s: str) -> list[float]:
    return [float(v) for v in str(s).split(",") if v.strip()]


def _ints(s: str) -> list[int]:
    return [int(float(v)) for v in str(s).split(",") if v.strip()]


def _rational(s) -> Fraction:
    try:
        return Fraction(str(s))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {s!r}") from None


# ---------------------------------------------------------------------------


def cmd_synth(a) -> int:
    thm = int(a.thm)
    if thm not in (1, 2, 3, 4):
        raise ConfigError("--thm must be 1, 2, 3 or 4")
    f = get_function(a.f, a.d, a.n)
    d = a.d if a.d is not None else f.d
    n = a.n if a.n is not None else f.n
    if thm in (3, 4) and (d != 1 or n != 1):
        raise ConfigError(f"theorem {thm} is the function-dependent structure, defined for d = n = 1 only")
    if d != f.d or n > f.n:
        raise ConfigError(f"function {a.f} has d={f.d}, n={f.n}; requested d={d}, n={n}")
    if a.eps is None:
        raise ConfigError("--eps is required")
    eps = _rational(a.eps)
    lam = int(a.lam)
    mode = "linear" if thm in (2, 4) else "nonlinear"
    cap = None if a.weight_cap in (None, 0) else int(a.weight_cap)
    if thm in (1, 2):
        plan = plan_independent(d, n, eps, lam, mode)
        net = build_independent(f, plan, cap)
        predicted = dict(plan.predicted)
    else:
        plan = plan_dependent(eps, a.strategy, lam, mode)
        net = build_dependent(f, plan=plan)
        predicted = bounds.bound_formulas(f"T{thm}", 1, 1, float(eps), lam)
    rep = complexity(net, predicted)
    if a.out:
        serialize.save(net, a.out)
    report = {"schema": "qnet-report/1", "complexity": rep.to_dict(), "plan": net.meta.get("plan"),
              "function": f.name, "theorem": thm}
    if a.report:
        _dump(report, a.report)
    pw = predicted.get("weights")
    print(f"synth thm={thm} f={f.name} eps={float(eps)} lambda={lam} mode={mode} depth={rep.depth} "
          f"width={rep.max_width} weights={rep.weight_count} bits={rep.memory_bits} "
          f"predicted_weights={pw:.4g} predicted_bits={predicted.get('bits', 0):.4g}")
    return OK


def _load_net(path):
    net = serialize.load(path)
    problems = validate(net)
    if problems:
        for p in problems[:20]:
            print(f"violation: {p}", file=sys.stderr)
        raise MalformedNetworkError(f"{len(problems)} validation violations")
    return net


def cmd_eval(a) -> int:
    net = _load_net(a.net)
    pts = [[_rational(v) for v in p.split(",")] for p in (a.x or [])]
    out = []
    for p in pts:
        if len(p) != net.input_dim:
            raise ConfigError(f"point {p} has wrong dimension (network takes {net.input_dim})")
        y = eval_exact(net, p)
        ys = list(y) if isinstance(y, tuple) else [y]
        out.append({"x": [str(v) for v in p], "y": [str(v) for v in ys], "y_float": [float(v) for v in ys]})
    _dump({"schema": "qnet-eval/1", "results": out}, a.out)
    return OK


def cmd_certify(a) -> int:
    net = _load_net(a.net)
    fname = a.f or net.meta.get("function")
    if not fname:
        raise ConfigError("--f is required (the network does not name its function)")
    f = get_function(fname, net.input_dim, 1)
    eps = a.eps
    if eps is None:
        plan = net.meta.get("plan") or {}
        eps = plan.get("epsilon")
    if eps is None:
        raise ConfigError("--eps is required")
    eps = _rational(eps)
    spacing = _rational(a.spacing) if a.spacing else default_spacing(net)
    cert = sup_error(net, f, spacing, eps, workers=int(a.workers))
    if a.out:
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(cert.to_json() + "\n")
    status = "PASS" if cert.passed else "FAIL"
    print(f"certify {status} measured={cert.measured_sup_error:.6g} certified={cert.certified_sup_error:.6g} "
          f"eps={float(eps):.6g} spacing={spacing} points={cert.points}")
    return OK if cert.passed else CERT_FAIL


def cmd_bounds(a) -> int:
    if a.eps is None:
        raise ConfigError("--eps is required")
    eps, lam = float(a.eps), float(a.lam)
    d, n = int(a.d or 1), int(a.n or 1)
    out = {"schema": "qnet-bounds/1", "theorem": a.theorem, "d": d, "n": n, "epsilon": eps, "lambda": lam,
           "dominant_terms": bounds.bound_formulas(a.theorem, d, n, eps, lam),
           "overhead": bounds.overhead_report(d, n, eps, lam)}
    if eps < 0.5:
        out["optimum"] = bounds.projections(bounds.BoundModel(d, n, eps))
    _dump(out, a.out)
    return OK


def cmd_bitwidth(a) -> int:
    ds, ns, es = _ints(a.d_list), _ints(a.n_list), _floats(a.eps_list)
    if any(e >= 0.5 or e <= 0 for e in es):
        raise ConfigError("every epsilon must lie in (0, 1/2): there is no interior minimum otherwise")
    rows = bounds.emit_figure1_data(ds, ns, es)
    text = bounds.figure1_csv(rows)
    if a.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if a.gnuplot:
        with open(a.gnuplot, "w", encoding="utf-8") as fh:
            fh.write("# d n epsilon lambda scaled_derivative bitwidth_opt\n")
            for r in rows:
                fh.write(f"{r['d']} {r['n']} {r['epsilon']!r} {r['lambda']!r} {r['scaled_derivative']!r} {r['bitwidth_opt']!r}\n")
    for d in ds:
        for n in ns:
            for e in es:
                bw = bounds.bitwidth_opt(bounds.BoundModel(d, n, e))
                print(f"bitwidth d={d} n={n} eps={e} bitwidth_opt={bw:.4f}", file=sys.stderr)
    return OK


def cmd_suite(a) -> int:
    from .properties import format_table, run_property_suite

    rep = run_property_suite(int(a.seed), a.sizes, a.mutate)
    if a.out:
        _dump(rep, a.out)
    print(format_table(rep))
    return OK if rep["passed"] else CERT_FAIL


# ---------------------------------------------------------------------------

COMMON_DEFAULTS = {
    "synth": {"lam": 2, "strategy": "InterpolationOnly", "weight_cap": DEFAULT_WEIGHT_CAP},
    "certify": {"workers": 1},
    "bounds": {"theorem": "T1", "lam": 2},
    "bitwidth": {"d_list": "784,3072,150528", "n_list": "1", "eps_list": "0.1,0.01"},
    "suite": {"seed": 0, "sizes": "small"},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quantnet", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat JSON object whose keys mirror flag names (flags win)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="build a network for theorem 1-4")
    s.add_argument("--thm", required=True)
    s.add_argument("--f", required=True, help="; ".join(f"{k}: {v}" for k, v in REGISTRY_HELP.items()))
    s.add_argument("--d", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--eps")
    s.add_argument("--lambda", dest="lam", type=int)
    s.add_argument("--strategy", choices=[x.value for x in Strategy])
    s.add_argument("--weight-cap", type=int, help="refuse builds predicted above this many weights (0 = no cap)")
    s.add_argument("--out", help="network JSON path")
    s.add_argument("--report", help="complexity report JSON path")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="evaluate a network exactly")
    e.add_argument("--net", required=True)
    e.add_argument("--x", action="append", help="comma-separated point, repeatable")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("certify", help="grid sup-error certificate")
    c.add_argument("--net", required=True)
    c.add_argument("--f")
    c.add_argument("--eps")
    c.add_argument("--spacing", help="grid spacing 1/k (default from the build plan)")
    c.add_argument("--workers", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    b = sub.add_parser("bounds", help="dominant-term bounds and overhead ratios")
    b.add_argument("--theorem", choices=list(bounds.THEOREMS))
    b.add_argument("--d", type=int)
    b.add_argument("--n", type=int)
    b.add_argument("--eps")
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    w = sub.add_parser("bitwidth", help="optimal bit-width table (CSV)")
    w.add_argument("--d", dest="d_list")
    w.add_argument("--n", dest="n_list")
    w.add_argument("--eps", dest="eps_list")
    w.add_argument("--out")
    w.add_argument("--gnuplot")
    w.set_defaults(func=cmd_bitwidth)

    q = sub.add_parser("suite", help="run the property suite")
    q.add_argument("--seed", type=int)
    q.add_argument("--sizes", choices=["small", "full"])
    q.add_argument("--mutate", choices=["squaring"])
    q.add_argument("--out")
    q.set_defaults(func=cmd_suite)
    return p


_ALIASES = {"lambda": "lam", "weight-cap": "weight_cap", "weight_cap": "weight_cap"}


def _apply_config(a, parser) -> None:
    if a.config:
        try:
            with open(a.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {a.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a flat JSON object")
        if a.command == "bitwidth":
            cfg = {{"d": "d_list", "n": "n_list", "eps": "eps_list"}.get(k, k): v for k, v in cfg.items()}
        for key, val in cfg.items():
            if isinstance(val, (dict, list)):
                if a.command == "bitwidth" and isinstance(val, list):
                    val = ",".join(str(v) for v in val)
                else:
                    raise ConfigError(f"config value for {key!r} must be a scalar")
            attr = _ALIASES.get(key, key).replace("-", "_")
            if not hasattr(a, attr):
                raise ConfigError(f"unknown config key {key!r} for {a.command}")
            if getattr(a, attr) is None:
                setattr(a, attr, val)
    for key, val in COMMON_DEFAULTS.get(a.command, {}).items():
        if getattr(a, key, None) is None:
            setattr(a, key, val)


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        _apply_config(a, parser)
        return a.func(a)
    except ResourceCapError as exc:
        print(f"error: resource cap: predicted weights {exc.predicted} > cap {exc.cap}", file=sys.stderr)
        return RESOURCE_CAP
    except MalformedNetworkError as exc:
        print(f"error: invalid network artifact: {exc}", file=sys.stderr)
        return BAD_ARTIFACT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_CONFIG if a.command in ("synth", "bounds", "bitwidth", "suite") else BAD_ARTIFACT
    except (ConfigError, NetworkError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
