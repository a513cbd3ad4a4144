"""Certification: grid sup-norm error, exact audits, an independent oracle, property suite."""

from __future__ import annotations

import bisect
import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import Edge, Layer, NetworkError, QuantizedNetwork, Unit, edges, eval_exact, eval_f64
from .functions import TargetFunction

DEFAULT_POINT_CAP = 20_000_000


@dataclass
class Certificate:
    grid_spacing: Fraction
    measured_sup_error: float
    certified_sup_error: float
    target_epsilon: float | None
    passed: bool
    lipschitz_bound: float
    lipschitz_source: str
    slope_slack: float
    argmax: list[float]
    exact_error_at_argmax: float
    float_exact_gap: float
    points: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_spacing"] = f"{self.grid_spacing.numerator}/{self.grid_spacing.denominator}"
        d["pass"] = d.pop("passed")
        d["schema"] = "qnet-cert/1"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class GridTooLarge(NetworkError):
    pass


def _grid_axis(k: int) -> np.ndarray:
    return np.arange(k + 1, dtype=np.float64) / k


def _scan(net: QuantizedNetwork, f: TargetFunction, k: int, workers: int):
    """Evaluate net - f on the (k+1)**d grid; returns error array shaped (k+1,)*d and net values."""
    d = net.input_dim
    ax = _grid_axis(k)
    pts = np.stack(np.meshgrid(*[ax] * d, indexing="ij"), -1).reshape(-1, d)
    blocks = np.array_split(np.arange(len(pts)), max(1, workers) * 4)

    def run(idx):
        p = pts[idx]
        return eval_f64(net, p, chunk=4096)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    vals = np.concatenate(parts)
    fv = f.eval_f64(pts)
    shape = (k + 1,) * d
    return pts, vals.reshape(shape), fv.reshape(shape)


def _axis_slope(vals: np.ndarray, spacing: float) -> float:
    total = 0.0
    for ax in range(vals.ndim):
        if vals.shape[ax] > 1:
            total += float(np.max(np.abs(np.diff(vals, axis=ax)))) / spacing
    return total


def sup_error(
    net: QuantizedNetwork,
    f: TargetFunction,
    grid_spacing,
    eps=None,
    lipschitz: float | None = None,
    point_cap: int = DEFAULT_POINT_CAP,
    workers: int = 1,
) -> Certificate:
    """Uniform-grid sup-norm error with a Lipschitz slack.

    The certified value is ``measured + 2 * spacing * L`` with L the larger of
    the per-axis slope sums of f and the network.  L for the network comes
    from ``lipschitz``, else from ``net.meta['lipschitz_net']`` when the
    construction knows it, else from the sampled grid slopes.
    """
    if net.input_dim != f.d:
        raise NetworkError(f"network has {net.input_dim} inputs, function {f.d}")
    h = Fraction(grid_spacing)
    if h <= 0:
        raise NetworkError("grid spacing must be positive")
    if (1 / h).denominator != 1:
        raise NetworkError("grid spacing must be 1/k for an integer k")
    k = int(1 / h)
    if (k + 1) ** net.input_dim > point_cap:
        raise GridTooLarge(f"{(k + 1) ** net.input_dim} grid points exceed cap {point_cap}")
    pts, vals, fv = _scan(net, f, k, workers)
    err = np.abs(vals - fv)
    flat = int(np.argmax(err))
    measured = float(err.reshape(-1)[flat])
    hf = float(h)
    lf = _axis_slope(fv, hf)
    if lipschitz is not None:
        lnet, source = float(lipschitz), "supplied"
    elif "lipschitz_net" in net.meta and net.meta["lipschitz_net"] != "sampled":
        lnet, source = float(Fraction(net.meta["lipschitz_net"])), "construction"
    else:
        lnet, source = _axis_slope(vals, hf), "sampled"
    L = max(lf, lnet, float(f.d))
    slack = 2 * hf * L
    # exact audit on the argmax point
    pt = [Fraction(int(round(v * k)), k) for v in pts[flat]]
    exact_net = eval_exact(net, pt)
    exact_err = float(abs(exact_net - f.eval(pt)))
    gap = abs(float(exact_net) - float(vals.reshape(-1)[flat]))
    certified = measured + slack
    target = None if eps is None else float(eps)
    return Certificate(
        grid_spacing=h,
        measured_sup_error=measured,
        certified_sup_error=certified,
        target_epsilon=target,
        passed=target is None or certified <= target,
        lipschitz_bound=L,
        lipschitz_source=source,
        slope_slack=slack,
        argmax=[float(v) for v in pt],
        exact_error_at_argmax=exact_err,
        float_exact_gap=gap,
        points=int(err.size),
    )


def default_spacing(net: QuantizedNetwork) -> Fraction:
    """1/(8N) for function-independent builds, 1/(8 T 2**t) for function-dependent ones."""
    plan = net.meta.get("plan") or {}
    if "N" in plan:
        return Fraction(1, 8 * int(plan["N"]))
    if "T" in plan:
        return Fraction(1, 8 * int(plan["T"]) * 2 ** int(plan["t"]))
    return Fraction(1, 1024)


def reference_interp_oracle(xs: Sequence, ys: Sequence) -> Callable[[Fraction], Fraction]:
    """Exact piecewise-linear interpolant through (xs, ys), clamped outside the range.

    Written against the standard library only; it shares nothing with the
    network evaluators so the two can check each other.
    """
    xs = [Fraction(x) for x in xs]
    ys = [Fraction(y) for y in ys]
    if len(xs) != len(ys) or not xs:
        raise ValueError("need equally many (and at least one) abscissae and values")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError("breakpoints must be strictly increasing")

    def g(x) -> Fraction:
        x = Fraction(x)
        if x <= xs[0]:
            return ys[0]
        if x >= xs[-1]:
            return ys[-1]
        j = bisect.bisect_right(xs, x) - 1
        w = (x - xs[j]) / (xs[j + 1] - xs[j])
        return ys[j] + w * (ys[j + 1] - ys[j])

    return g


def flip_weight(net: QuantizedNetwork, seed: int = 0, which: int | None = None) -> QuantizedNetwork:
    """Copy of ``net`` with a single edge weight negated (the negation must be a codebook value)."""
    cands = []
    for k, layer in enumerate(net.layers):
        for u, unit in enumerate(layer.units):
            for j, e in enumerate(unit.incoming):
                if -e.weight in net.codebook and e.weight != 0:
                    cands.append((k, u, j))
    if not cands:
        raise NetworkError("no sign-flippable weight")
    k, u, j = cands[which % len(cands)] if which is not None else random.Random(seed).choice(cands)
    layers = list(net.layers)
    unit = layers[k].units[u]
    e = unit.incoming[j]
    edges = list(unit.incoming)
    edges[j] = Edge(e.src, -e.weight, e.mult, e.src_layer)
    units = list(layers[k].units)
    units[u] = Unit(unit.activation, tuple(edges))
    layers[k] = Layer(tuple(units), layers[k].has_constant_unit)
    return QuantizedNetwork(net.codebook, tuple(layers), net.input_dim, net.domain, dict(net.meta, mutated=[k, u, j]))


def count_flippable(net: QuantizedNetwork) -> int:
    return sum(1 for _, _, e in edges(net) if -e.weight in net.codebook)


# property suite lives in its own module to keep this one small
from .properties import run_property_suite  # noqa: E402,F401
