"""Target functions f in the unit Sobolev ball, with derivative oracles.

Built-in functions carry closed-form partials and exact rational values.
Arbitrary callables can be wrapped with :meth:`TargetFunction.from_callable`,
which falls back to finite differences for first-order partials.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import InputError, as_fraction

FD_STEP = 2.0 ** -20

Partial = Callable[[tuple[int, ...], Sequence[Fraction]], Fraction]


@dataclass(frozen=True)
class TargetFunction:
    name: str
    d: int
    n: int
    exact: Callable[[Sequence[Fraction]], Fraction]
    vector: Callable[[np.ndarray], np.ndarray]
    partial_fn: Partial | None = None
    lipschitz_certificate: bool = True
    fd_error: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, *x):
        return self.eval(x)

    def eval(self, x: Sequence) -> Fraction:
        if len(x) != self.d:
            raise InputError(f"{self.name} expects {self.d} inputs")
        return self.exact([as_fraction(v) for v in x])

    def eval_f64(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None] if self.d == 1 else pts[None, :]
        return self.vector(pts)

    def partial(self, nvec: tuple[int, ...], x: Sequence) -> Fraction:
        if len(nvec) != self.d or any(k < 0 for k in nvec):
            raise InputError(f"bad multi-index {nvec}")
        if sum(nvec) >= self.n:
            raise InputError(f"order {sum(nvec)} exceeds n-1 = {self.n - 1}")
        x = [as_fraction(v) for v in x]
        if sum(nvec) == 0:
            return self.exact(x)
        if self.partial_fn is None:
            raise InputError(f"{self.name} has no derivative oracle")
        return as_fraction(self.partial_fn(nvec, x))

    @classmethod
    def from_callable(cls, fn: Callable[..., float], d: int, n: int, name: str = "user") -> "TargetFunction":
        """Wrap a float function; first-order partials use central differences.

        The returned ``fd_error`` bounds the derivative error for functions
        whose first derivatives are 1-Lipschitz (h/2 truncation plus rounding).
        """
        if n > 2:
            raise InputError("finite-difference partials are only allowed for n <= 2")

        def exact(x):
            return Fraction(float(fn(*[float(v) for v in x])))

        def vector(pts):
            return np.array([fn(*row) for row in pts], dtype=np.float64)

        def partial(nvec, x):
            k = nvec.index(1)
            xf = [float(v) for v in x]
            lo, hi = list(xf), list(xf)
            lo[k] = max(0.0, xf[k] - FD_STEP)
            hi[k] = min(1.0, xf[k] + FD_STEP)
            return Fraction((fn(*hi) - fn(*lo)) / (hi[k] - lo[k]))

        return cls(name, d, n, exact, vector, partial, True, FD_STEP / 2 + 1e-9)


def _zero(d: int, n: int) -> TargetFunction:
    return TargetFunction(
        "zero", d, n, lambda x: Fraction(0), lambda p: np.zeros(len(p)), lambda nv, x: Fraction(0)
    )


def _monomial_half(name: str, d: int) -> TargetFunction:
    # x**2 / 2 for d = 1, x*y / 2 for d = 2; both have all partials <= 1
    if d == 1:
        def exact(x):
            return x[0] * x[0] / 2

        def partial(nv, x):
            return x[0]

        def vector(p):
            return p[:, 0] ** 2 / 2
    else:
        def exact(x):
            return x[0] * x[1] / 2

        def partial(nv, x):
            return x[1] / 2 if nv == (1, 0) else x[0] / 2

        def vector(p):
            return p[:, 0] * p[:, 1] / 2
    return TargetFunction(name, d, 2, exact, vector, partial)


def _linear(name: str, slope: Fraction) -> TargetFunction:
    return TargetFunction(
        name, 1, 1, lambda x: slope * x[0], lambda p: float(slope) * p[:, 0], None,
        params={"slope": str(slope)},
    )


def _abs_centered() -> TargetFunction:
    half = Fraction(1, 2)
    return TargetFunction("abs_centered", 1, 1, lambda x: abs(x[0] - half), lambda p: np.abs(p[:, 0] - 0.5))


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function given by knots and values."""

    knots: tuple[Fraction, ...]
    values: tuple[Fraction, ...]

    def __call__(self, x: Fraction) -> Fraction:
        ks, vs = self.knots, self.values
        if x <= ks[0]:
            i = 0
        elif x >= ks[-1]:
            i = len(ks) - 2
        else:
            lo, hi = 0, len(ks) - 1
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ks[mid] <= x:
                    lo = mid
                else:
                    hi = mid
            i = lo
        slope = (vs[i + 1] - vs[i]) / (ks[i + 1] - ks[i])
        return vs[i] + slope * (x - ks[i])

    def vector(self, xs: np.ndarray) -> np.ndarray:
        return np.interp(xs, [float(k) for k in self.knots], [float(v) for v in self.values])

    @property
    def slopes(self) -> list[Fraction]:
        ks, vs = self.knots, self.values
        return [(vs[i + 1] - vs[i]) / (ks[i + 1] - ks[i]) for i in range(len(ks) - 1)]


def random_pwl(seed: int, kinks: int = 7, res: int = 10) -> PiecewiseLinear:
    """Seeded random Lipschitz-1 piecewise-linear function on [0, 1] with |f| <= 1.

    Kinks, slopes and f(0) are multiples of 2**-res, so everything stays dyadic.
    """
    rng = random.Random(seed)
    q = 2 ** res
    inner = sorted(rng.sample(range(1, q), kinks))
    knots = [Fraction(0)] + [Fraction(k, q) for k in inner] + [Fraction(1)]
    vals = [Fraction(rng.randint(-q // 2, q // 2), q)]
    for a, b in zip(knots, knots[1:]):
        s = Fraction(rng.randint(-q, q), q)
        vals.append(vals[-1] + s * (b - a))
    # f(0) in [-1/2, 1/2] and the total variation is at most 1, but keep |f| <= 1 explicitly
    shift = max(Fraction(0), max(vals) - 1) + min(Fraction(0), min(vals) + 1)
    vals = [v - shift for v in vals]
    return PiecewiseLinear(tuple(knots), tuple(vals))


def pwl_function(seed: int, kinks: int = 7) -> TargetFunction:
    p = random_pwl(seed, kinks)
    return TargetFunction(
        f"pwl:seed={seed}:kinks={kinks}", 1, 1, lambda x: p(x[0]), lambda pts: p.vector(pts[:, 0]),
        params={"seed": seed, "kinks": kinks, "pwl": p},
    )


REGISTRY_HELP = {
    "zero": "f = 0 (any d; n taken from the call)",
    "identity": "f(x) = x, d = n = 1",
    "linear:x_half": "f(x) = x/2, d = n = 1",
    "linear:x_third": "f(x) = x/3, d = n = 1",
    "poly:x2_half": "f(x) = x^2/2, d = 1, n = 2",
    "poly:xy_half": "f(x, y) = xy/2, d = 2, n = 2",
    "abs_centered": "f(x) = |x - 1/2|, d = n = 1",
    "pwl:seed=K:kinks=J": "seeded random Lipschitz-1 piecewise-linear, d = n = 1",
}


def get_function(spec: str, d: int | None = None, n: int | None = None) -> TargetFunction:
    """Look up a built-in function by registry name."""
    if spec == "zero":
        return _zero(d or 1, n or 1)
    if spec == "identity":
        return _linear("identity", Fraction(1))
    if spec == "linear:x_half":
        return _linear(spec, Fraction(1, 2))
    if spec == "linear:x_third":
        return _linear(spec, Fraction(1, 3))
    if spec == "poly:x2_half":
        return _monomial_half(spec, 1)
    if spec == "poly:xy_half":
        return _monomial_half(spec, 2)
    if spec == "abs_centered":
        return _abs_centered()
    if spec.startswith("pwl:"):
        kv = {}
        for part in spec.split(":")[1:]:
            key, _, val = part.partition("=")
            kv[key] = val
        try:
            return pwl_function(int(kv.get("seed", 0)), int(kv.get("kinks", 7)))
        except ValueError:
            raise InputError(f"bad function spec {spec!r}") from None
    raise InputError(f"unknown function {spec!r}; known: {', '.join(REGISTRY_HELP)}")


def sobolev_check(f: TargetFunction, samples: int = 257) -> bool:
    """Sampled check that |f| <= 1 on a grid (a cheap sanity test, not a proof)."""
    axes = np.linspace(0.0, 1.0, samples if f.d == 1 else int(math.sqrt(samples)) + 1)
    grid = np.stack(np.meshgrid(*[axes] * f.d, indexing="ij"), -1).reshape(-1, f.d)
    return bool(np.all(np.abs(f.eval_f64(grid)) <= 1 + 1e-12))
