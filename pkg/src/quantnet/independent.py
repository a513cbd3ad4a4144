"""Function-independent synthesis for f in F_{d,n}: partition of unity plus local Taylor terms.

Layout of the built network, per input dimension k:

* ``X_k = 3N x_k`` through a doubling chain,
* a ladder of ramps ``relu(X_k - a)`` for integer shifts a in [-2, 3N+2],
* the trapezoid ``h(3N x_k - 3m)`` and the clamped offset
  ``z = clamp(3N x_k - 3m, -2, 2) / 2`` as exact combinations of ramps.

Every grid point m = (m_1..m_d) and multi-index |n| < n contributes the term
``T = prod_k h_k * prod_k z_k**n_k`` built from approximate multipliers
(prefix products are shared).  ``T * (2/(3N))**|n|`` approximates
``psi_m(x) (x - m/N)**n`` on the support of psi_m, so each term is combined with
the coefficient ``gamma = D^n f(m/N)/n! * (2/(3N))**|n|`` rounded to a dyadic
grid and realised by a weight gadget.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .builder import NetBuilder, Signal, total
from .core import Mode, NetworkError, QuantizedNetwork, as_fraction, complexity
from .functions import TargetFunction
from .gadgets import (
    WeightScheme,
    build_multiplier,
    clamped_offset,
    ladder,
    multiplier,
    nearest_multiple,
    scale_int,
    trapezoid,
    weighted_sum,
)

DEFAULT_WEIGHT_CAP = 10 ** 8


class ResourceCapError(NetworkError):
    def __init__(self, predicted: int, cap: int):
        super().__init__(f"predicted weight count {predicted} exceeds cap {cap}")
        self.predicted = predicted
        self.cap = cap


def _ceil_log2(q: Fraction) -> int:
    """Smallest integer e with 2**e >= q (q > 0)."""
    e = max(0, math.ceil(math.log2(q)) - 1) if q > 1 else 0
    while Fraction(2) ** e < q:
        e += 1
    while e > 0 and Fraction(2) ** (e - 1) >= q:
        e -= 1
    return e


def multi_indices(d: int, below: int) -> list[tuple[int, ...]]:
    """All n in N^d with |n| < below, ordered by total degree."""
    out = [nv for nv in itertools.product(range(below), repeat=d) if sum(nv) < below]
    return sorted(out, key=lambda nv: (sum(nv), tuple(-v for v in nv)))


@dataclass(frozen=True)
class IndependentPlan:
    d: int
    n: int
    epsilon: Fraction
    N: int
    r: int
    t: int
    lam: int = 2
    mode: Mode = Mode.NONLINEAR
    predicted: dict = field(default_factory=dict, compare=False)

    @property
    def c(self) -> int:
        return self.N // (self.d * self.d)

    def term_precision(self, order: int) -> int:
        """Bits used for the coefficient of an order-``order`` term."""
        return _ceil_log2(Fraction(self.n * self.N ** self.n, self.d ** (self.n - order)))

    def scheme(self) -> WeightScheme:
        t_max = max(self.term_precision(i) for i in range(self.n))
        if self.mode is Mode.LINEAR:
            return WeightScheme.linear(max(1, t_max), self.lam)
        return WeightScheme.nonlinear(max(1, t_max), self.lam)

    def to_dict(self) -> dict:
        return {
            "d": self.d, "n": self.n, "epsilon": str(self.epsilon), "N": self.N, "r": self.r,
            "t": self.t, "lambda": self.lam, "mode": self.mode.value, "predicted": dict(self.predicted),
        }


def plan_independent(d: int, n: int, eps, lam: int = 2, mode: Mode | str = Mode.NONLINEAR) -> IndependentPlan:
    eps = as_fraction(eps)
    mode = Mode(mode)
    if not 0 < eps < 1:
        raise NetworkError("epsilon must lie in (0, 1)")
    if d < 1 or n < 1:
        raise NetworkError("need d >= 1 and n >= 1")
    if lam < 2:
        raise NetworkError("lambda must be >= 2")
    if mode is Mode.LINEAR and lam & (lam - 1):
        raise NetworkError("linear mode needs lambda a power of two")
    need = 3 * 2 ** d * Fraction(d) ** n / eps  # N**n must reach this
    c = max(2, math.floor((float(need) ** (1.0 / n)) / (d * d)) - 1)
    while Fraction(c * d * d) ** n < need:
        c += 1
    N = c * d * d
    x = 6 * N ** n * (d + n - 1)
    r = 0
    while 4 ** (r + 1) < x:
        r += 1
    r = max(r, 1)
    t = max(1, _ceil_log2(Fraction(n * N ** n, d ** n)))
    from .bounds import bound_formulas  # local import keeps module graph acyclic

    pred = bound_formulas("T2" if mode is Mode.LINEAR else "T1", d, n, float(eps), lam)
    return IndependentPlan(d, n, eps, N, r, t, lam, mode, pred)


def taylor_coeffs(f: TargetFunction, plan: IndependentPlan) -> dict[tuple, Fraction]:
    """beta_{m,n}: D^n f(m/N)/n! rounded to a multiple of (1/n)(d/N)**(n-|n|), clamped to [-1, 1]."""
    _check(f, plan)
    out = {}
    for m, nv, raw in _raw_coeffs(f, plan):
        prec = Fraction(1, plan.n) * Fraction(plan.d, plan.N) ** (plan.n - sum(nv))
        if abs(raw) > 1 + prec:
            raise NetworkError(f"|D^{nv} f / n!| = {float(raw)} at m={m} breaks the Sobolev bound")
        q = raw / prec
        k = math.floor(q)
        if q - k > Fraction(1, 2):
            k += 1
        beta = max(Fraction(-1), min(Fraction(1), k * prec))
        out[(m, nv)] = beta
    return out


def _check(f: TargetFunction, plan: IndependentPlan):
    if f.d != plan.d or f.n < plan.n:
        raise NetworkError(f"function ({f.d}, {f.n}) does not match plan ({plan.d}, {plan.n})")


def _raw_coeffs(f: TargetFunction, plan: IndependentPlan):
    idx = multi_indices(plan.d, plan.n)
    for m in itertools.product(range(plan.N + 1), repeat=plan.d):
        pt = [Fraction(mk, plan.N) for mk in m]
        for nv in idx:
            fact = math.prod(math.factorial(v) for v in nv)
            yield m, nv, f.partial(nv, pt) / fact


def term_coefficients(f: TargetFunction, plan: IndependentPlan) -> dict[tuple, Fraction]:
    """Dyadic coefficients gamma' actually wired into the network (zeros dropped)."""
    _check(f, plan)
    out = {}
    for m, nv, raw in _raw_coeffs(f, plan):
        i = sum(nv)
        gamma = raw * Fraction(2, 3 * plan.N) ** i
        gamma = max(Fraction(-1), min(Fraction(1), gamma))
        g = nearest_multiple(gamma, plan.term_precision(i))
        if g:
            out[(m, nv)] = g
    return out


def error_budget(plan: IndependentPlan, f: TargetFunction | None = None) -> dict[str, Fraction]:
    d, n, N, r = plan.d, plan.n, plan.N, plan.r
    taylor = 2 ** d * Fraction(d, N) ** n * (1 + Fraction(1, math.factorial(n)))
    eps_mult = Fraction(6, 2 ** (2 * (r + 1)))
    mult = 2 ** d * d ** n * (d + n - 1) * eps_mult
    out = {"taylor": taylor, "multiplier": mult}
    if f is not None and f.fd_error:
        out["finite_difference"] = 2 ** d * len(multi_indices(d, n)) * as_fraction(f.fd_error)
    out["total"] = sum(out.values())
    return out


def predict_weights(plan: IndependentPlan) -> int:
    """Rough upper estimate of the weight count, used by the resource guard."""
    s = plan.scheme()
    n_idx = len(multi_indices(plan.d, plan.n))
    mult_w = complexity(build_multiplier(plan.r)).weight_count if plan.d + plan.n > 2 else 0
    gadget_w = 4 * s.t * max(1, s.max_chain) + 8 * s.t + 4
    per_block = n_idx * (mult_w + gadget_w)
    ladder_w = plan.d * 40 * (3 * plan.N + 5)
    return (plan.N + 1) ** plan.d * per_block + ladder_w


class _Terms:
    """Lazily built, memoised product chains for one network."""

    def __init__(self, b: NetBuilder, plan: IndependentPlan):
        self.b = b
        self.plan = plan
        N = plan.N
        self.h, self.z = [], []
        for k in range(plan.d):
            x3n = scale_int(b, b.input(k), 3 * N)
            lad = ladder(b, x3n, -2, 3 * N + 2)
            self.h.append([trapezoid(lad, 3 * m) for m in range(N + 1)])
            self.z.append([clamped_offset(lad, 3 * m) for m in range(N + 1)])
        self.memo: dict[tuple, Signal] = {}

    def factors(self, m, nv) -> tuple:
        out = []
        for k in range(self.plan.d):
            out.append(("h", k, m[k]))
            out += [("z", k, m[k])] * nv[k]
        return tuple(out)

    def _leaf(self, key) -> Signal:
        kind, k, mk = key
        return (self.h if kind == "h" else self.z)[k][mk]

    def product(self, keys: tuple) -> Signal:
        hit = self.memo.get(keys)
        if hit is not None:
            return hit
        if len(keys) == 1:
            out = self._leaf(keys[0])
        else:
            out = multiplier(self.b, self.product(keys[:-1]), self._leaf(keys[-1]), self.plan.r)
        self.memo[keys] = out
        return out

    def term(self, m, nv) -> Signal:
        return self.product(self.factors(m, nv))


def _codebook(plan: IndependentPlan):
    return plan.scheme().codebook


def _longest_chain(scheme: WeightScheme, coeffs) -> int:
    longest = 0
    for g in coeffs:
        k = int(abs(g) * 2 ** scheme.t)
        for e in range(k.bit_length()):
            if k >> e & 1:
                longest = max(longest, len(scheme.factors(scheme.t - e)))
    return longest


def build_independent(
    f: TargetFunction, plan: IndependentPlan, weight_cap: int | None = DEFAULT_WEIGHT_CAP
) -> QuantizedNetwork:
    _check(f, plan)
    if weight_cap is not None:
        pred = predict_weights(plan)
        if pred > weight_cap:
            raise ResourceCapError(pred, weight_cap)
    coeffs = term_coefficients(f, plan)
    scheme = plan.scheme()
    domain = ((Fraction(0), Fraction(1)),) * plan.d
    b = NetBuilder(scheme.codebook, plan.d, domain)
    meta = {
        "name": "theorem2" if plan.mode is Mode.LINEAR else "theorem1",
        "function": f.name,
        "plan": plan.to_dict(),
        "t_effective": scheme.t,
        "rho": scheme.rho,
        "terms": len(coeffs),
        "lipschitz_net": "sampled",
    }
    if not coeffs:
        return b.output(Signal.constant(0), meta)
    terms = _Terms(b, plan)
    sigs = {key: terms.term(*key) for key in coeffs}
    aligned = dict(zip(sigs, b.align(*sigs.values())))
    length = _longest_chain(scheme, coeffs.values())
    outs = [weighted_sum(b, [(aligned[key], g)], scheme, length) for key, g in coeffs.items()]
    return b.output(total(outs), meta)


def build_term(plan: IndependentPlan, m: tuple[int, ...], nv: tuple[int, ...]) -> QuantizedNetwork:
    """Standalone network for one product term T_{m,n} (coefficient not applied)."""
    b = NetBuilder(_codebook(plan), plan.d, ((Fraction(0), Fraction(1)),) * plan.d)
    terms = _Terms(b, plan)
    return b.output(terms.term(m, nv), {"name": "term", "m": list(m), "n": list(nv)})


def build_partition(plan: IndependentPlan) -> QuantizedNetwork:
    """Network whose outputs are the bumps h(3N x_k - 3m) for k < d, m <= N (axis-major).

    psi_m(x) is the product of one output per axis; the bumps themselves are exact.
    """
    b = NetBuilder(_codebook(plan), plan.d, ((Fraction(0), Fraction(1)),) * plan.d)
    terms = _Terms(b, plan)
    sigs = [terms.h[k][mk] for k in range(plan.d) for mk in range(plan.N + 1)]
    return b.output(sigs, {"name": "partition", "N": plan.N, "d": plan.d})


def term_target(plan: IndependentPlan, m, nv, x) -> Fraction:
    """Exact psi_m(x) * prod_k (x_k - m_k/N)**n_k * (3N/2)**|n|, the value T_{m,n} approximates."""
    N = plan.N
    val = Fraction(1)
    for k in range(plan.d):
        u = 3 * N * as_fraction(x[k]) - 3 * m[k]
        val *= trapezoid_value(u)
        val *= (max(Fraction(-2), min(Fraction(2), u)) / 2) ** nv[k]
    return val


def trapezoid_value(u: Fraction) -> Fraction:
    a = abs(u)
    if a <= 1:
        return Fraction(1)
    if a >= 2:
        return Fraction(0)
    return 2 - a
