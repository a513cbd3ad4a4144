"""Function-dependent synthesis for f in F_{1,1}.

Both strategies start from f-tilde, a 1-Lipschitz perturbation of f whose
values on the grid i/T are dyadic (multiples of 2**-t / T), and end in a
piecewise-linear network sum_K c_K relu(X - K) + v_0 with X = (grid size) * x.

* ``InterpolationOnly`` interpolates f-tilde on the coarse grid directly.
* ``Cached`` adds to the coarse interpolant f^T a residual drawn, per coarse
  interval, from the set of lattice paths on m sub-intervals with steps in
  {-2/m, 0, 2/m}.  Every fine slope is then a coarse slope plus a small
  integer, so most ramp coefficients cost one or two weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable

from .builder import NetBuilder, Signal
from .core import Mode, NetworkError, QuantizedNetwork, as_fraction
from .functions import TargetFunction
from .gadgets import WeightScheme, ladder, scale_int, weighted_sum

BISECT_REL_TOL = Fraction(1, 2 ** 40)


class Strategy(str, Enum):
    INTERPOLATION = "InterpolationOnly"
    CACHED = "Cached"


def _next_pow2(x) -> int:
    k = 1
    while k < x:
        k *= 2
    return k


@dataclass(frozen=True)
class DependentPlan:
    strategy: Strategy
    epsilon: Fraction
    m: int
    t: int
    T: int
    delta: Fraction | None
    lam: int = 2
    mode: Mode = Mode.NONLINEAR
    T_formula: int = 0
    m_formula: int = 0

    @property
    def fine(self) -> int:
        """Number of fine intervals of the final interpolant."""
        return self.m * self.T

    def error_budget(self) -> dict[str, Fraction]:
        ftilde = Fraction(1, 2 ** self.t * self.T)
        if self.strategy is Strategy.INTERPOLATION:
            interp = Fraction(1, 2 * self.T)
        else:
            interp = Fraction(3, self.m * self.T)
        return {"ftilde": ftilde, "interpolation": interp, "total": ftilde + interp}

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value, "epsilon": str(self.epsilon), "m": self.m, "t": self.t,
            "T": self.T, "delta": None if self.delta is None else str(self.delta), "lambda": self.lam,
            "mode": self.mode.value, "T_formula": self.T_formula, "m_formula": self.m_formula,
        }


def plan_dependent(eps, strategy=Strategy.INTERPOLATION, lam: int = 2, mode=Mode.NONLINEAR) -> DependentPlan:
    """Hyper-parameters; T (and m) are rounded up to powers of two so all scalings stay dyadic."""
    eps = as_fraction(eps)
    strategy = Strategy(strategy)
    mode = Mode(mode)
    if not 0 < eps < 1:
        raise NetworkError("epsilon must lie in (0, 1)")
    if lam < 2:
        raise NetworkError("lambda must be >= 2")
    if mode is Mode.LINEAR and lam & (lam - 1):
        raise NetworkError("linear mode needs lambda a power of two")
    L = math.log2(1 / eps)
    if strategy is Strategy.INTERPOLATION:
        T_formula = math.ceil(1 / eps)
        t = math.ceil(L)
        return DependentPlan(strategy, eps, 1, t, _next_pow2(T_formula), None, lam, mode, T_formula, 1)
    m_formula = max(1, math.ceil(L / 2))
    m = _next_pow2(m_formula)
    t = int(math.log2(m))
    T_formula = math.ceil(8 / (float(eps) * L))
    T = _next_pow2(T_formula)
    # t = 0 (m = 1) would make the residual trivial; keep at least one halving bit
    if m == 1:
        m, t = 2, 1
    return DependentPlan(strategy, eps, m, t, T, Fraction(1, 8 * m), lam, mode, T_formula, m_formula)


# ---------------------------------------------------------------------------
# the f-tilde transform


def _fval(f) -> Callable[[Fraction], Fraction]:
    if isinstance(f, TargetFunction):
        if f.d != 1:
            raise NetworkError("f-tilde needs a one-dimensional function")
        return lambda x: as_fraction(f.eval([x]))
    return lambda x: as_fraction(f(x))


def ftilde_breakpoints(f, t: int, T: int) -> list[Fraction]:
    """v_i = ceil(T f(i/T) / 2**-t) * 2**-t / T for i = 0..T."""
    if t < 0 or T < 1:
        raise NetworkError("need t >= 0 and T >= 1")
    fv = _fval(f)
    out = []
    for i in range(T + 1):
        q = T * fv(Fraction(i, T)) * 2 ** t
        out.append(Fraction(math.ceil(q), 2 ** t * T))
    return out


@dataclass(frozen=True)
class FtildePiece:
    """f-tilde on (a, b]: a unit-slope ramp from v toward f^+ = f + offset, then f^+."""

    a: Fraction
    b: Fraction
    v: Fraction
    offset: Fraction
    direction: int  # +1 rising, -1 falling, 0 already on f^+
    crossing: Fraction  # bisection estimate of x*


def ftilde_piece(f, t: int, T: int, i: int, _bp: list[Fraction] | None = None) -> FtildePiece:
    fv = _fval(f)
    bp = _bp or ftilde_breakpoints(f, t, T)
    a, b = Fraction(i, T), Fraction(i + 1, T)
    offset = bp[i + 1] - fv(b)
    v = bp[i]
    gap0 = fv(a) + offset - v
    direction = (gap0 > 0) - (gap0 < 0)
    if direction == 0:
        return FtildePiece(a, b, v, offset, 0, a)

    def gap(x):
        return direction * (fv(x) + offset - v - direction * (x - a))

    if gap(b) > 0:
        raise NetworkError(f"no crossing on interval {i}: f violates the Lipschitz-1 certificate")
    lo, hi = a, b
    tol = (b - a) * BISECT_REL_TOL
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return FtildePiece(a, b, v, offset, direction, hi)


def ftilde_eval(f, t: int, T: int, x, _bp: list[Fraction] | None = None) -> Fraction:
    """Pointwise f-tilde.

    Before the crossing the value is the ramp, after it f^+; because the gap
    is monotone this equals min(ramp, f^+) when rising and max when falling,
    which is what is returned (exact).  The crossing itself comes from
    bisection and is checked for bracketing.
    """
    x = as_fraction(x)
    if not 0 <= x <= 1:
        raise NetworkError("x must lie in [0, 1]")
    bp = _bp or ftilde_breakpoints(f, t, T)
    if x == 0:
        return bp[0]
    i = math.ceil(x * T) - 1
    piece = ftilde_piece(f, t, T, i, bp)
    fplus = _fval(f)(x) + piece.offset
    if piece.direction > 0:
        return min(piece.v + (x - piece.a), fplus)
    if piece.direction < 0:
        return max(piece.v - (x - piece.a), fplus)
    return fplus


# ---------------------------------------------------------------------------
# cached residual paths


def best_path(targets: list[Fraction], m: int) -> list[int]:
    """Lattice path c_0..c_m (units of 2/m) with c_0 = c_m = 0 and steps in {-1, 0, 1}
    minimising max_j |targets[j] - c_j * 2/m|.  Dynamic programming over levels."""
    step = Fraction(2, m)
    levels = range(-m, m + 1)
    INF = None
    cost = {0: abs(targets[0])}
    back: list[dict] = []
    for j in range(1, m + 1):
        nxt, ptr = {}, {}
        for c in levels:
            if abs(c) > min(j, m - j):
                continue
            best = INF
            for p in (c - 1, c, c + 1):
                if p in cost and (best is None or cost[p] < best[0]):
                    best = (cost[p], p)
            if best is None:
                continue
            nxt[c] = max(best[0], abs(targets[j] - c * step))
            ptr[c] = best[1]
        cost = nxt
        back.append(ptr)
    path = [0]
    for ptr in reversed(back):
        path.append(ptr[path[-1]])
    return path[::-1]


# ---------------------------------------------------------------------------
# network construction


def _scheme(plan: DependentPlan, bits: int) -> WeightScheme:
    if plan.mode is Mode.LINEAR:
        return WeightScheme.linear(bits, plan.lam)
    return WeightScheme.nonlinear(bits, plan.lam)


def _ramp_network(plan, knots: int, v0: Fraction, slopes: list[Fraction], bits: int, meta: dict) -> QuantizedNetwork:
    """Network for v0 + sum_K (slope change at K) * relu(x - K/knots)."""
    if knots & (knots - 1):
        raise NetworkError("grid size must be a power of two")
    scheme = _scheme(plan, bits)
    b = NetBuilder(scheme.codebook, 1, ((Fraction(0), Fraction(1)),))
    if v0 == 0 and not any(slopes):
        return b.output(Signal.constant(0), meta)
    # B_T / B_s1: X = knots * x, ramps relu(X - K)
    X = scale_int(b, b.input(0), knots)
    ramps = ladder(b, X, 0, knots - 1)
    items = []
    prev = Fraction(0)
    for K, s in enumerate(slopes):
        if s != prev:
            items.append((ramps[K], (s - prev) / knots))
        prev = s
    if v0:
        one = b.unit(Signal.constant(1), layer=ramps[0].layer)
        items.append((one, v0))
    out = weighted_sum(b, items, scheme, naf=True)
    meta["lipschitz_net"] = str(max((abs(s) for s in slopes), default=Fraction(0)))
    return b.output(out, meta)


def interpolation_data(f: TargetFunction, plan: DependentPlan) -> tuple[list[Fraction], list[Fraction]]:
    """Knot values and slopes (x-units) of the final piecewise-linear target."""
    bp = ftilde_breakpoints(f, plan.t, plan.T)
    T = plan.T
    if plan.strategy is Strategy.INTERPOLATION:
        slopes = [T * (bp[i + 1] - bp[i]) for i in range(T)]
        return bp, slopes
    m = plan.m
    values = []
    for i in range(T):
        a = Fraction(i, T)
        targets = []
        for j in range(m + 1):
            x = a + Fraction(j, m * T)
            chord = bp[i] + (bp[i + 1] - bp[i]) * Fraction(j, m)
            targets.append(T * (ftilde_eval(f, plan.t, T, x, bp) - chord))
        path = best_path(targets, m)
        for j in range(m):
            chord = bp[i] + (bp[i + 1] - bp[i]) * Fraction(j, m)
            values.append(chord + Fraction(2 * path[j], m * T))
    values.append(bp[T])
    fine = m * T
    slopes = [fine * (values[k + 1] - values[k]) for k in range(fine)]
    return values, slopes


def build_dependent(f: TargetFunction, eps=None, lam: int = 2, mode=Mode.NONLINEAR,
                    strategy=Strategy.INTERPOLATION, plan: DependentPlan | None = None) -> QuantizedNetwork:
    if f.d != 1 or f.n != 1:
        raise NetworkError("function-dependent synthesis covers d = n = 1 only")
    if plan is None:
        if eps is None:
            raise NetworkError("need eps or a plan")
        plan = plan_dependent(eps, strategy, lam, mode)
    values, slopes = interpolation_data(f, plan)
    fine = len(slopes)
    # coefficients are multiples of 2**-t / fine and v0 of 2**-t / T
    bits = plan.t + int(math.log2(fine))
    meta = {
        "name": f"dependent_{plan.strategy.value}",
        "function": f.name,
        "plan": plan.to_dict(),
        "error_budget": {k: str(v) for k, v in plan.error_budget().items()},
    }
    return _ramp_network(plan, fine, values[0], slopes, max(bits, 1), meta)
