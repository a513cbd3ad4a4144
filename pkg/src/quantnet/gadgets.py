"""Sub-network constructors: tent map, squaring, |x|, multiplier, weight gadgets, h-blocks.

Each construction comes in two forms: a builder-level function that wires
the gadget into a larger :class:`~quantnet.builder.NetBuilder`, and a
``build_*`` wrapper returning a standalone network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .builder import NetBuilder, Signal, total
from .core import Mode, NetworkError, QuantizedNetwork, WeightCodebook, as_fraction

HALF = Fraction(1, 2)
UNIT_DOMAIN = ((Fraction(0), Fraction(1)),)
SIGNED_DOMAIN = ((Fraction(-1), Fraction(1)),)


def tent(b: NetBuilder, x: Signal) -> Signal:
    """g(x) = 2 relu(x) - 4 relu(x - 1/2), the tent map on [0, 1]."""
    a = b.unit(x)
    c = b.unit(x - HALF)
    return replace(2 * a - 4 * c, nonneg=True)


def squaring(b: NetBuilder, x: Signal, r: int) -> Signal:
    """Interpolant of x**2 on 2**r + 1 uniform breakpoints (input in [0, 1]).

    Pre-scale layout: one tent-map chain plus one x4 chain accumulating
    ``4**i x - sum 4**(i-j) g^j(x)``, then 2r halvings.  The last halving is
    left as a 1/2 coefficient on the returned signal.
    """
    if r < 1:
        raise NetworkError("squaring needs r >= 1")
    a = b.unit(x)
    c = b.unit(x - HALF)
    acc = a
    for i in range(1, r + 1):
        g = 2 * a - 4 * c
        acc = b.unit(4 * acc - g)
        if i < r:
            a = b.unit(g)
            c = b.unit(g - HALF)
    for _ in range(2 * r - 1):
        acc = b.unit(acc * HALF)
    return acc * HALF


def absolute(b: NetBuilder, x: Signal) -> Signal:
    p, q = b.split(x)
    return p + q


def multiplier(b: NetBuilder, x: Signal, y: Signal, r: int) -> Signal:
    """x' (x, y) = 2 (f(|x+y|/2) - f(|x|/2) - f(|y|/2)) for x, y in [-1, 1]."""
    x, y = b.align(x, y)
    s = absolute(b, x + y)
    ax = absolute(b, x)
    ay = absolute(b, y)
    f1 = squaring(b, s * HALF, r)
    f2 = squaring(b, ax * HALF, r)
    f3 = squaring(b, ay * HALF, r)
    return 2 * f1 - 2 * f2 - 2 * f3


def scale_int(b: NetBuilder, x: Signal, n: int) -> Signal:
    """n * x for a nonnegative signal, by doubling with bit insertions."""
    if n < 1:
        raise NetworkError("scale factor must be a positive integer")
    if not x.nonneg:
        raise NetworkError("scale_int needs a nonnegative signal")
    bits = bin(n)[3:]
    v = x
    for bit in bits:
        xs = b.lift(x, v.layer) if v.layer is not None else x
        v = b.unit(2 * v + (xs if bit == "1" else 0))
    return v


def halve(b: NetBuilder, x: Signal, k: int) -> Signal:
    """x / 2**k through k halving layers (signed inputs are split first)."""
    if k == 0:
        return x
    if not x.nonneg:
        p, q = b.split(x)
        return halve(b, p, k) - halve(b, q, k)
    for _ in range(k):
        x = b.unit(x * HALF)
    return x


def ladder(b: NetBuilder, x: Signal, lo: int, hi: int) -> dict[int, Signal]:
    """Units relu(x - a) for every integer shift a in [lo, hi], all in one layer.

    Shifts are produced by doubling steps: relu(relu(x - a) - s) = relu(x - a - s)
    for s > 0, with s delivered by a constant unit, so each new shift costs a
    constant number of weights.
    """
    base = b.unit(x - lo)
    cur = {lo: base}
    const = b.unit(Signal.constant(1), layer=base.layer)
    step = 1
    while lo + step <= hi:
        nxt = {}
        for a, s in cur.items():
            nxt[a] = b.unit(s)
            if a + step <= hi:
                nxt[a + step] = b.unit(s - const)
        cur = nxt
        const = b.unit(2 * const)
        step *= 2
    return cur


def trapezoid(shifts: dict[int, Signal], centre: int) -> Signal:
    """h(u) with u = x - centre, from ladder units: 1 on |u|<=1, 0 on |u|>=2."""
    s = shifts
    h = s[centre - 2] - s[centre - 1] - s[centre + 1] + s[centre + 2]
    return replace(h, nonneg=True)


def clamped_offset(shifts: dict[int, Signal], centre: int) -> Signal:
    """clamp(x - centre, -2, 2) / 2, a value in [-1, 1]."""
    return (shifts[centre - 2] - shifts[centre + 2]) * HALF - 1


# ---------------------------------------------------------------------------
# weight construction


def ceil_root(t: int, k: int) -> int:
    """Smallest integer rho with rho**k >= t."""
    rho = max(1, int(round(t ** (1.0 / k))))
    while rho ** k < t:
        rho += 1
    while rho > 1 and (rho - 1) ** k >= t:
        rho -= 1
    return rho


def nearest_multiple(w, t: int) -> Fraction:
    """Nearest integral multiple of 2**-t; exact ties round toward zero."""
    w = as_fraction(w)
    k = abs(w) * 2 ** t
    fl = math.floor(k)
    if k - fl > HALF:
        fl += 1
    return Fraction(fl if w >= 0 else -fl, 2 ** t)


@dataclass(frozen=True)
class WeightScheme:
    """How powers 2**-p are assembled from codebook values.

    Nonlinear: chains over W = {2**-1, 2**-rho, ..., 2**-rho**(lam-2)} followed
    by a 1/2 output weight.  Linear (lam a power of two): chains of 1/lam and
    one leftover 2**-k factor, with unit output weight.
    """

    mode: Mode
    lam: int
    t: int
    rho: int = 0

    @classmethod
    def nonlinear(cls, t: int, lam: int) -> "WeightScheme":
        if lam < 2:
            raise NetworkError("lambda must be >= 2")
        if t < 1:
            raise NetworkError("t must be >= 1")
        if lam == 2:
            return cls(Mode.NONLINEAR, 2, t, t)
        rho = max(2, ceil_root(t, lam - 1))
        return cls(Mode.NONLINEAR, lam, rho ** (lam - 1), rho)

    @classmethod
    def linear(cls, t: int, lam: int) -> "WeightScheme":
        if lam < 2 or lam & (lam - 1):
            raise NetworkError("linear weight construction needs lambda a power of two")
        if t < 1:
            raise NetworkError("t must be >= 1")
        return cls(Mode.LINEAR, lam, t)

    @property
    def codebook(self) -> WeightCodebook:
        if self.mode is Mode.LINEAR:
            return WeightCodebook.linear(self.lam)
        vals = [HALF, -HALF] + [Fraction(1, 2 ** (self.rho ** k)) for k in range(1, self.lam - 1)]
        return WeightCodebook(Mode.NONLINEAR, tuple(vals))

    @property
    def max_chain(self) -> int:
        if self.mode is Mode.LINEAR:
            return -(-self.t // int(math.log2(self.lam)))
        return (self.lam - 1) * (self.rho - 1)

    def factors(self, p: int) -> list[Fraction]:
        """Codebook factors whose product, times out_coef(p), equals 2**-p."""
        if p <= 0:
            return []
        if self.mode is Mode.LINEAR:
            bits = int(math.log2(self.lam))
            q, rem = divmod(p, bits)
            return [Fraction(1, self.lam)] * q + ([Fraction(1, 2 ** rem)] if rem else [])
        e = p - 1
        if self.lam == 2:
            return [HALF] * e
        if e >= self.rho ** (self.lam - 1):
            raise NetworkError(f"2^-{p} beyond the resolution of this scheme")
        digits = []
        for _ in range(self.lam - 1):
            e, d = divmod(e, self.rho)
            digits.append(d)
        out = []
        for k in reversed(range(self.lam - 1)):
            out += [Fraction(1, 2 ** (self.rho ** k))] * digits[k]
        return out

    def out_coef(self, p: int) -> Fraction:
        if p <= 0:
            return Fraction(2 ** -p)
        return HALF if self.mode is Mode.NONLINEAR else Fraction(1)


def _binary(k: int) -> dict[int, int]:
    sign = 1 if k >= 0 else -1
    k = abs(k)
    return {e: sign for e in range(k.bit_length()) if k >> e & 1}


def _naf(k: int) -> dict[int, int]:
    out, e = {}, 0
    while k:
        if k & 1:
            d = 2 - (k % 4)
            out[e] = d
            k -= d
        k //= 2
        e += 1
    return out


def weighted_sum(
    b: NetBuilder,
    items: list[tuple[Signal, Fraction]],
    scheme: WeightScheme,
    length: int | None = None,
    naf: bool = False,
) -> Signal:
    """sum(w * x) with every w an integral multiple of 2**-scheme.t.

    Inputs are grouped by the binary (or signed-digit) position of their
    weights; each group is split into ReLU-gated positive and negative parts
    and pushed through one chain for its power of two.  With a single item
    this is exactly the sign-gated weight gadget.
    """
    items = [(s, as_fraction(w)) for s, w in items if w]
    if not items:
        return Signal.constant(0)
    sigs = b.align(*[s for s, _ in items])
    base = sigs[0].layer
    groups: dict[int, Signal] = {}
    for s, (_, w) in zip(sigs, items):
        k = w * 2 ** scheme.t
        if k.denominator != 1:
            raise NetworkError(f"weight {w} is not a multiple of 2^-{scheme.t}")
        for e, d in (_naf(int(k)) if naf else _binary(int(k))).items():
            p = scheme.t - e
            groups[p] = groups.get(p, Signal(base)) + d * s
    outs = []
    longest = 0
    for p in sorted(groups):
        g = groups[p]
        parts = [(b.unit(g), 1)] if g.nonneg else [(b.unit(g), 1), (b.unit(-g), -1)]
        fac = scheme.factors(p)
        longest = max(longest, len(fac))
        for v, sgn in parts:
            for f in fac:
                v = b.unit(v * f)
            outs.append((v, sgn * scheme.out_coef(p)))
    if length is None:
        length = longest
    elif length < longest:
        raise NetworkError(f"cascade length {length} shorter than needed {longest}")
    top = base + 1 + length
    return total(b.lift(v, top) * c for v, c in outs)


def weight_gadget(b: NetBuilder, x: Signal, w, scheme: WeightScheme, length: int | None = None) -> tuple[Signal, Fraction]:
    """Connection of weight w' (nearest multiple of 2**-t to w) as a sub-network."""
    w = as_fraction(w)
    if abs(w) > 1:
        raise NetworkError("weight must lie in [-1, 1]")
    wp = nearest_multiple(w, scheme.t)
    if wp == 0:
        return Signal.constant(0), wp
    return weighted_sum(b, [(x, wp)], scheme, length), wp


# ---------------------------------------------------------------------------
# standalone networks


def build_g() -> QuantizedNetwork:
    b = NetBuilder(WeightCodebook.halves(), 1, UNIT_DOMAIN)
    return b.output(tent(b, b.input(0)), {"name": "g"})


def build_squaring(r: int, codebook: WeightCodebook | None = None) -> QuantizedNetwork:
    b = NetBuilder(codebook or WeightCodebook.halves(), 1, UNIT_DOMAIN)
    return b.output(squaring(b, b.input(0), r), {"name": "squaring", "r": r})


def build_abs(codebook: WeightCodebook | None = None) -> QuantizedNetwork:
    b = NetBuilder(codebook or WeightCodebook.halves(), 1, SIGNED_DOMAIN)
    return b.output(absolute(b, b.input(0)), {"name": "abs"})


def build_multiplier(r: int, codebook: WeightCodebook | None = None) -> QuantizedNetwork:
    b = NetBuilder(codebook or WeightCodebook.halves(), 2, SIGNED_DOMAIN * 2)
    x, y = b.inputs()
    return b.output(multiplier(b, x, y, r), {"name": "multiplier", "r": r})


def _build_weight(w, scheme: WeightScheme, t_requested: int) -> QuantizedNetwork:
    b = NetBuilder(scheme.codebook, 1, SIGNED_DOMAIN)
    sig, wp = weight_gadget(b, b.input(0), w, scheme)
    meta = {
        "name": f"weight_{scheme.mode.value}",
        "w": str(as_fraction(w)),
        "w_prime": str(wp),
        "lambda": scheme.lam,
        "t_requested": t_requested,
        "t_effective": scheme.t,
        "rho": scheme.rho,
    }
    return b.output(sig, meta)


def build_weight_gadget_nonlinear(w, t: int, lam: int) -> QuantizedNetwork:
    if abs(as_fraction(w)) > 1:
        raise NetworkError("weight must lie in [-1, 1]")
    return _build_weight(w, WeightScheme.nonlinear(t, lam), t)


def build_weight_gadget_linear(w, t: int, lam: int) -> QuantizedNetwork:
    if abs(as_fraction(w)) > 1:
        raise NetworkError("weight must lie in [-1, 1]")
    return _build_weight(w, WeightScheme.linear(t, lam), t)


def build_h_block(N: int, m: int, codebook: WeightCodebook | None = None) -> QuantizedNetwork:
    """h(3N x - 3m) on x in [0, 1]."""
    if N < 1 or not 0 <= m <= N:
        raise NetworkError("need N >= 1 and 0 <= m <= N")
    b = NetBuilder(codebook or WeightCodebook.halves(), 1, UNIT_DOMAIN)
    scaled = scale_int(b, b.input(0), 3 * N)
    shifts = ladder(b, scaled, 3 * m - 2, 3 * m + 2)
    return b.output(trapezoid(shifts, 3 * m), {"name": "h_block", "N": N, "m": m})
