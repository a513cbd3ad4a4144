"""Incremental construction of strictly layered networks.

A :class:`Signal` is an affine combination of units that all live in one
layer.  Linear combinations are free: they are folded into the weights of
whatever unit consumes the signal next.  ``NetBuilder.unit`` materialises a
ReLU unit one layer above its argument and ``NetBuilder.lift`` relays a
signal upward so that values computed at different depths can be combined.
Units and relays are memoised, so identical sub-expressions are shared.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .core import (
    CONST,
    IDENTITY,
    RELU,
    Edge,
    Layer,
    NetworkError,
    QuantizedNetwork,
    Unit,
    WeightCodebook,
    as_fraction,
)


@dataclass(frozen=True)
class Signal:
    layer: int | None
    terms: tuple[tuple[int, Fraction], ...] = ()
    const: Fraction = Fraction(0)
    nonneg: bool = False

    @staticmethod
    def constant(c) -> "Signal":
        c = as_fraction(c)
        return Signal(None, (), c, c >= 0)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def _merge(self, other: "Signal", sign: int) -> "Signal":
        if self.layer is not None and other.layer is not None and self.layer != other.layer:
            raise NetworkError(f"cannot combine signals from layers {self.layer} and {other.layer}")
        acc = dict(self.terms)
        for k, v in other.terms:
            acc[k] = acc.get(k, 0) + sign * v
        layer = self.layer if self.layer is not None else other.layer
        nonneg = self.nonneg and (other.nonneg if sign > 0 else (other.is_constant and other.const <= 0))
        return Signal(layer, _norm(acc), self.const + sign * other.const, nonneg)

    def __add__(self, other):
        if not isinstance(other, Signal):
            other = Signal.constant(other)
        return self._merge(other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Signal):
            other = Signal.constant(other)
        return self._merge(other, -1)

    def __rsub__(self, other):
        return Signal.constant(other) - self

    def __neg__(self):
        return self * -1

    def __mul__(self, c):
        c = as_fraction(c)
        if c == 0:
            return Signal(self.layer)
        return Signal(
            self.layer,
            tuple((k, v * c) for k, v in self.terms),
            self.const * c,
            self.nonneg and c > 0,
        )

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1 / as_fraction(c))


def _norm(acc: dict) -> tuple:
    return tuple(sorted((k, v) for k, v in acc.items() if v))


def total(signals: Iterable[Signal]) -> Signal:
    out = Signal(None)
    for s in signals:
        out = out + s
    return out


class NetBuilder:
    """Accumulates units layer by layer and emits a :class:`QuantizedNetwork`."""

    def __init__(self, codebook: WeightCodebook, input_dim: int, domain=None):
        self.codebook = codebook
        self.input_dim = input_dim
        self.domain = domain
        self._layers: list[list[Unit]] = [[]]  # index 0 is a placeholder for inputs
        self._const_used: list[bool] = [False]
        self._unit_memo: dict[tuple, Signal] = {}
        self._lift_memo: dict[tuple, Signal] = {}
        self._dec_memo: dict[Fraction, list] = {}
        self._finished = False

    def input(self, i: int) -> Signal:
        nonneg = self.domain is not None and self.domain[i][0] >= 0
        return Signal(0, ((i, Fraction(1)),), Fraction(0), nonneg)

    def inputs(self) -> list[Signal]:
        return [self.input(i) for i in range(self.input_dim)]

    def _ensure(self, layer: int):
        while len(self._layers) <= layer:
            self._layers.append([])
            self._const_used.append(False)

    def _decompose(self, coef: Fraction):
        hit = self._dec_memo.get(coef)
        if hit is None:
            hit = self._dec_memo[coef] = self.codebook.decompose(coef)
        return hit

    def _edges(self, sig: Signal) -> tuple[Edge, ...]:
        out = []
        for src, coef in sig.terms:
            for v, m in self._decompose(coef):
                out.append(Edge(src, v, m))
        if sig.const:
            for v, m in self._decompose(sig.const):
                out.append(Edge(CONST, v, m))
        return tuple(out)

    def unit(self, sig: Signal, layer: int | None = None) -> Signal:
        """ReLU unit computing ``max(0, sig)`` one layer above ``sig``."""
        if self._finished:
            raise NetworkError("builder already finished")
        if layer is None:
            if sig.layer is None:
                raise NetworkError("constant signal needs an explicit layer")
            layer = sig.layer + 1
        elif sig.layer is not None and sig.layer != layer - 1:
            raise NetworkError(f"unit at layer {layer} cannot read layer {sig.layer}")
        key = (layer, sig.terms, sig.const)
        hit = self._unit_memo.get(key)
        if hit is not None:
            return hit
        self._ensure(layer)
        edges = self._edges(sig)
        if sig.const:
            self._const_used[layer] = True
        self._layers[layer].append(Unit(RELU, edges))
        out = Signal(layer, ((len(self._layers[layer]) - 1, Fraction(1)),), Fraction(0), True)
        self._unit_memo[key] = out
        return out

    def split(self, sig: Signal) -> tuple[Signal, Signal]:
        """Positive and negative parts as two ReLU units."""
        return self.unit(sig), self.unit(-sig)

    def lift(self, sig: Signal, layer: int) -> Signal:
        """Relay ``sig`` so that it is readable at ``layer`` (same value)."""
        if sig.layer is None:
            return sig
        if sig.layer > layer:
            raise NetworkError(f"cannot lift a layer-{sig.layer} signal down to {layer}")
        if sig.layer == layer:
            return sig
        key = (sig, layer)
        hit = self._lift_memo.get(key)
        if hit is not None:
            return hit
        if sig.nonneg:
            out = self.lift(self.unit(sig), layer)
        else:
            p, q = self.split(sig)
            out = self.lift(p, layer) - self.lift(q, layer)
        self._lift_memo[key] = out
        return out

    def align(self, *sigs: Signal) -> list[Signal]:
        top = max((s.layer for s in sigs if s.layer is not None), default=0)
        return [self.lift(s, top) for s in sigs]

    @property
    def top(self) -> int:
        return len(self._layers) - 1

    def output(self, sigs: Signal | list[Signal], meta: dict | None = None) -> QuantizedNetwork:
        """Add the identity output layer and return the finished network."""
        if isinstance(sigs, Signal):
            sigs = [sigs]
        level = max([s.layer for s in sigs if s.layer is not None] + [self.top, 0])
        sigs = [self.lift(s, level) for s in sigs]
        level = max(level, self.top)
        if level != self.top or any(s.layer not in (None, level) for s in sigs):
            sigs = [self.lift(s, self.top) for s in sigs]
            level = self.top
        out_layer = level + 1
        self._ensure(out_layer)
        for s in sigs:
            if s.const:
                self._const_used[out_layer] = True
            self._layers[out_layer].append(Unit(IDENTITY, self._edges(s)))
        self._finished = True
        layers = tuple(
            Layer(tuple(units), self._const_used[k]) for k, units in enumerate(self._layers) if k > 0
        )
        return QuantizedNetwork(self.codebook, layers, self.input_dim, self.domain, dict(meta or {}))
