"""Layered quantized ReLU network IR with exact and float evaluation.

A network is a list of layers.  Layer ``k`` reads only from layer ``k - 1``
(layer 0 reads the inputs).  Biases are edges from an implicit constant-1
unit of the previous layer, referenced with source index ``-1``.  Every
edge weight must be a member of the network's codebook; a coefficient that
is not a member is expressed as several parallel edges (``mult``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

CONST = -1

RELU = "relu"
IDENTITY = "identity"


class NetworkError(ValueError):
    """Base class for network construction and evaluation errors."""


class InputError(NetworkError):
    pass


class MalformedNetworkError(NetworkError):
    pass


class NotRealizableError(NetworkError):
    """A coefficient cannot be written as parallel codebook edges."""


class Mode(str, Enum):
    NONLINEAR = "nonlinear"
    LINEAR = "linear"


def as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        if not math.isfinite(v):
            raise InputError(f"non-finite value {v!r}")
        return Fraction(v)
    return Fraction(v)


@dataclass(frozen=True)
class WeightCodebook:
    """The lambda admissible weight values of a network."""

    mode: Mode
    values: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "values", tuple(as_fraction(v) for v in self.values))

    @classmethod
    def linear(cls, lam: int) -> "WeightCodebook":
        if lam < 2:
            raise NetworkError("lambda must be >= 2")
        return cls(Mode.LINEAR, (Fraction(-1),) + tuple(Fraction(i, lam) for i in range(1, lam)))

    @classmethod
    def halves(cls) -> "WeightCodebook":
        return cls(Mode.NONLINEAR, (Fraction(1, 2), Fraction(-1, 2)))

    @property
    def lam(self) -> int:
        return len(self.values)

    @property
    def bit_width(self) -> int:
        return max(1, math.ceil(math.log2(self.lam)))

    @cached_property
    def _index(self) -> dict[Fraction, int]:
        return {v: i for i, v in enumerate(self.values)}

    def index(self, value) -> int:
        try:
            return self._index[as_fraction(value)]
        except KeyError:
            raise NotRealizableError(f"{value} is not a codebook value") from None

    def __contains__(self, value) -> bool:
        return as_fraction(value) in self._index

    def invariant_violations(self) -> list[str]:
        out = []
        if self.lam < 2:
            out.append("codebook needs at least two values")
        if len(set(self.values)) != len(self.values):
            out.append("codebook values are not distinct")
        if self.mode is Mode.LINEAR and self.values != WeightCodebook.linear(max(self.lam, 2)).values:
            out.append("linear codebook must be {-1, 1/lambda, ..., (lambda-1)/lambda}")
        return out

    def decompose(self, coef) -> list[tuple[Fraction, int]]:
        """Write ``coef`` as a sum of ``mult * value`` over codebook values."""
        c = as_fraction(coef)
        if c == 0:
            return []
        if c in self:
            return [(c, 1)]
        half = Fraction(1, 2)
        if self.mode is Mode.NONLINEAR:
            if half in self and -half in self and (2 * c).denominator == 1:
                return [(half if c > 0 else -half, int(abs(2 * c)))]
            best = None
            for v in self.values:
                k = c / v
                if k > 0 and k.denominator == 1 and (best is None or k < best[1]):
                    best = (v, int(k))
            if best is None:
                raise NotRealizableError(f"coefficient {c} not realizable with {self.values}")
            return [best]
        lam = self.lam
        if (c * lam).denominator != 1:
            raise NotRealizableError(f"coefficient {c} is not a multiple of 1/{lam}")
        out: list[tuple[Fraction, int]] = []
        if c < 0:
            a = math.ceil(-c)
            out.append((Fraction(-1), a))
            c += a
        q = int(c * lam)
        if q:
            big, rem = divmod(q, lam - 1)
            if big:
                out.append((Fraction(lam - 1, lam), big))
            if rem:
                out.append((Fraction(rem, lam), 1))
        return out

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "values": [f"{v.numerator}/{v.denominator}" for v in self.values]}


@dataclass(frozen=True)
class Edge:
    src: int
    weight: Fraction
    mult: int = 1
    # Only set when an edge claims to come from a layer other than the
    # previous one; such edges are invalid and flagged by validate().
    src_layer: int | None = None


@dataclass(frozen=True)
class Unit:
    activation: str
    incoming: tuple[Edge, ...] = ()


@dataclass(frozen=True)
class Layer:
    units: tuple[Unit, ...]
    has_constant_unit: bool = False


@dataclass(frozen=True)
class Violation:
    kind: str
    layer: int
    unit: int
    message: str

    def __str__(self):
        return f"{self.kind} at layer {self.layer} unit {self.unit}: {self.message}"


@dataclass(frozen=True)
class ComplexityReport:
    depth: int
    max_width: int
    weight_count: int
    memory_bits: int
    bias_weight_count: int = 0
    predicted: dict | None = None

    @property
    def weight_count_without_bias(self) -> int:
        return self.weight_count - self.bias_weight_count

    def to_dict(self) -> dict:
        d = {
            "depth": self.depth,
            "max_width": self.max_width,
            "weight_count": self.weight_count,
            "weight_count_without_bias": self.weight_count_without_bias,
            "memory_bits": self.memory_bits,
        }
        if self.predicted is not None:
            d["predicted"] = dict(self.predicted)
        return d


@dataclass(frozen=True)
class QuantizedNetwork:
    codebook: WeightCodebook
    layers: tuple[Layer, ...]
    input_dim: int
    domain: tuple[tuple[Fraction, Fraction], ...] | None = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def output_dim(self) -> int:
        return len(self.layers[-1].units) if self.layers else self.input_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [len(layer.units) for layer in self.layers]

    def __call__(self, *x):
        return eval_exact(self, x)

    @cached_property
    def _compiled(self) -> list[tuple[sparse.csr_matrix, np.ndarray, bool]]:
        problems = validate(self)
        if problems:
            raise MalformedNetworkError("; ".join(map(str, problems[:5])))
        out = []
        prev = self.input_dim
        for layer in self.layers:
            rows, cols, vals = [], [], []
            bias = np.zeros(len(layer.units))
            for u, unit in enumerate(layer.units):
                for e in unit.incoming:
                    w = float(e.weight) * e.mult
                    if e.src == CONST:
                        bias[u] += w
                    else:
                        rows.append(u)
                        cols.append(e.src)
                        vals.append(w)
            mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(layer.units), prev))
            mat.sum_duplicates()
            relu = np.array([unit.activation == RELU for unit in layer.units])
            out.append((mat, bias, relu))
            prev = len(layer.units)
        return out

    @cached_property
    def _collapsed(self) -> list[list[tuple[list[tuple[int, Fraction]], Fraction, bool]]]:
        problems = validate(self)
        if problems:
            raise MalformedNetworkError("; ".join(map(str, problems[:5])))
        out = []
        for layer in self.layers:
            rows = []
            for unit in layer.units:
                acc: dict[int, Fraction] = {}
                for e in unit.incoming:
                    acc[e.src] = acc.get(e.src, 0) + e.weight * e.mult
                bias = acc.pop(CONST, Fraction(0))
                rows.append(([(s, w) for s, w in acc.items() if w], Fraction(bias), unit.activation == RELU))
            out.append(rows)
        return out


def _check_input(net: QuantizedNetwork, x: Sequence, strict: bool) -> list[Fraction]:
    if len(x) != net.input_dim:
        raise InputError(f"expected {net.input_dim} inputs, got {len(x)}")
    xs = [as_fraction(v) for v in x]
    if strict and net.domain is not None:
        for v, (lo, hi) in zip(xs, net.domain):
            if not lo <= v <= hi:
                raise InputError(f"input {v} outside domain [{lo}, {hi}]")
    return xs


def eval_exact(net: QuantizedNetwork, x: Sequence, strict: bool = False):
    """Exact forward pass.  Returns a Fraction (or a tuple for several outputs)."""
    vals = _check_input(net, x, strict)
    for rows in net._collapsed:
        nxt = []
        for edges, bias, relu in rows:
            s = bias
            for src, w in edges:
                v = vals[src]
                if v:
                    s += w * v
            if relu and s < 0:
                s = Fraction(0)
            nxt.append(s)
        vals = nxt
    return vals[0] if len(vals) == 1 else tuple(vals)


def eval_f64(net: QuantizedNetwork, x, chunk: int = 2048) -> np.ndarray | float:
    """Float forward pass.  ``x`` is one point (shape ``(d,)``) or a batch ``(k, d)``."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.input_dim:
        raise InputError(f"expected points of dimension {net.input_dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("NaN or Inf input")
    compiled = net._compiled
    outs = []
    for start in range(0, arr.shape[0], chunk):
        a = arr[start:start + chunk].T.copy()
        for mat, bias, relu in compiled:
            a = mat @ a
            a += bias[:, None]
            if relu.all():
                np.maximum(a, 0.0, out=a)
            elif relu.any():
                a[relu] = np.maximum(a[relu], 0.0)
        outs.append(a.T)
    res = np.concatenate(outs, axis=0)
    if res.shape[1] == 1:
        res = res[:, 0]
    return res[0] if single else res


def validate(net: QuantizedNetwork) -> list[Violation]:
    """Return every broken structural invariant (empty list when valid)."""
    out: list[Violation] = []
    for msg in net.codebook.invariant_violations():
        out.append(Violation("CodebookViolation", -1, -1, msg))
    if not net.layers:
        out.append(Violation("MalformedNetwork", -1, -1, "network has no layers"))
        return out
    prev = net.input_dim
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        for u, unit in enumerate(layer.units):
            want = IDENTITY if k == last else RELU
            if unit.activation != want:
                out.append(Violation("ActivationViolation", k, u, f"expected {want}, got {unit.activation}"))
            for e in unit.incoming:
                if e.src_layer is not None and e.src_layer != k - 1:
                    out.append(Violation("LayeringViolation", k, u, f"edge from layer {e.src_layer} skips to layer {k}"))
                if e.src == CONST:
                    if not layer.has_constant_unit:
                        out.append(Violation("MalformedNetwork", k, u, "bias edge but no constant unit"))
                elif not 0 <= e.src < prev:
                    out.append(Violation("LayeringViolation", k, u, f"source {e.src} not in previous layer (size {prev})"))
                if e.weight not in net.codebook:
                    out.append(Violation("CodebookViolation", k, u, f"weight {e.weight} not in codebook"))
                if e.mult < 1:
                    out.append(Violation("MalformedNetwork", k, u, f"multiplicity {e.mult} < 1"))
        prev = len(layer.units)
    return out


def complexity(net: QuantizedNetwork, predicted: dict | None = None) -> ComplexityReport:
    widths = [net.input_dim] + [len(layer.units) for layer in net.layers]
    for k, layer in enumerate(net.layers):
        if layer.has_constant_unit and any(e.src == CONST for u in layer.units for e in u.incoming):
            widths[k] += 1
    weights = bias = 0
    for layer in net.layers:
        for unit in layer.units:
            for e in unit.incoming:
                weights += e.mult
                if e.src == CONST:
                    bias += e.mult
    return ComplexityReport(
        depth=len(net.layers),
        max_width=max(widths),
        weight_count=weights,
        memory_bits=weights * net.codebook.bit_width,
        bias_weight_count=bias,
        predicted=predicted,
    )


def _edges_for(codebook: WeightCodebook, src: int, coef: Fraction, mult: int = 1) -> list[Edge]:
    return [Edge(src, v, m * mult) for v, m in codebook.decompose(coef)]


def compose_serial(a: QuantizedNetwork, b: QuantizedNetwork) -> QuantizedNetwork:
    """Feed the outputs of ``a`` into ``b``.

    The identity outputs of ``a`` become a ReLU pair ``(o+, o-)`` and the first
    layer of ``b`` reads ``o+ - o-``; the negated copies are the glue edges.
    """
    if a.output_dim != b.input_dim:
        raise NetworkError(f"output_dim {a.output_dim} != input_dim {b.input_dim}")
    if a.codebook != b.codebook:
        raise NetworkError("codebooks differ")
    cb = a.codebook
    split = []
    for unit in a.layers[-1].units:
        split.append(Unit(RELU, unit.incoming))
        neg = []
        for e in unit.incoming:
            neg.extend(_edges_for(cb, e.src, -e.weight, e.mult))
        split.append(Unit(RELU, tuple(neg)))
    first = []
    for unit in b.layers[0].units:
        edges = []
        for e in unit.incoming:
            if e.src == CONST:
                edges.append(e)
                continue
            edges.append(Edge(2 * e.src, e.weight, e.mult))
            edges.extend(_edges_for(cb, 2 * e.src + 1, -e.weight, e.mult))
        first.append(Unit(unit.activation, tuple(edges)))
    layers = a.layers[:-1] + (
        Layer(tuple(split), a.layers[-1].has_constant_unit),
        Layer(tuple(first), b.layers[0].has_constant_unit),
    ) + b.layers[1:]
    return QuantizedNetwork(cb, layers, a.input_dim, a.domain, {"name": "serial"})


def compose_parallel(nets: Sequence[QuantizedNetwork]) -> QuantizedNetwork:
    """Stack equal-depth networks on shared inputs; outputs are concatenated."""
    if not nets:
        raise NetworkError("nothing to compose")
    d, depth, cb = nets[0].input_dim, nets[0].depth, nets[0].codebook
    for n in nets:
        if n.input_dim != d or n.depth != depth or n.codebook != cb:
            raise NetworkError("parallel composition needs equal input_dim, depth and codebook")
    layers = []
    offsets = [0] * len(nets)
    for k in range(depth):
        units = []
        new_offsets = []
        for i, n in enumerate(nets):
            new_offsets.append(len(units))
            for unit in n.layers[k].units:
                edges = tuple(
                    e if (e.src == CONST or k == 0) else Edge(e.src + offsets[i], e.weight, e.mult, e.src_layer)
                    for e in unit.incoming
                )
                units.append(Unit(unit.activation, edges))
        offsets = new_offsets
        layers.append(Layer(tuple(units), any(n.layers[k].has_constant_unit for n in nets)))
    return QuantizedNetwork(cb, tuple(layers), d, nets[0].domain, {"name": "parallel"})


def append_layer(net: QuantizedNetwork, layer: Layer) -> QuantizedNetwork:
    return replace(net, layers=net.layers + (layer,), meta=dict(net.meta))


def edges(net: QuantizedNetwork) -> Iterable[tuple[int, int, Edge]]:
    for k, layer in enumerate(net.layers):
        for u, unit in enumerate(layer.units):
            for e in unit.incoming:
                yield k, u, e
