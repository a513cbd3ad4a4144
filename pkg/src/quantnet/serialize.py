"""JSON form of a network (schema ``qnet/1``).

Weights are stored as codebook indices; rationals as ``"p/q"`` strings.
Each edge is ``[src, widx, mult]`` (``src = -1`` is the constant unit), with an
optional fourth entry for an explicit source layer.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .core import CONST, IDENTITY, RELU, Edge, Layer, MalformedNetworkError, QuantizedNetwork, Unit, WeightCodebook

SCHEMA = "qnet/1"


def frac_str(v: Fraction) -> str:
    return f"{v.numerator}/{v.denominator}"


def parse_frac(s: Any) -> Fraction:
    if isinstance(s, bool) or not isinstance(s, (str, int)):
        raise MalformedNetworkError(f"expected a rational string, got {s!r}")
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        raise MalformedNetworkError(f"bad rational {s!r}") from None


def to_dict(net: QuantizedNetwork) -> dict:
    cb = net.codebook
    layers = []
    for layer in net.layers:
        units = []
        for unit in layer.units:
            edges = []
            for e in unit.incoming:
                row = [e.src, cb.index(e.weight), e.mult]
                if e.src_layer is not None:
                    row.append(e.src_layer)
                edges.append(row)
            units.append({"activation": unit.activation, "edges": edges})
        layers.append({"constant_unit": layer.has_constant_unit, "units": units})
    return {
        "schema": SCHEMA,
        "codebook": cb.to_dict(),
        "input_dim": net.input_dim,
        "domain": None if net.domain is None else [[frac_str(lo), frac_str(hi)] for lo, hi in net.domain],
        "layers": layers,
        "meta": net.meta,
    }


def to_json(net: QuantizedNetwork) -> str:
    return json.dumps(to_dict(net), sort_keys=True, separators=(",", ":"))


def _int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise MalformedNetworkError(f"{what} must be an integer, got {v!r}")
    return v


def from_dict(doc: dict) -> QuantizedNetwork:
    """Parse a network document.  Structural problems raise MalformedNetworkError;
    semantic ones (layering, codebook membership) are left to ``validate``."""
    if not isinstance(doc, dict):
        raise MalformedNetworkError("network document must be an object")
    if doc.get("schema") != SCHEMA:
        raise MalformedNetworkError(f"unsupported schema {doc.get('schema')!r}")
    try:
        cbd = doc["codebook"]
        values = tuple(parse_frac(v) for v in cbd["values"])
        cb = WeightCodebook(cbd["mode"], values)
        input_dim = _int(doc["input_dim"], "input_dim")
        dom = doc.get("domain")
        domain = None if dom is None else tuple((parse_frac(lo), parse_frac(hi)) for lo, hi in dom)
        layers = []
        for ld in doc["layers"]:
            units = []
            for ud in ld["units"]:
                edges = []
                for row in ud["edges"]:
                    if not isinstance(row, list) or len(row) not in (3, 4):
                        raise MalformedNetworkError(f"bad edge {row!r}")
                    src, widx, mult = (_int(v, "edge field") for v in row[:3])
                    if src < CONST:
                        raise MalformedNetworkError(f"bad source index {src}")
                    if not 0 <= widx < len(values):
                        raise MalformedNetworkError(f"weight index {widx} outside codebook")
                    src_layer = _int(row[3], "src_layer") if len(row) == 4 else None
                    edges.append(Edge(src, values[widx], mult, src_layer))
                act = ud["activation"]
                if act not in (RELU, IDENTITY):
                    raise MalformedNetworkError(f"bad activation {act!r}")
                units.append(Unit(act, tuple(edges)))
            layers.append(Layer(tuple(units), bool(ld["constant_unit"])))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedNetworkError):
            raise
        raise MalformedNetworkError(f"malformed network document: {exc!r}") from None
    meta = doc.get("meta") or {}
    return QuantizedNetwork(cb, tuple(layers), input_dim, domain, dict(meta))


def from_json(text: str) -> QuantizedNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedNetworkError(f"invalid JSON: {exc}") from None
    return from_dict(doc)


def save(net: QuantizedNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(net))


def load(path) -> QuantizedNetwork:
    with open(path, encoding="utf-8") as fh:
        return from_json(fh.read())
