"""Line-oriented, versioned text format for decomposable instances.

::

    dsfm-instance 1
    n 4 r 3
    unary 0 -2.5
    edge 0 1 1
    square 0 1 2 3 0.5
    region 3 0 1 2
    table 2 0 3 0 1 1 0
    matching 2 0 1 2 3 1 1

``table k ids... values...`` lists ``2^k`` values indexed by bitmask (bit
``j`` is the ``j``-th listed id).  ``matching k u1 v1 ... uk vk w1 ... wk``
is a cut function of ``k`` disjoint edges.  Floats are written with 17
significant digits; ``#`` starts a comment.
"""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np

from ..core import (
    DecomposableInstance,
    InputError,
    SubmodularityError,
    SubmodularPotential,
    TablePotential,
    check_submodular,
)
from ..potentials import EdgeCutPotential, MatchingCutPotential, RegionPotential, SquarePotential, UnaryPotential

MAGIC = "dsfm-instance"
VERSION = 1
CHECK_LIMIT = 12
TABLE_LIMIT = 20


class ParseError(InputError):
    category = "parse"

    def __init__(self, message, source="<string>", line=None):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


def _fmt(x: float) -> str:
    return "%.17g" % x


def _ints(tokens, count, what):
    if len(tokens) < count:
        raise ValueError(f"{what} needs {count} ids, got {len(tokens)}")
    return [int(t) for t in tokens[:count]], tokens[count:]


def _parse_record(tokens: list[str]) -> SubmodularPotential:
    kind, rest = tokens[0], tokens[1:]
    if kind == "unary":
        if len(rest) != 2:
            raise ValueError("unary takes: id delta")
        return UnaryPotential(int(rest[0]), 0.0, float(rest[1]))
    if kind == "edge":
        if len(rest) != 3:
            raise ValueError("edge takes: u v weight")
        return EdgeCutPotential(int(rest[0]), int(rest[1]), float(rest[2]))
    if kind == "square":
        if len(rest) != 5:
            raise ValueError("square takes: 4 ids and a scale")
        return SquarePotential([int(t) for t in rest[:4]], float(rest[4]))
    if kind == "region":
        k = int(rest[0])
        ids, extra = _ints(rest[1:], k, "region")
        if extra:
            raise ValueError("trailing tokens after region ids")
        return RegionPotential(ids)
    if kind == "table":
        k = int(rest[0])
        if k > TABLE_LIMIT:
            raise ValueError(f"table support larger than {TABLE_LIMIT}")
        ids, vals = _ints(rest[1:], k, "table")
        if len(vals) != 1 << k:
            raise ValueError(f"table with {k} ids needs {1 << k} values, got {len(vals)}")
        return TablePotential(ids, [float(v) for v in vals])
    if kind == "matching":
        k = int(rest[0])
        ids, ws = _ints(rest[1:], 2 * k, "matching")
        if len(ws) != k:
            raise ValueError(f"matching with {k} edges needs {k} weights")
        return MatchingCutPotential(list(zip(ids[0::2], ids[1::2])), [float(w) for w in ws])
    raise ValueError(f"unknown record kind {kind!r}")


def parse_instance(text: str, source: str = "<string>", check: bool = True) -> DecomposableInstance:
    """Parse instance text; ``check`` spot-checks submodularity of tables with ``|C| <= 12``."""
    header = None
    n = r = None
    pots: list[SubmodularPotential] = []
    lines: list[int] = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if header is None:
            if tokens[0] != MAGIC or len(tokens) != 2:
                raise ParseError(f"expected header '{MAGIC} {VERSION}'", source, lineno)
            if tokens[1] != str(VERSION):
                raise ParseError(f"unsupported format version {tokens[1]}", source, lineno)
            header = lineno
            continue
        if n is None:
            if len(tokens) != 4 or tokens[0] != "n" or tokens[2] != "r":
                raise ParseError("expected 'n <count> r <count>'", source, lineno)
            try:
                n, r = int(tokens[1]), int(tokens[3])
            except ValueError:
                raise ParseError("n and r must be integers", source, lineno) from None
            continue
        try:
            pot = _parse_record(tokens)
        except (ValueError, IndexError, InputError) as err:
            raise ParseError(f"bad {tokens[0]} record: {err}", source, lineno) from None
        if pot.support.max() >= n or pot.support.min() < 0:
            raise ParseError(f"element id out of range 0..{n - 1}", source, lineno)
        pots.append(pot)
        lines.append(lineno)
    if header is None or n is None:
        raise ParseError("missing header", source)
    if len(pots) != r:
        raise ParseError(f"header declares r={r} but {len(pots)} potentials were read", source)
    if n < 1 or r < 1:
        raise ParseError("n and r must be positive", source)
    if check:
        for pot, lineno in zip(pots, lines):
            if pot.kind == "table" and pot.size <= CHECK_LIMIT:
                witness = check_submodular(pot)
                if witness is not None:
                    X, Y = witness
                    raise SubmodularityError(
                        f"{source}:{lineno}: table is not submodular on X={sorted(X)}, Y={sorted(Y)}", witness
                    )
    return DecomposableInstance(n, pots)


def load_instance(path: str | os.PathLike, check: bool = True) -> DecomposableInstance:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputError(f"no such instance file: {path}") from None
    return parse_instance(text, str(path), check)


def _record(pot: SubmodularPotential) -> str:
    ids = [str(int(v)) for v in pot.support]
    if isinstance(pot, UnaryPotential):
        return f"unary {ids[0]} {_fmt(pot.delta)}"
    if isinstance(pot, EdgeCutPotential):
        return f"edge {ids[0]} {ids[1]} {_fmt(pot.weight)}"
    if isinstance(pot, SquarePotential):
        return "square " + " ".join(ids) + " " + _fmt(pot.scale)
    if isinstance(pot, RegionPotential):
        return f"region {pot.size} " + " ".join(ids)
    if isinstance(pot, MatchingCutPotential):
        return f"matching {len(pot.weights)} " + " ".join(ids) + " " + " ".join(_fmt(w) for w in pot.weights)
    if pot.size > TABLE_LIMIT:
        raise InputError(f"cannot serialize a {pot.kind} potential on {pot.size} elements")
    return f"table {pot.size} " + " ".join(ids) + " " + " ".join(_fmt(v) for v in pot.all_values)


def dump_instance(inst: DecomposableInstance) -> str:
    """Canonical text form; other potential kinds are written as tables."""
    out = [f"{MAGIC} {VERSION}", f"n {inst.n} r {inst.r}"]
    out += [_record(p) for p in inst.potentials]
    return "\n".join(out) + "\n"


def write_instance(inst: DecomposableInstance, path: str | os.PathLike) -> None:
    Path(path).write_text(dump_instance(inst))
