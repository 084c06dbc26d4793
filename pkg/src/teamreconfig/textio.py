"""Plain-text exchange formats.

Matrices: a ``rows cols`` header line, then whitespace-separated rows.
Absent distances are written as the literal ``inf``.
Edge lists: one 1-indexed ``i j`` pair per line; an optional ``# n N``
comment records the vertex count so isolated vertices survive a round trip.
Formations: one ``x y z`` line per robot, in robot order.
Lines starting with ``#`` are comments everywhere.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import TextIO

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import NeighborDistanceMatrix, ResourceMatrix, Topology


class FormatError(ValueError):
    pass


def _lines(text: str) -> list[tuple[int, str]]:
    out = []
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s and not s.startswith("#"):
            out.append((no, s))
    return out


def _fmt(v: float) -> str:
    if np.isinf(v):
        return "inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def format_matrix(m: ArrayLike) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    rows, cols = m.shape
    body = [" ".join(_fmt(v) for v in row) for row in m]
    return "\n".join([f"{rows} {cols}", *body]) + "\n"


def parse_matrix(text: str) -> NDArray[np.float64]:
    lines = _lines(text)
    if not lines:
        raise FormatError("empty matrix document")
    try:
        rows, cols = (int(t) for t in lines[0][1].split())
    except ValueError as exc:
        raise FormatError(f"line {lines[0][0]}: expected 'rows cols' header") from exc
    body = lines[1:]
    if len(body) != rows:
        raise FormatError(f"header promises {rows} rows, found {len(body)}")
    m = np.empty((rows, cols))
    for r, (no, s) in enumerate(body):
        toks = s.split()
        if len(toks) != cols:
            raise FormatError(f"line {no}: expected {cols} values, found {len(toks)}")
        try:
            m[r] = [float(t) for t in toks]
        except ValueError as exc:
            raise FormatError(f"line {no}: {exc}") from exc
    return m


def format_edges(topology: Topology) -> str:
    lines = [f"# n {topology.n}"]
    lines += [f"{i + 1} {j + 1}" for i, j in topology.sorted_edges]
    return "\n".join(lines) + "\n"


def parse_edges(text: str, n: int | None = None) -> Topology:
    declared = None
    for raw in text.splitlines():
        toks = raw.strip().lstrip("#").split()
        if raw.strip().startswith("#") and len(toks) == 2 and toks[0] == "n":
            declared = int(toks[1])
    pairs = []
    for no, s in _lines(text):
        toks = s.split()
        if len(toks) != 2:
            raise FormatError(f"line {no}: expected 'i j'")
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError as exc:
            raise FormatError(f"line {no}: {exc}") from exc
        if i < 1 or j < 1:
            raise FormatError(f"line {no}: vertices are 1-indexed")
        pairs.append((i - 1, j - 1))
    if n is None:
        n = declared if declared is not None else max((max(p) + 1 for p in pairs), default=0)
    try:
        return Topology.from_edges(n, pairs)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def format_formation(points: ArrayLike) -> str:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    return "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in p)


def parse_formation(text: str) -> NDArray[np.float64]:
    rows = []
    for no, s in _lines(text):
        toks = s.split()
        if len(toks) != 3:
            raise FormatError(f"line {no}: expected 'x y z'")
        try:
            rows.append([float(t) for t in toks])
        except ValueError as exc:
            raise FormatError(f"line {no}: {exc}") from exc
    return np.array(rows, dtype=float).reshape(-1, 3)


def format_distances(d: NeighborDistanceMatrix) -> str:
    return format_matrix(d.as_array())


def parse_distances(text: str) -> NeighborDistanceMatrix:
    try:
        return NeighborDistanceMatrix.from_array(parse_matrix(text))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def parse_resources(text: str, threshold: int = 1) -> ResourceMatrix:
    m = parse_matrix(text)
    try:
        return ResourceMatrix(m.astype(np.int64) if np.all(m == np.round(m)) else m, threshold)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def read_text(path: str | Path | TextIO) -> str:
    if isinstance(path, io.TextIOBase):
        return path.read()
    return Path(path).read_text()
