"""Undirected weighted graphs and the matrices derived from them.

A :class:`WeightedGraph` is the single source of truth for everything
downstream: the Laplacian, incidence, degree, and adjacency matrices all
come out of :func:`build_matrices`, and the canonical edge order fixed here
defines link indexing for every report in the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    """Invalid graph structure or construction input."""


class GraphParseError(GraphError):
    """Malformed edge-list text; the message names the offending line."""


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected, positively weighted graph over dense 0-based node ids.

    Edges are canonicalized on construction: each endpoint pair is stored
    with ``i < j`` and the edge list is sorted lexicographically by
    ``(i, j)``.  Column ``e`` of the incidence matrix and link id ``e`` in
    centrality reports both refer to ``edges[e]``.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...] = field(default=())

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n <= 0:
            raise GraphError(f"node count must be a positive integer, got {self.n!r}")
        canonical = []
        for edge in self.edges:
            i, j, w = self._check_edge(edge)
            canonical.append((min(i, j), max(i, j), w))
        canonical.sort(key=lambda e: (e[0], e[1]))
        for a, b in zip(canonical, canonical[1:]):
            if a[:2] == b[:2]:
                raise GraphError(f"duplicate edge ({a[0]}, {a[1]})")
        object.__setattr__(self, "edges", tuple(canonical))

    def _check_edge(self, edge) -> tuple[int, int, float]:
        try:
            i, j, w = edge
        except (TypeError, ValueError):
            raise GraphError(f"edge must be an (i, j, w) triple, got {edge!r}") from None
        if not (isinstance(i, (int, np.integer)) and isinstance(j, (int, np.integer))):
            raise GraphError(f"edge endpoints must be integers, got ({i!r}, {j!r})")
        i, j, w = int(i), int(j), float(w)
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise GraphError(f"edge ({i}, {j}) references a node id outside [0, {self.n})")
        if not (np.isfinite(w) and w > 0.0):
            raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
        return i, j, w

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def weights(self) -> np.ndarray:
        """Edge weights in canonical edge order."""
        return np.array([w for _, _, w in self.edges], dtype=float)

    def edge_pairs(self) -> list[tuple[int, int]]:
        """Endpoint pairs (i < j) in canonical edge order."""
        return [(i, j) for i, j, _ in self.edges]

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "edges": [[i, j, w] for i, j, w in self.edges]})

    @classmethod
    def from_json(cls, text: str) -> "WeightedGraph":
        try:
            payload = json.loads(text)
            n = payload["n"]
            edges = [tuple(e) for e in payload["edges"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise GraphParseError(f"invalid graph JSON: {exc}") from exc
        return cls(n=int(n), edges=tuple(edges))

    def to_edge_text(self) -> str:
        """Serialize to the edge-list text format understood by :func:`parse_edge_list`."""
        lines = [f"n={self.n}"]
        lines += [f"{i} {j} {w!r}" for i, j, w in self.edges]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GraphMatrices:
    """All derived matrices of one graph, consistent by construction.

    ``laplacian == degree_diag - adjacency == incidence @ weight_diag @ incidence.T``
    up to rounding.  Incidence column ``e`` carries +1 at the smaller
    endpoint id and -1 at the larger one.
    """

    graph: WeightedGraph
    laplacian: np.ndarray
    incidence: np.ndarray
    weight_diag: np.ndarray
    degree_diag: np.ndarray
    adjacency: np.ndarray

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_edges(self) -> int:
        return self.graph.num_edges


def build_matrices(g: WeightedGraph) -> GraphMatrices:
    """Construct Laplacian, incidence, weight, degree, and adjacency matrices."""
    n, m = g.n, g.num_edges
    adjacency = np.zeros((n, n))
    incidence = np.zeros((n, m))
    for e, (i, j, w) in enumerate(g.edges):
        adjacency[i, j] = adjacency[j, i] = w
        incidence[i, e] = 1.0
        incidence[j, e] = -1.0
    degree_diag = np.diag(adjacency.sum(axis=1))
    weight_diag = np.diag(g.weights()) if m else np.zeros((0, 0))
    laplacian = degree_diag - adjacency
    return GraphMatrices(
        graph=g,
        laplacian=laplacian,
        incidence=incidence,
        weight_diag=weight_diag,
        degree_diag=degree_diag,
        adjacency=adjacency,
    )


def is_connected(g: WeightedGraph) -> bool:
    """True iff a single component spans all nodes (iterative DFS)."""
    if g.n == 1:
        return True
    neighbors: list[list[int]] = [[] for _ in range(g.n)]
    for i, j, _ in g.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    seen = np.zeros(g.n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


def scale_weights(g: WeightedGraph, alpha: float) -> WeightedGraph:
    """Multiply every edge weight by ``alpha`` > 0; topology unchanged."""
    alpha = float(alpha)
    if not (np.isfinite(alpha) and alpha > 0.0):
        raise GraphError(f"scale factor must be positive, got {alpha}")
    return WeightedGraph(n=g.n, edges=tuple((i, j, w * alpha) for i, j, w in g.edges))


def tokenize_edge_lines(text: str | Iterable[str]):
    """Split edge-list text into raw (line_no, i, j, w) records plus header count.

    Lines that are blank or start with ``#`` are skipped.  A line of the form
    ``n=<k>`` declares the node count.  Node ids are validated as nonnegative
    integers but are otherwise unconstrained, so callers may remap sparse ids
    before constructing a :class:`WeightedGraph`.
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [line.rstrip("\n") for line in text]
    declared_n: int | None = None
    records: list[tuple[int, int, int, float]] = []
    for line_no, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("n="):
            if declared_n is not None:
                raise GraphParseError(f"line {line_no}: duplicate n= header")
            try:
                declared_n = int(stripped[2:])
            except ValueError:
                raise GraphParseError(
                    f"line {line_no}: malformed node-count header {stripped!r}"
                ) from None
            if declared_n <= 0:
                raise GraphParseError(f"line {line_no}: node count must be positive")
            continue
        tokens = stripped.split()
        if len(tokens) not in (2, 3):
            raise GraphParseError(
                f"line {line_no}: expected 'i j [w]', got {len(tokens)} tokens"
            )
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphParseError(
                f"line {line_no}: malformed node id in {stripped!r}"
            ) from None
        if i < 0 or j < 0:
            raise GraphParseError(f"line {line_no}: negative node id in {stripped!r}")
        w = 1.0
        if len(tokens) == 3:
            try:
                w = float(tokens[2])
            except ValueError:
                raise GraphParseError(
                    f"line {line_no}: malformed weight token {tokens[2]!r}"
                ) from None
        records.append((line_no, i, j, w))
    return declared_n, records


def parse_edge_list(text: str | Iterable[str]) -> WeightedGraph:
    """Parse whitespace-separated ``i j [w]`` lines into a canonical graph.

    Weight defaults to 1.0.  Node count is ``1 + max id`` unless an ``n=<k>``
    header overrides it.  Every invariant violation is reported with the
    offending line number.
    """
    declared_n, records = tokenize_edge_lines(text)
    if not records and declared_n is None:
        raise GraphParseError("no edges and no n= header: empty graph is not valid")
    max_id = max((max(i, j) for _, i, j, _ in records), default=-1)
    n = declared_n if declared_n is not None else max_id + 1
    seen: dict[tuple[int, int], int] = {}
    edges = []
    for line_no, i, j, w in records:
        if i == j:
            raise GraphParseError(f"line {line_no}: self-loop at node {i}")
        if i >= n or j >= n:
            raise GraphParseError(
                f"line {line_no}: node id {max(i, j)} >= declared node count {n}"
            )
        if not (np.isfinite(w) and w > 0.0):
            raise GraphParseError(f"line {line_no}: non-positive weight {w}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphParseError(
                f"line {line_no}: duplicate edge ({key[0]}, {key[1]}),"
                f" first seen on line {seen[key]}"
            )
        seen[key] = line_no
        edges.append((key[0], key[1], w))
    return WeightedGraph(n=n, edges=tuple(edges))
