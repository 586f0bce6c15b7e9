"""Directed acyclic graphs and the structural queries used by the recovery algorithms.

Nodes are labelled ``1..d``. Matrices indexed by nodes use row/column ``i - 1``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import FrozenSet, Iterable, Iterator, Sequence

import numpy as np

ZERO_TOL = 1e-9

PATTERN_CLASSES = ("dom", "dom0", "dom_bar")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Dag:
    d: int
    edges: FrozenSet[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.d < 1:
            raise GraphError(f"node count must be positive, got {self.d}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        for i, j in edges:
            if not (1 <= i <= self.d and 1 <= j <= self.d):
                raise GraphError(f"edge {(i, j)} out of range for d={self.d}")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
        # raises on cycles
        self.topological_order

    @cached_property
    def _parents(self) -> tuple[tuple[int, ...], ...]:
        pa: list[list[int]] = [[] for _ in range(self.d + 1)]
        for i, j in sorted(self.edges):
            pa[j].append(i)
        return tuple(tuple(p) for p in pa)

    @cached_property
    def _children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in range(self.d + 1)]
        for i, j in sorted(self.edges):
            ch[i].append(j)
        return tuple(tuple(c) for c in ch)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        """Kahn's algorithm, smallest available label first."""
        indeg = [0] * (self.d + 1)
        for _, j in self.edges:
            indeg[j] += 1
        ready = sorted(v for v in self.nodes if indeg[v] == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        if len(order) != self.d:
            raise GraphError("graph contains a directed cycle")
        return tuple(order)

    @property
    def nodes(self) -> range:
        return range(1, self.d + 1)

    def _check(self, i: int) -> None:
        if not 1 <= i <= self.d:
            raise GraphError(f"node {i} out of range 1..{self.d}")

    def parents(self, i: int) -> frozenset[int]:
        self._check(i)
        return frozenset(self._parents[i])

    def children(self, i: int) -> frozenset[int]:
        self._check(i)
        return frozenset(self._children[i])

    def _reach(self, i: int, nbrs) -> frozenset[int]:
        seen: set[int] = set()
        stack = list(nbrs[i])
        while stack:
            v = stack.pop()
            if v not in seen:
                seen.add(v)
                stack.extend(nbrs[v])
        return frozenset(seen)

    def ancestors(self, i: int) -> frozenset[int]:
        self._check(i)
        return self._reach(i, self._parents)

    def descendants(self, i: int) -> frozenset[int]:
        self._check(i)
        return self._reach(i, self._children)

    def non_descendants(self, i: int) -> frozenset[int]:
        return frozenset(self.nodes) - self.descendants(i) - {i}

    def dom_set(self, j: int) -> frozenset[int]:
        """Parents ``i`` of ``j`` whose children include every child of ``j``."""
        ch_j = self.children(j)
        return frozenset(i for i in self._parents[j] if ch_j <= set(self._children[i]))

    def dom_bar(self, j: int) -> frozenset[int]:
        return self.dom_set(j) | {j}

    def is_ancestral(self, s: Iterable[int]) -> bool:
        s = frozenset(s)
        for j in s:
            self._check(j)
        return all(self.ancestors(j) <= s for j in s)

    def adjacency(self) -> np.ndarray:
        """``adj[j-1, i-1] = 1`` iff ``i -> j`` (row = child), matching weight matrices."""
        adj = np.zeros((self.d, self.d), dtype=bool)
        for i, j in self.edges:
            adj[j - 1, i - 1] = True
        return adj

    def relabel(self, mapping: Sequence[int]) -> Dag:
        """Rename node ``v`` to ``mapping[v - 1]``."""
        return Dag(self.d, frozenset((mapping[i - 1], mapping[j - 1]) for i, j in self.edges))

    def to_dict(self) -> dict:
        return {"d": self.d, "edges": [list(e) for e in sorted(self.edges)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> Dag:
        return cls(int(data["d"]), frozenset(tuple(e) for e in data["edges"]))

    @classmethod
    def from_json(cls, text: str) -> Dag:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SparsityPattern:
    d: int
    allowed: tuple[frozenset[int], ...]

    def mask(self) -> np.ndarray:
        m = np.zeros((self.d, self.d), dtype=bool)
        for i, cols in enumerate(self.allowed, start=1):
            for j in cols:
                m[i - 1, j - 1] = True
        return m


def dom_pattern(g: Dag) -> SparsityPattern:
    """Row ``i`` may be nonzero on the closed dom set of ``i``."""
    return SparsityPattern(g.d, tuple(g.dom_bar(i) for i in g.nodes))


def parent_pattern(g: Dag) -> SparsityPattern:
    return SparsityPattern(g.d, tuple(g.parents(i) for i in g.nodes))


def pattern_membership(m: np.ndarray, g: Dag, cls: str = "dom0", tol: float = ZERO_TOL) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (g.d, g.d):
        raise GraphError(f"matrix shape {m.shape} does not match d={g.d}")
    if cls not in PATTERN_CLASSES:
        raise ValueError(f"unknown class {cls!r}; expected one of {PATTERN_CLASSES}")
    allowed = dom_pattern(g).mask()
    nonzero = np.abs(m) > tol
    if np.any(nonzero & ~allowed):
        return False
    if cls == "dom":
        return bool(np.all(nonzero[allowed]))
    if cls == "dom0":
        return bool(np.linalg.svd(m, compute_uv=False)[-1] > tol)
    return True


def random_dag(d: int, p: float, rng: np.random.Generator) -> Dag:
    """Bernoulli-``p`` edges ``i -> j`` for every ``i < j`` under the identity order."""
    if d < 1:
        raise GraphError(f"node count must be positive, got {d}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"edge probability must lie in (0, 1], got {p}")
    draws = rng.random((d, d)) < p
    edges = frozenset((i + 1, j + 1) for i in range(d) for j in range(i + 1, d) if draws[i, j])
    return Dag(d, edges)


def all_dags(d: int) -> Iterator[Dag]:
    """Every labelled DAG on ``d`` nodes (29281 for d=5)."""
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    seen: set[frozenset] = set()
    for perm in itertools.permutations(range(1, d + 1)):
        for mask in range(1 << len(pairs)):
            edges = frozenset(
                (perm[i], perm[j]) for b, (i, j) in enumerate(pairs) if mask >> b & 1
            )
            if edges not in seen:
                seen.add(edges)
                yield Dag(d, edges)
