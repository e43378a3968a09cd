"""Directed graphs over gene indices: predicted-network representation,
reachability, negative-pair sampling, union, and structural hamming distance.

Graphs are plain adjacency tuples and never required to be acyclic; the
methods under evaluation are free to emit cycles.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import GeneTable
from .errors import DataError
from .seeding import derive_rng


@dataclass(frozen=True)
class EdgeList:
    """Directed gene-pair predictions with optional weights.

    This is the sole exchange format between inference methods and the
    scoring code: TSV lines ``source<TAB>target[<TAB>weight]``, no header.
    """

    edges: tuple[tuple[str, str, float | None], ...]

    @classmethod
    def from_pairs(cls, pairs) -> "EdgeList":
        norm = []
        for entry in pairs:
            src, tgt, *rest = entry
            weight = float(rest[0]) if rest and rest[0] is not None else None
            norm.append((str(src), str(tgt), weight))
        return cls(tuple(norm))

    @classmethod
    def read_tsv(cls, path) -> "EdgeList":
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing file: {path}")
        edges = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) not in (2, 3) or not fields[0] or not fields[1]:
                raise DataError(f"{path}:{lineno}: expected 'source<TAB>target[<TAB>weight]'")
            weight = None
            if len(fields) == 3:
                try:
                    weight = float(fields[2])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: bad weight {fields[2]!r}") from exc
            edges.append((fields[0], fields[1], weight))
        return cls(tuple(edges))

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for src, tgt, weight in self.edges:
                if weight is None:
                    fh.write(f"{src}\t{tgt}\n")
                else:
                    fh.write(f"{src}\t{tgt}\t{weight!r}\n")

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class DirectedGraph:
    """Adjacency-list digraph over ``n`` nodes; no self-loops or duplicates."""

    n: int
    adjacency: tuple[tuple[int, ...], ...]

    @classmethod
    def from_edges(cls, n: int, edges) -> "DirectedGraph":
        adj: list[set[int]] = [set() for _ in range(n)]
        for a, b in edges:
            a, b = int(a), int(b)
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) out of range for n={n}")
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            adj[a].add(b)
        return cls(n=n, adjacency=tuple(tuple(sorted(s)) for s in adj))

    @property
    def n_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.adjacency)

    def edges(self):
        for a, nbrs in enumerate(self.adjacency):
            for b in nbrs:
                yield (a, b)

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.adjacency[a]


@dataclass(frozen=True)
class EdgeResolution:
    """Bookkeeping of a lossy EdgeList -> DirectedGraph conversion."""

    n_edges: int
    n_unresolved: int
    n_self_loops: int
    n_duplicates: int


def from_edge_list(el: EdgeList, genes: GeneTable) -> tuple[DirectedGraph, EdgeResolution]:
    """Resolve symbols to node ids, dropping and counting bad edges.

    Edges with a symbol missing from ``genes`` are unresolved; resolved
    self-loops and duplicates are dropped. Conversion never fails.
    """
    seen: set[tuple[int, int]] = set()
    unresolved = self_loops = duplicates = 0
    for src, tgt, _ in el.edges:
        if src not in genes or tgt not in genes:
            unresolved += 1
            continue
        a, b = genes.column(src), genes.column(tgt)
        if a == b:
            self_loops += 1
            continue
        if (a, b) in seen:
            duplicates += 1
            continue
        seen.add((a, b))
    graph = DirectedGraph.from_edges(len(genes), sorted(seen))
    return graph, EdgeResolution(len(seen), unresolved, self_loops, duplicates)


def descendants(g: DirectedGraph, a: int) -> frozenset[int]:
    """Nodes reachable from ``a`` by a directed path, including ``a`` itself."""
    if not 0 <= a < g.n:
        raise ValueError(f"node {a} out of range for n={g.n}")
    seen = {a}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        for nbr in g.adjacency[node]:
            if nbr not in seen:
                seen.add(nbr)
                queue.append(nbr)
    return frozenset(seen)


def reachable(g: DirectedGraph, a: int, b: int) -> bool:
    """True iff a directed path a -> ... -> b exists (a == b counts)."""
    if not 0 <= b < g.n:
        raise ValueError(f"node {b} out of range for n={g.n}")
    if not 0 <= a < g.n:
        raise ValueError(f"node {a} out of range for n={g.n}")
    if a == b:
        return True
    seen = {a}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        for nbr in g.adjacency[node]:
            if nbr == b:
                return True
            if nbr not in seen:
                seen.add(nbr)
                queue.append(nbr)
    return False


@dataclass(frozen=True)
class NegativePairs:
    """Sampled source/target pairs with no predicted path source -> target."""

    pairs: tuple[tuple[int, int], ...]
    exhausted: bool  # fewer pairs than requested could be found


#: Rejection-sampling budget, in draws per requested pair.
NEGATIVE_PAIR_DRAW_FACTOR = 100


def sample_negative_pairs(
    g: DirectedGraph, sources, count: int, seed: int
) -> NegativePairs:
    """Uniformly sample distinct pairs (a, b) with a in ``sources``, b != a,
    and no directed path a -> b in ``g``.

    Uses seeded rejection sampling with per-source descendant memoization.
    Returns fewer pairs (flagged) when the draw budget of
    ``NEGATIVE_PAIR_DRAW_FACTOR * count`` is exhausted first.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    src = sorted({int(s) for s in sources})
    if not src:
        raise ValueError("sources must be non-empty")
    if src[0] < 0 or src[-1] >= g.n:
        raise ValueError(f"source out of range for n={g.n}")
    if g.n < 2:
        return NegativePairs((), exhausted=True)

    rng = derive_rng(seed, "negative-pairs")
    reach_cache: dict[int, frozenset[int]] = {}
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    budget = NEGATIVE_PAIR_DRAW_FACTOR * count
    for _ in range(budget):
        a = src[int(rng.integers(len(src)))]
        b = int(rng.integers(g.n - 1))
        if b >= a:
            b += 1
        if (a, b) in seen:
            continue
        seen.add((a, b))
        if a not in reach_cache:
            reach_cache[a] = descendants(g, a)
        if b in reach_cache[a]:
            continue
        out.append((a, b))
        if len(out) == count:
            break
    return NegativePairs(tuple(out), exhausted=len(out) < count)


def union(graphs) -> DirectedGraph:
    """Edge-set union of graphs over the same node universe."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("union of zero graphs")
    n = graphs[0].n
    for g in graphs[1:]:
        if g.n != n:
            raise ValueError(f"node-count mismatch: {g.n} != {n}")
    edges: set[tuple[int, int]] = set()
    for g in graphs:
        edges.update(g.edges())
    return DirectedGraph.from_edges(n, sorted(edges))


def shd(g1: DirectedGraph, g2: DirectedGraph) -> int:
    """Structural hamming distance: node pairs whose edge status differs.

    A reversal (a->b vs b->a) counts as one difference.
    """
    if g1.n != g2.n:
        raise ValueError(f"node-count mismatch: {g1.n} != {g2.n}")
    e1 = set(g1.edges())
    e2 = set(g2.edges())
    pairs = {(min(a, b), max(a, b)) for a, b in e1 | e2}
    diff = 0
    for a, b in pairs:
        status1 = ((a, b) in e1, (b, a) in e1)
        status2 = ((a, b) in e2, (b, a) in e2)
        diff += status1 != status2
    return diff
