"""Degree-0/1 persistent homology of Vietoris-Rips filtrations over F2.

H0 comes from a union-find sweep over the sorted edges (equivalently, the
minimum spanning forest).  H1 comes from column reduction of the
triangle-boundary matrix, with columns stored as integer bitmasks over the
edge ordering.  `brute_force_persistence` is a deliberately independent
reduction of the full boundary matrix of every simplex up to dimension 2 and
exists to cross-check the fast path on small inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

__all__ = [
    "DistanceMatrix",
    "PersistenceDiagram",
    "vr_persistence",
    "h0_via_mst",
    "brute_force_persistence",
    "save_diagrams",
    "load_diagrams",
]

BRUTE_FORCE_MAX_SIZE = 12


class DistanceMatrix:
    """Symmetric nonnegative matrix with zero diagonal."""

    def __init__(self, entries) -> None:
        entries = np.asarray(entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("distance matrix must be square")
        if entries.shape[0] == 0:
            raise ValueError("distance matrix must be nonempty")
        if not np.array_equal(entries, entries.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(entries) != 0.0):
            raise ValueError("distance matrix must have zero diagonal")
        if np.any(entries < 0.0):
            raise ValueError("distances must be nonnegative")
        self.entries = entries

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass
class PersistenceDiagram:
    """Finite (birth, death) pairs per degree; essential H0 classes are counted."""

    h0: list[tuple[float, float]] = field(default_factory=list)
    h1: list[tuple[float, float]] = field(default_factory=list)
    essential_h0: int = 0

    def sorted(self) -> "PersistenceDiagram":
        return PersistenceDiagram(
            h0=sorted(self.h0),
            h1=sorted(self.h1),
            essential_h0=self.essential_h0,
        )


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> bool:
        x, y = self.find(x), self.find(y)
        if x == y:
            return False
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        self.parent[y] = x
        if self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        return True


def _sorted_edges(D: DistanceMatrix, max_filtration: float) -> list[tuple[float, int, int]]:
    # Ties break on the lexicographically smaller vertex pair, for determinism.
    n = D.size
    M = D.entries
    edges = [
        (M[i, j], i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if M[i, j] <= max_filtration
    ]
    edges.sort()
    return edges


def h0_via_mst(
    D: DistanceMatrix, max_filtration: float
) -> tuple[list[tuple[float, float]], int]:
    """Finite H0 bars (0, death) and the essential-class count.

    Deaths are the minimum-spanning-forest edge weights <= max_filtration in
    nondecreasing order; zero-persistence bars are dropped.
    """
    uf = _UnionFind(D.size)
    deaths: list[float] = []
    components = D.size
    for w, i, j in _sorted_edges(D, max_filtration):
        if uf.union(i, j):
            components -= 1
            if w > 0.0:
                deaths.append(w)
    return [(0.0, d) for d in deaths], components


def vr_persistence(
    D: DistanceMatrix, max_dim: int = 1, max_filtration: float = 1.0
) -> PersistenceDiagram:
    """Vietoris-Rips barcode restricted to simplex diameter <= max_filtration."""
    if max_dim != 1:
        raise ValueError("only max_dim = 1 is supported")
    if max_filtration <= 0.0:
        raise ValueError("max_filtration must be positive")

    h0, essential = h0_via_mst(D, max_filtration)
    diagram = PersistenceDiagram(h0=h0, essential_h0=essential)
    if D.size < 3:
        return diagram.sorted()

    edges = _sorted_edges(D, max_filtration)
    edge_index = {(i, j): idx for idx, (_, i, j) in enumerate(edges)}

    M = D.entries
    triangles = []
    for i, j, k in combinations(range(D.size), 3):
        diam = max(M[i, j], M[i, k], M[j, k])
        if diam <= max_filtration:
            triangles.append((diam, i, j, k))
    triangles.sort()

    # Column reduction of the triangle boundary matrix; columns are bitmasks
    # over the sorted-edge index.
    pivot_of: dict[int, int] = {}
    for diam, i, j, k in triangles:
        col = (
            (1 << edge_index[(i, j)])
            ^ (1 << edge_index[(i, k)])
            ^ (1 << edge_index[(j, k)])
        )
        while col:
            low = col.bit_length() - 1
            other = pivot_of.get(low)
            if other is None:
                break
            col ^= other
        if col:
            pivot_of[low] = col
            birth = edges[low][0]
            if diam > birth:
                diagram.h1.append((birth, diam))
    return diagram.sorted()


def brute_force_persistence(
    D: DistanceMatrix, max_filtration: float | None = None
) -> PersistenceDiagram:
    """Reduction of the full boundary matrix over every simplex up to dim 2.

    Test oracle only; refuses point sets larger than BRUTE_FORCE_MAX_SIZE.
    """
    n = D.size
    if n > BRUTE_FORCE_MAX_SIZE:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_SIZE} points")
    M = D.entries
    if max_filtration is None:
        max_filtration = float(M.max()) if n > 1 else 0.0

    simplices: list[tuple[float, int, tuple[int, ...]]] = []
    for v in range(n):
        simplices.append((0.0, 0, (v,)))
    for i, j in combinations(range(n), 2):
        if M[i, j] <= max_filtration:
            simplices.append((float(M[i, j]), 1, (i, j)))
    for i, j, k in combinations(range(n), 3):
        diam = float(max(M[i, j], M[i, k], M[j, k]))
        if diam <= max_filtration:
            simplices.append((diam, 2, (i, j, k)))
    simplices.sort()

    row_of = {verts: idx for idx, (_, _, verts) in enumerate(simplices)}
    columns: list[set[int]] = []
    for _, dim, verts in simplices:
        if dim == 0:
            columns.append(set())
        else:
            columns.append({row_of[face] for face in combinations(verts, dim)})

    pivot_of: dict[int, int] = {}
    paired: set[int] = set()
    diagram = PersistenceDiagram()
    for j, col in enumerate(columns):
        while col:
            low = max(col)
            other = pivot_of.get(low)
            if other is None:
                break
            col ^= columns[other]
        if not col:
            continue
        pivot_of[low] = j
        paired.add(low)
        paired.add(j)
        birth_f, birth_dim, _ = simplices[low]
        death_f, _, _ = simplices[j]
        if death_f > birth_f:
            if birth_dim == 0:
                diagram.h0.append((birth_f, death_f))
            elif birth_dim == 1:
                diagram.h1.append((birth_f, death_f))
    diagram.essential_h0 = sum(
        1 for idx, (_, dim, _) in enumerate(simplices) if dim == 0 and idx not in paired
    )
    return diagram.sorted()


def save_diagrams(path, diagrams: dict[str, PersistenceDiagram]) -> None:
    """JSONL cache, one record per word."""
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(diagrams):
            d = diagrams[word].sorted()
            fh.write(
                json.dumps(
                    {
                        "word": word,
                        "h0": [[b, dth] for b, dth in d.h0],
                        "h1": [[b, dth] for b, dth in d.h1],
                        "essential_h0": d.essential_h0,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_diagrams(path) -> dict[str, PersistenceDiagram]:
    out: dict[str, PersistenceDiagram] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[obj["word"]] = PersistenceDiagram(
                h0=[(float(b), float(d)) for b, d in obj["h0"]],
                h1=[(float(b), float(d)) for b, d in obj["h1"]],
                essential_h0=int(obj["essential_h0"]),
            )
    return out
