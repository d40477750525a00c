"""Disjoint-set forest over integer labels 0..n-1."""

from __future__ import annotations

import numpy as np


class UnionFind:
    """Union by size with path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def labels(self) -> np.ndarray:
        """Root label of every element."""
        return np.array([self.find(x) for x in range(len(self.parent))], dtype=np.int64)


def component_labels(n: int, i, j) -> np.ndarray:
    """Connected-component root of each of ``n`` nodes for the edge list (i, j)."""
    uf = UnionFind(n)
    for a, b in zip(np.asarray(i).tolist(), np.asarray(j).tolist()):
        uf.union(a, b)
    return uf.labels()
