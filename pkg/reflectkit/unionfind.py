"""Disjoint sets with union by rank and path compression."""

from typing import Dict, Hashable, Iterable, List


class UnionFind:
    """Partition of a finite collection, refined by ``union`` calls.

    Attributes:
        n_clusters: Current number of disjoint sets.
    """

    def __init__(self, items: Iterable[Hashable]):
        self._leader: Dict[Hashable, Hashable] = {s: s for s in items}
        self._size = {s: 1 for s in self._leader}
        self._rank = {s: 0 for s in self._leader}
        self.n_clusters = len(self._leader)

    def __repr__(self):
        return f"UnionFind({self.n_clusters} clusters)"

    def find(self, s: Hashable) -> Hashable:
        """Leader of the set containing ``s``."""
        trail = [s]
        parent = self._leader[s]
        while parent != self._leader[parent]:
            trail.append(parent)
            parent = self._leader[parent]
        for a in trail:
            self._leader[a] = parent
        return parent

    def union(self, a: Hashable, b: Hashable) -> bool:
        """Merge the sets of ``a`` and ``b``; False when they were already one."""
        s1, s2 = self.find(a), self.find(b)
        if s1 == s2:
            return False
        if self._rank[s2] > self._rank[s1]:
            s1, s2 = s2, s1
        if self._rank[s1] == self._rank[s2]:
            self._rank[s1] += 1
        self._leader[s2] = s1
        self._size[s1] += self._size[s2]
        self.n_clusters -= 1
        return True

    def size(self, s: Hashable) -> int:
        return self._size[self.find(s)]

    def groups(self) -> List[List[Hashable]]:
        """Sets as sorted lists, ordered by their smallest member."""
        out: Dict[Hashable, List[Hashable]] = {}
        for s in self._leader:
            out.setdefault(self.find(s), []).append(s)
        return sorted((sorted(g) for g in out.values()), key=lambda g: g[0])
