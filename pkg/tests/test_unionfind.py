"""
Unit tests for the disjoint-set structure
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from reflectkit.unionfind import UnionFind
from tests.test_helpers import closure_partition


class TestUnionFind(unittest.TestCase):
    """Test union, find and the grouped view"""

    def test_singletons(self):
        uf = UnionFind(range(4))
        self.assertEqual(uf.n_clusters, 4)
        self.assertEqual(uf.groups(), [[0], [1], [2], [3]])
        self.assertEqual(repr(uf), "UnionFind(4 clusters)")

    def test_union(self):
        uf = UnionFind("abcde")
        self.assertTrue(uf.union("a", "c"))
        self.assertTrue(uf.union("d", "e"))
        self.assertFalse(uf.union("c", "a"))
        self.assertEqual(uf.n_clusters, 3)
        self.assertEqual(uf.find("a"), uf.find("c"))
        self.assertNotEqual(uf.find("a"), uf.find("d"))
        self.assertEqual(uf.size("c"), 2)
        self.assertEqual(uf.groups(), [["a", "c"], ["b"], ["d", "e"]])

    def test_long_chain(self):
        uf = UnionFind(range(100))
        for i in range(99):
            uf.union(i, i + 1)
        self.assertEqual(uf.n_clusters, 1)
        self.assertEqual(uf.size(0), 100)
        self.assertEqual(uf.find(0), uf.find(99))

    def test_matches_transitive_closure(self):
        gen = np.random.default_rng(0)
        for trial in range(10):
            with self.subTest(trial=trial):
                n = 12
                edges = [tuple(sorted(gen.choice(n, 2, replace=False).tolist()))
                         for _ in range(8)]
                uf = UnionFind(range(n))
                for i, j in edges:
                    uf.union(i, j)
                self.assertEqual(uf.groups(), closure_partition(n, edges))
                self.assertEqual(uf.n_clusters, len(closure_partition(n, edges)))

    def test_unknown_member(self):
        with self.assertRaises(KeyError):
            UnionFind(range(3)).find(7)


if __name__ == '__main__':
    unittest.main()
