"""Tree validation and LCA-centred pruning against a brute-force reference."""

from collections import deque
from itertools import combinations

import numpy as np
import pytest

from jrrelp.errors import StructuralError
from jrrelp.schemas.corpus import Sentence
from jrrelp.services.dependency import (
    full_tree_adjacency,
    lca_path_nodes,
    lowest_common_ancestor,
    prune_dependency_tree,
    validate_tree,
)


def _sentence(heads, subj_span, obj_span):
    n = len(heads)
    return Sentence(
        tokens=[f"w{i}" for i in range(n)],
        subj_span=subj_span,
        obj_span=obj_span,
        subj_type="PERSON",
        obj_type="CITY",
        pos_tags=["NN"] * n,
        ner_tags=["O"] * n,
        dep_heads=heads,
        relation="LivesIn",
    )


def _random_tree(rng, n):
    order = rng.permutation(n)
    heads = [0] * n
    for k in range(1, n):
        parent = order[int(rng.integers(k))]
        heads[order[k]] = int(parent) + 1
    return heads


def _random_spans(rng, n):
    cuts = sorted(rng.choice(n, size=2, replace=False).tolist())
    first = (cuts[0], cuts[0] + int(rng.integers(0, max(1, cuts[1] - cuts[0]))))
    first = (first[0], min(first[1], cuts[1] - 1))
    second = (cuts[1], min(n - 1, cuts[1] + int(rng.integers(0, 2))))
    return (first, second) if rng.random() < 0.5 else (second, first)


def _undirected(heads):
    graph = {i: set() for i in range(len(heads))}
    for child, head in enumerate(heads):
        if head:
            graph[child].add(head - 1)
            graph[head - 1].add(child)
    return graph


def _path(graph, a, b):
    parent = {a: None}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        for nxt in graph[node]:
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    path = [b]
    while path[-1] != a:
        path.append(parent[path[-1]])
    return path


def _brute_force_adjacency(sentence, K):
    graph = _undirected(sentence.dep_heads)
    anchors = list(sentence.subj_indices()) + list(sentence.obj_indices())
    spanning = set(anchors)
    for a, b in combinations(anchors, 2):
        spanning.update(_path(graph, a, b))
    kept = {
        node
        for node in graph
        if min(len(_path(graph, node, target)) - 1 for target in spanning) <= K
    }
    n = sentence.n
    adj = np.zeros((n, n), dtype=bool)
    for node in kept:
        adj[node, node] = True
        for nxt in graph[node]:
            if nxt in kept:
                adj[node, nxt] = True
    return adj


class TestValidateTree:
    def test_accepts_tree(self):
        validate_tree([2, 0, 2, 3])

    def test_two_roots(self):
        with pytest.raises(StructuralError, match="roots"):
            validate_tree([0, 0, 2])

    def test_cycle(self):
        with pytest.raises(StructuralError, match="cycle"):
            validate_tree([2, 3, 2, 0])

    def test_head_out_of_range(self):
        with pytest.raises(StructuralError):
            validate_tree([0, 7])

    def test_self_loop(self):
        with pytest.raises(StructuralError):
            validate_tree([0, 2])


def test_lowest_common_ancestor():
    # 1 is the root; 0 and 2 hang off 1; 3 hangs off 2.
    heads = [2, 0, 2, 3]
    assert lowest_common_ancestor([0, 3], heads) == 1
    assert lowest_common_ancestor([2, 3], heads) == 2
    assert lowest_common_ancestor([3], heads) == 3


def test_k0_keeps_only_lca_path():
    # Root 2 with branches 2-1-0 and 2-3-4, plus a leaf 5 under 2.
    sentence = _sentence([2, 3, 0, 3, 4, 3], subj_span=(0, 0), obj_span=(4, 4))
    assert lca_path_nodes(sentence) == {0, 1, 2, 3, 4}
    adj = prune_dependency_tree(sentence, 0)
    assert not adj[5].any()
    assert adj[1, 2] and adj[2, 1]
    assert adj[2, 2]


def test_k1_adds_neighbours():
    sentence = _sentence([2, 3, 0, 3, 4, 3], subj_span=(0, 0), obj_span=(4, 4))
    adj = prune_dependency_tree(sentence, 1)
    assert adj[5, 2] and adj[2, 5] and adj[5, 5]


def test_negative_k_rejected():
    sentence = _sentence([2, 0, 2], subj_span=(0, 0), obj_span=(2, 2))
    with pytest.raises(StructuralError):
        prune_dependency_tree(sentence, -1)


def test_large_k_equals_full_tree():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        subj, obj = _random_spans(rng, n)
        sentence = _sentence(_random_tree(rng, n), subj, obj)
        np.testing.assert_array_equal(prune_dependency_tree(sentence, n), full_tree_adjacency(sentence))


def test_pruning_matches_brute_force_on_random_trees():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        subj, obj = _random_spans(rng, n)
        sentence = _sentence(_random_tree(rng, n), subj, obj)
        K = int(rng.integers(0, 3))
        actual = prune_dependency_tree(sentence, K)
        np.testing.assert_array_equal(actual, _brute_force_adjacency(sentence, K))
        np.testing.assert_array_equal(actual, actual.T)
