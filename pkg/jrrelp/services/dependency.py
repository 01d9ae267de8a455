"""Dependency-tree validation and LCA-centred pruning."""

from collections import deque

import numpy as np

from jrrelp.errors import StructuralError
from jrrelp.schemas.corpus import Sentence


def validate_tree(dep_heads: list[int]) -> None:
    """
    Check that 1-based heads encode a tree.

    Raises:
        StructuralError: out-of-range head, not exactly one root, or a cycle
    """
    n = len(dep_heads)
    roots = [i for i, h in enumerate(dep_heads) if h == 0]
    if len(roots) != 1:
        raise StructuralError(f"dependency parse has {len(roots)} roots, expected 1")
    for i, h in enumerate(dep_heads):
        if not 0 <= h <= n:
            raise StructuralError(f"token {i} has head {h} outside 0..{n}")
        if h == i + 1:
            raise StructuralError(f"token {i} is its own head")

    state = [0] * n  # 0 unvisited, 1 on stack, 2 reaches root
    for start in range(n):
        path = []
        node = start
        while node != -1 and state[node] == 0:
            state[node] = 1
            path.append(node)
            node = dep_heads[node] - 1
        if node != -1 and state[node] == 1:
            raise StructuralError(f"dependency parse has a cycle through token {node}")
        for visited in path:
            state[visited] = 2


def _parents(dep_heads: list[int]) -> list[int]:
    return [h - 1 for h in dep_heads]


def _path_to_root(node: int, parents: list[int]) -> list[int]:
    path = [node]
    while parents[path[-1]] != -1:
        path.append(parents[path[-1]])
    return path


def lowest_common_ancestor(nodes: list[int], dep_heads: list[int]) -> int:
    """Deepest node that is an ancestor (inclusive) of every node in ``nodes``."""
    parents = _parents(dep_heads)
    paths = [_path_to_root(node, parents) for node in nodes]
    common = set(paths[0])
    for path in paths[1:]:
        common &= set(path)
    # The first common node on any root path is the deepest one.
    for node in paths[0]:
        if node in common:
            return node
    raise StructuralError("nodes share no ancestor")


def lca_path_nodes(sentence: Sentence) -> set[int]:
    """Tokens on the paths from every subject and object token to their LCA."""
    validate_tree(sentence.dep_heads)
    parents = _parents(sentence.dep_heads)
    anchors = list(sentence.subj_indices()) + list(sentence.obj_indices())
    lca = lowest_common_ancestor(anchors, sentence.dep_heads)

    kept = {lca}
    for node in anchors:
        for step in _path_to_root(node, parents):
            kept.add(step)
            if step == lca:
                break
    return kept


def _tree_neighbours(dep_heads: list[int]) -> list[list[int]]:
    neighbours: list[list[int]] = [[] for _ in dep_heads]
    for child, head in enumerate(dep_heads):
        if head > 0:
            neighbours[child].append(head - 1)
            neighbours[head - 1].append(child)
    return neighbours


def _adjacency(dep_heads: list[int], kept: set[int]) -> np.ndarray:
    n = len(dep_heads)
    adj = np.zeros((n, n), dtype=bool)
    for child, head in enumerate(dep_heads):
        parent = head - 1
        if parent >= 0 and child in kept and parent in kept:
            adj[child, parent] = True
            adj[parent, child] = True
    for node in kept:
        adj[node, node] = True
    return adj


def prune_dependency_tree(sentence: Sentence, K: int) -> np.ndarray:
    """
    Symmetric boolean adjacency of the pruned tree, self-loops included.

    Keeps the LCA paths of the subject and object tokens plus every token
    within tree distance ``K`` of them.
    """
    if K < 0:
        raise StructuralError(f"prune distance must be non-negative, got {K}")
    path = lca_path_nodes(sentence)
    neighbours = _tree_neighbours(sentence.dep_heads)

    distance = {node: 0 for node in path}
    queue = deque(path)
    while queue:
        node = queue.popleft()
        if distance[node] == K:
            continue
        for nxt in neighbours[node]:
            if nxt not in distance:
                distance[nxt] = distance[node] + 1
                queue.append(nxt)

    return _adjacency(sentence.dep_heads, set(distance))


def full_tree_adjacency(sentence: Sentence) -> np.ndarray:
    """Unpruned symmetrized tree with self-loops on every token."""
    validate_tree(sentence.dep_heads)
    return _adjacency(sentence.dep_heads, set(range(sentence.n)))
