"""Hand-built trees and sequences for tests that do not need real HTML."""
from typing import List, Optional, Sequence

import numpy as np

from domlm.dom_ingest import DomNode, DomTree
from domlm.linearizer import NUM_FEATURES, PositionedSequence


def make_tree(
    parents: Sequence[Optional[int]],
    tags: Optional[Sequence[str]] = None,
    texts: Optional[Sequence[str]] = None,
) -> DomTree:
    """Tree from a parent list in preorder (``parents[0]`` is None)."""
    n = len(parents)
    tags = tags or ["div"] * n
    texts = texts or [f"n{i}" for i in range(n)]
    children: List[List[int]] = [[] for _ in range(n)]
    depths = [0] * n
    for i, p in enumerate(parents):
        if p is not None:
            children[p].append(i)
            depths[i] = depths[p] + 1
    nodes = tuple(DomNode(i, tags[i], (), texts[i], parents[i], tuple(children[i])) for i in range(n))

    postorder = []
    stack = [(0, False)]
    while stack:
        node_id, expanded = stack.pop()
        if expanded:
            postorder.append(node_id)
            continue
        stack.append((node_id, True))
        for c in reversed(children[node_id]):
            stack.append((c, False))
    return DomTree(nodes=nodes, root=0, preorder=tuple(range(n)), postorder=tuple(postorder), depths=tuple(depths))


def random_parents(
    n: int,
    rng: np.random.Generator,
    max_branching: Optional[int] = None,
    max_depth: Optional[int] = None,
) -> List[Optional[int]]:
    """
    Random tree shape whose ids are a valid preorder: each node hangs off the current rightmost path.

    With ``max_branching`` or ``max_depth`` set, nodes only attach where both limits still hold,
    and the tree stops early once no such place is left on the rightmost path.
    """
    parents: List[Optional[int]] = [None]
    n_children = [0]
    depth = [0]
    path = [0]
    for i in range(1, n):
        open_slots = [
            k for k, node in enumerate(path)
            if (max_branching is None or n_children[node] < max_branching)
            and (max_depth is None or depth[node] < max_depth)
        ]
        if not open_slots:
            break
        k = open_slots[int(rng.integers(len(open_slots)))]
        parent = path[k]
        parents.append(parent)
        n_children[parent] += 1
        n_children.append(0)
        depth.append(depth[parent] + 1)
        path = path[: k + 1] + [i]
    return parents


def bare_sequence(n: int, prefix_len: int = 0, yes_no=None, doc_id: str = "d") -> PositionedSequence:
    """Sequence of ``n`` tokens without node structure, for span decoding tests."""
    return PositionedSequence(
        tokens=np.zeros(n, dtype=np.int64),
        pos=np.zeros((n, NUM_FEATURES), dtype=np.int64),
        node_anchor={},
        node_ranges={},
        origin=(doc_id, 0),
        prefix_len=prefix_len,
        yes_no=yes_no,
    )
