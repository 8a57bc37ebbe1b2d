"""
DOM tree processor: split a cleaned tree into overlapping connected subtrees
under a token budget.

Each round admits new nodes in preorder (up to the stride), then prunes the
already visited nodes, first in postorder, then by dropping the subtree root
while it has fewer than two in-window children, and finally by dropping the
most recently admitted node.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Literal, Mapping, Tuple

from domlm.dom_ingest import DomTree
from domlm.errors import BudgetTooSmall, InvalidStride

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Subtree:
    node_ids: Tuple[int, ...]
    token_total: int
    window_index: int
    # first node admitted in this round; strictly increasing across windows
    leading_node: int
    # nodes whose token sequence is cut to the budget (oversize policy "truncate")
    truncated: Dict[int, int] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.node_ids)


@dataclass(frozen=True)
class CoverageStats:
    appearances: Dict[int, int]
    uncovered: Tuple[int, ...]
    max_token_total: int
    disconnected: Tuple[int, ...]
    over_budget: Tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not (self.uncovered or self.disconnected or self.over_budget)


def _validate(counts: Mapping[int, int], max_tokens: int, stride: int, oversize: str) -> Dict[int, int]:
    if max_tokens < 1:
        raise BudgetTooSmall(f"token budget must be >= 1, got {max_tokens}")
    if stride < 1 or stride > max_tokens:
        raise InvalidStride(f"stride must satisfy 1 <= S <= M, got S={stride}, M={max_tokens}")
    oversized = {n: c for n, c in counts.items() if c > max_tokens}
    if oversized and oversize == "error":
        raise BudgetTooSmall(
            f"budget M={max_tokens} is smaller than the largest node ({max(oversized.values())} tokens)"
        )
    return oversized


def generate_subtrees(
    tree: DomTree,
    counts: Mapping[int, int],
    max_tokens: int = 512,
    stride: int = 128,
    oversize: Literal["truncate", "error"] = "truncate",
) -> List[Subtree]:
    """
    Generate overlapping connected subtrees of ``tree``.

    Args:
        tree (DomTree): Cleaned document tree.
        counts (Mapping[int, int]): Token count of every node.
        max_tokens (int): Token budget M of one window.
        stride (int): Token count S of newly admitted nodes per round.
        oversize (str): "truncate" cuts a node larger than M to M tokens,
            "error" raises BudgetTooSmall.

    Returns:
        List[Subtree]: Windows in emission order.

    Raises:
        BudgetTooSmall: If M < 1, or a node exceeds M under the "error" policy.
        InvalidStride: If S is outside 1..M.
    """
    oversized = _validate(counts, max_tokens, stride, oversize)
    if oversized:
        logger.debug(f"Truncating {len(oversized)} oversized node(s) to {max_tokens} tokens")
    size = {n: min(counts[n], max_tokens) for n in tree.preorder}
    post_rank = {n: i for i, n in enumerate(tree.postorder)}
    n_nodes = len(tree)

    windows: List[Subtree] = []

    # first round: fill by preorder while the budget holds
    new: List[int] = []
    total = 0
    for node_id in tree.preorder:
        if total + size[node_id] > max_tokens:
            break
        new.append(node_id)
        total += size[node_id]

    while new:
        in_new = set(new)
        first_new = new[0]
        # every node before the new ones in preorder
        visited = list(range(first_new))
        in_visited = set(visited)
        length = sum(size[n] for n in new) + sum(size[n] for n in visited)

        # prune visited nodes in postorder, stopping at the first new node
        for node_id in tree.postorder:
            if node_id in in_new or length < max_tokens:
                break
            if node_id not in in_visited:
                # descendant of the last new node, not part of the window
                continue
            in_visited.discard(node_id)
            length -= size[node_id]

        visited = [n for n in visited if n in in_visited]

        # drop the root while that keeps the window connected, else the last new node
        while length > max_tokens:
            if visited:
                root = visited[0]
                in_window = in_visited | in_new
                n_child = sum(1 for c in tree[root].children if c in in_window)
                # a lone new node always stays, so the root goes even when it branches
                if n_child < 2 or len(new) == 1:
                    length -= size[root]
                    visited.pop(0)
                    in_visited.discard(root)
                    continue
            last = new.pop()
            in_new.discard(last)
            length -= size[last]

        node_ids = tuple(sorted(visited + new))
        windows.append(Subtree(
            node_ids=node_ids,
            token_total=length,
            window_index=len(windows),
            leading_node=first_new,
            truncated={n: max_tokens for n in node_ids if n in oversized},
        ))

        # slide: admit nodes after the last new one until they pass the stride
        last_new = new[-1]
        new = []
        admitted = 0
        for node_id in range(last_new + 1, n_nodes):
            if admitted > stride:
                break
            new.append(node_id)
            admitted += size[node_id]

    logger.debug(f"Generated {len(windows)} window(s) over {n_nodes} nodes (M={max_tokens}, S={stride})")
    return windows


def is_connected(tree: DomTree, node_ids: Tuple[int, ...]) -> bool:
    """True when exactly one node of the set has its parent outside the set."""
    if not node_ids:
        return False
    members = set(node_ids)
    roots = [n for n in node_ids if tree[n].parent not in members]
    return len(roots) == 1


def coverage_report(tree: DomTree, windows: List[Subtree], max_tokens: int = 0) -> CoverageStats:
    """
    Summarize how a window list covers a tree.

    Args:
        tree (DomTree): The windowed tree.
        windows (List[Subtree]): Output of generate_subtrees.
        max_tokens (int): Budget to check token totals against; 0 skips the check.

    Returns:
        CoverageStats: Per-node appearance counts, uncovered nodes, largest
        token total, and indices of disconnected or over-budget windows.
    """
    appearances = {n: 0 for n in tree.preorder}
    for window in windows:
        for node_id in window.node_ids:
            appearances[node_id] += 1
    return CoverageStats(
        appearances=appearances,
        uncovered=tuple(n for n, c in appearances.items() if c == 0),
        max_token_total=max((w.token_total for w in windows), default=0),
        disconnected=tuple(w.window_index for w in windows if not is_connected(tree, w.node_ids)),
        over_budget=tuple(w.window_index for w in windows if max_tokens and w.token_total > max_tokens),
    )
