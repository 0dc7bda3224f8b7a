"""Forward-backward computation over the AND-OR graph.

In the folding stage OR nodes average their children and every node
receives gradient; in the unfolding stage OR nodes take an element-wise
max per class, which selects one parse tree per class (the parsing
operator).  AND nodes sum in both stages.  The root score is normalized
by the expected terminal count (folding) or by the terminal count of the
per-class argmax tree (unfolding) so trees of different sizes compare
fairly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError, StateError
from .grammar import (Aog, Configuration, Kind, ParseTree, collapse,
                      enumerate_parse_trees)


class Mode(str, Enum):
    FOLDING = "folding"
    UNFOLDING = "unfolding"


class GradientMode(str, Enum):
    EXACT = "exact"            # true adjoint of the MEAN at OR nodes
    PAPER_LITERAL = "paper"    # replicate gradient to all OR children


@dataclass
class ForwardState:
    mode: Mode
    num_classes: int
    f: dict[int, np.ndarray]            # node id -> (C,) score vector
    omega0: dict[int, float]            # folding normalizer recursion
    argmax: dict[int, np.ndarray]       # OR id -> (C,) chosen child ids
    omega1: np.ndarray | None           # (C,) unfolding normalizer
    root_prenorm: np.ndarray
    root_normalized: np.ndarray


def forward(aog: Aog, terminal_scores: dict[int, np.ndarray],
            mode: Mode) -> ForwardState:
    """One pass over dfs_order (children before parents).

    Ties at the element-wise max go to the lowest child-order index, so
    results are deterministic.
    """
    f: dict[int, np.ndarray] = {}
    omega0: dict[int, float] = {}
    argmax: dict[int, np.ndarray] = {}
    num_classes = None
    for nid in aog.dfs_order:
        node = aog.nodes[nid]
        if node.kind == Kind.TERMINAL:
            if nid not in terminal_scores:
                raise DataError(f"no score vector for terminal {nid}")
            vec = np.asarray(terminal_scores[nid], dtype=float)
            if num_classes is None:
                num_classes = vec.shape[0]
            f[nid] = vec
            omega0[nid] = 1.0
        elif node.kind == Kind.AND:
            a, b = node.children
            f[nid] = f[a] + f[b]
            if mode == Mode.FOLDING:
                omega0[nid] = omega0[a] + omega0[b]
        else:
            stacked = np.stack([f[c] for c in node.children])
            if mode == Mode.FOLDING:
                f[nid] = stacked.mean(axis=0)
                omega0[nid] = sum(omega0[c] for c in node.children) / len(node.children)
            else:
                best = np.argmax(stacked, axis=0)  # first max wins ties
                f[nid] = stacked[best, np.arange(stacked.shape[1])]
                argmax[nid] = np.asarray(node.children)[best]

    prenorm = f[aog.root_id].copy()
    root = aog.root
    if root.kind == Kind.TERMINAL:
        # degenerate 1x1-style graph: nothing to normalize
        omega1 = np.ones(num_classes) if mode == Mode.UNFOLDING else None
        return ForwardState(mode, num_classes, f, omega0, argmax, omega1,
                            prenorm, prenorm.copy())
    if mode == Mode.FOLDING:
        normalized = prenorm / omega0[aog.root_id]
        omega1 = None
    else:
        omega1 = compute_omega1(aog, argmax, num_classes)
        normalized = prenorm / omega1
    return ForwardState(mode, num_classes, f, omega0, argmax, omega1,
                        prenorm, normalized)


def compute_omega1(aog: Aog, argmax: dict[int, np.ndarray],
                   num_classes: int) -> np.ndarray:
    """Terminal count of the argmax parse tree, per class."""
    omega1 = np.zeros(num_classes)
    for c in range(num_classes):
        queue = [aog.root_id]
        while queue:
            node = aog.nodes[queue.pop()]
            if node.kind == Kind.TERMINAL:
                omega1[c] += 1
            elif node.kind == Kind.AND:
                queue.extend(node.children)
            else:
                if node.id not in argmax:
                    raise StateError(
                        f"no argmax entry for OR node {node.id}; "
                        "run an unfolding forward first")
                queue.append(int(argmax[node.id][c]))
    return omega1


def backward(aog: Aog, state: ForwardState, g_root: np.ndarray,
             gradient_mode: GradientMode = GradientMode.EXACT
             ) -> dict[int, np.ndarray]:
    """Distribute a root gradient down to the Terminals.

    The incoming gradient is first divided by the root normalizer (the
    unfolding normalizer is treated as locally constant).  bfs_order
    guarantees each node's accumulated gradient is complete before it is
    distributed to its children.
    """
    g_root = np.asarray(g_root, dtype=float)
    if g_root.shape != (state.num_classes,):
        raise DataError(f"root gradient shape {g_root.shape} != "
                        f"({state.num_classes},)")
    root = aog.root
    if root.kind == Kind.TERMINAL:
        return {aog.root_id: g_root.copy()}
    if state.mode == Mode.FOLDING:
        g0 = g_root / state.omega0[aog.root_id]
    else:
        if state.omega1 is None:
            raise StateError("state has no unfolding normalizer")
        g0 = g_root / state.omega1

    g: dict[int, np.ndarray] = {nid: np.zeros(state.num_classes)
                                for nid in aog.bfs_order}
    g[aog.root_id] = g0.copy()
    for nid in aog.bfs_order:
        node = aog.nodes[nid]
        gv = g[nid]
        if node.kind == Kind.AND:
            for c in node.children:
                g[c] += gv
        elif node.is_or_like:
            if state.mode == Mode.UNFOLDING:
                if nid not in state.argmax:
                    raise StateError(f"no argmax for OR node {nid}: "
                                     "mode mismatch between state and graph")
                for c in range(state.num_classes):
                    g[int(state.argmax[nid][c])][c] += gv[c]
            elif gradient_mode == GradientMode.EXACT:
                share = gv / len(node.children)
                for c in node.children:
                    g[c] += share
            else:
                for c in node.children:
                    g[c] += gv
    return {tid: g[tid] for tid in aog.terminal_ids}


def extract_parse_tree(aog: Aog, state: ForwardState, class_index: int) -> ParseTree:
    """Best parse tree for one class from an unfolding forward."""
    if state.mode != Mode.UNFOLDING:
        raise StateError("parse trees exist only in unfolding mode")
    if not 0 <= class_index < state.num_classes:
        raise DataError(f"class {class_index} out of range")
    chosen = {}
    stack = [aog.root_id]
    while stack:
        node = aog.nodes[stack.pop()]
        if node.kind == Kind.AND:
            stack.extend(node.children)
        elif node.is_or_like:
            child = int(state.argmax[node.id][class_index])
            chosen[node.id] = child
            stack.append(child)
    return ParseTree.from_choices(aog, chosen, class_index)


def collapse_configuration(aog: Aog, tree: ParseTree) -> Configuration:
    return collapse(aog, tree)


@dataclass
class BruteForceResult:
    scores: np.ndarray                       # (C,) pre-normalization root
    best_trees: list[ParseTree] | None       # unfolding: per-class argmax
    expected_terminals: float | None         # folding: E[#terminals]


def brute_force_root(aog: Aog, terminal_scores: dict[int, np.ndarray],
                     mode: Mode, limit: int = 100_000) -> BruteForceResult:
    """Independent oracle for the forward pass by full tree enumeration.

    Folding: expectation of per-tree terminal-score sums under uniform
    branching at every OR node.  Unfolding: per-class max of the sums.
    """
    trees = enumerate_parse_trees(aog, limit)
    sums = []
    probs = []
    for tree in trees:
        sums.append(np.sum([terminal_scores[t] for t in tree.terminal_ids],
                           axis=0))
        p = 1.0
        for nid in tree.chosen_or_children:
            p /= len(aog.nodes[nid].children)
        probs.append(p)
    sums = np.asarray(sums, dtype=float)  # (n_trees, C)
    probs = np.asarray(probs)

    if mode == Mode.FOLDING:
        scores = probs @ sums
        expected_terminals = float(
            probs @ np.array([len(t.terminal_ids) for t in trees]))
        return BruteForceResult(scores, None, expected_terminals)

    best_idx = np.argmax(sums, axis=0)
    scores = sums[best_idx, np.arange(sums.shape[1])]
    best_trees = []
    for c, i in enumerate(best_idx):
        t = trees[int(i)]
        best_trees.append(ParseTree(c, dict(t.chosen_or_children),
                                    list(t.node_ids), list(t.terminal_ids)))
    return BruteForceResult(scores, best_trees, None)
