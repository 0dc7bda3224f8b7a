"""Grid grammar embedded in a directed acyclic AND-OR graph.

A rectangular grid symbol either terminates (Terminal node), or is cut
once, vertically or horizontally, into two smaller symbols (one AND node
per cut position) with the alternatives collected under an OR node.
Applying the rules recursively with sub-grid sharing yields a DAG.  An
extra super-OR root groups the OR nodes whose rectangle covers more than
a threshold fraction of the grid, so a noisy box can be explained by a
large sub-window.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

from .errors import CapacityError, LookupError_, ParameterError


class Kind(str, Enum):
    TERMINAL = "terminal"
    AND = "and"
    OR = "or"
    SUPER_OR = "super_or"


class Axis(str, Enum):
    VERTICAL = "vertical"      # cut parallel to the y axis: left | right
    HORIZONTAL = "horizontal"  # cut parallel to the x axis: top / bottom


@dataclass(frozen=True, order=True)
class Rect:
    """Sub-grid with top-left (x, y) and size (w, h), in grid cells."""

    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def cells(self) -> set[tuple[int, int]]:
        return {
            (cx, cy)
            for cx in range(self.x, self.x + self.w)
            for cy in range(self.y, self.y + self.h)
        }

    def overlap_area(self, other: "Rect") -> int:
        ox = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        oy = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        return max(ox, 0) * max(oy, 0)

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass
class AogNode:
    id: int
    kind: Kind
    rect: Rect
    axis: Axis | None = None     # AND nodes only
    offset: int | None = None    # AND nodes only: cut position in cells
    children: list[int] = field(default_factory=list)
    parents: list[int] = field(default_factory=list)

    @property
    def is_or_like(self) -> bool:
        return self.kind in (Kind.OR, Kind.SUPER_OR)


@dataclass
class Aog:
    """Immutable after construction; safe to share across readers."""

    grid_w: int
    grid_h: int
    l_min: int
    super_or_threshold: float
    nodes: list[AogNode]
    root_id: int
    dfs_order: list[int]  # children before parents (post-order)
    bfs_order: list[int]  # parents before children

    def node(self, node_id: int) -> AogNode:
        if not 0 <= node_id < len(self.nodes):
            raise LookupError_(f"unknown node id {node_id}")
        return self.nodes[node_id]

    @property
    def root(self) -> AogNode:
        return self.nodes[self.root_id]

    def ids_of_kind(self, kind: Kind) -> list[int]:
        return [n.id for n in self.nodes if n.kind == kind]

    @property
    def terminal_ids(self) -> list[int]:
        return self.ids_of_kind(Kind.TERMINAL)

    def counts_by_kind(self) -> dict[str, int]:
        out = {k.value: 0 for k in Kind}
        for n in self.nodes:
            out[n.kind.value] += 1
        return out

    @property
    def full_grid_rect(self) -> Rect:
        return Rect(0, 0, self.grid_w, self.grid_h)

    def full_grid_symbol_id(self) -> int:
        """The OR node of the whole grid, or its Terminal when no cut is valid."""
        for n in self.nodes:
            if n.kind == Kind.OR and n.rect == self.full_grid_rect:
                return n.id
        for n in self.nodes:
            if n.kind == Kind.TERMINAL and n.rect == self.full_grid_rect:
                return n.id
        raise LookupError_("no full-grid symbol present")


@dataclass
class ParseTree:
    """One child retained per OR node, both per AND, down to Terminals."""

    class_index: int | None
    chosen_or_children: dict[int, int]
    node_ids: list[int]
    terminal_ids: list[int]

    @staticmethod
    def from_choices(aog: Aog, chosen: dict[int, int],
                     class_index: int | None = None) -> "ParseTree":
        node_ids: list[int] = []
        terminal_ids: list[int] = []
        used: dict[int, int] = {}
        stack = [aog.root_id]
        while stack:
            nid = stack.pop()
            node = aog.node(nid)
            node_ids.append(nid)
            if node.kind == Kind.TERMINAL:
                terminal_ids.append(nid)
            elif node.kind == Kind.AND:
                stack.extend(reversed(node.children))
            else:
                if nid not in chosen:
                    raise LookupError_(f"no choice recorded for OR node {nid}")
                child = chosen[nid]
                if child not in node.children:
                    raise LookupError_(
                        f"chosen child {child} is not a child of node {nid}")
                used[nid] = child
                stack.append(child)
        return ParseTree(class_index, used, node_ids, terminal_ids)

    def to_json_obj(self, aog: Aog) -> dict:
        return {
            "class": self.class_index,
            "chosen": {str(k): v for k, v in self.chosen_or_children.items()},
            "terminals": [aog.node(t).rect.as_list() for t in self.terminal_ids],
        }

    @staticmethod
    def from_json_obj(aog: Aog, obj: dict) -> "ParseTree":
        chosen = {int(k): int(v) for k, v in obj["chosen"].items()}
        return ParseTree.from_choices(aog, chosen, obj.get("class"))


@dataclass(frozen=True)
class Configuration:
    """Rect set obtained by collapsing a parse tree's Terminals.

    The rects tile the window rect exactly (the top-most non-super-OR
    node of the tree; equal to the full grid unless the super-OR picked
    a sub-window).
    """

    rects: frozenset[Rect]
    grid_w: int
    grid_h: int

    @property
    def covered_area(self) -> int:
        return sum(r.area for r in self.rects)

    def window(self) -> Rect:
        xs = [r.x for r in self.rects]
        ys = [r.y for r in self.rects]
        x2 = [r.x + r.w for r in self.rects]
        y2 = [r.y + r.h for r in self.rects]
        return Rect(min(xs), min(ys), max(x2) - min(xs), max(y2) - min(ys))

    def tiles_exactly(self) -> bool:
        cells: set[tuple[int, int]] = set()
        for r in self.rects:
            rc = r.cells()
            if cells & rc:
                return False
            cells |= rc
        return cells == self.window().cells()


def _valid_cuts(rect: Rect, l_min: int) -> list[tuple[Axis, int]]:
    cuts = [(Axis.VERTICAL, l) for l in range(l_min, rect.w - l_min + 1)]
    cuts += [(Axis.HORIZONTAL, l) for l in range(l_min, rect.h - l_min + 1)]
    return cuts


def _split(rect: Rect, axis: Axis, l: int) -> tuple[Rect, Rect]:
    if axis == Axis.VERTICAL:
        return (Rect(rect.x, rect.y, l, rect.h),
                Rect(rect.x + l, rect.y, rect.w - l, rect.h))
    return (Rect(rect.x, rect.y, rect.w, l),
            Rect(rect.x, rect.y + l, rect.w, rect.h - l))


def build_aog(grid_w: int, grid_h: int, l_min: int,
              super_or_threshold: float = 0.5,
              with_super_or: bool = True) -> Aog:
    """Build the AND-OR graph for an h x w grid.

    Every reachable rect gets one Terminal; rects admitting at least one
    cut also get an OR node whose children are the Terminal followed by
    one AND per vertical cut (ascending offset) then one per horizontal
    cut (ascending offset).  Degenerate rects contribute their Terminal
    directly as the AND child.  Node ids are dense, assigned in
    memoized-creation order, so two builds with equal parameters are
    identical.
    """
    if grid_w < 1 or grid_h < 1:
        raise ParameterError(f"grid dims must be >= 1, got {grid_w}x{grid_h}")
    if not 1 <= l_min <= min(grid_w, grid_h):
        raise ParameterError(
            f"l_min must be in [1, min(w,h)]={min(grid_w, grid_h)}, got {l_min}")
    if not 0.0 < super_or_threshold <= 1.0:
        raise ParameterError(
            f"super_or_threshold must be in (0, 1], got {super_or_threshold}")

    nodes: list[AogNode] = []
    interned: dict[tuple, int] = {}

    def intern(kind: Kind, rect: Rect, axis: Axis | None = None,
               offset: int | None = None) -> int:
        key = (kind, rect, axis, offset)
        if key not in interned:
            nodes.append(AogNode(len(nodes), kind, rect, axis, offset))
            interned[key] = nodes[-1].id
        return interned[key]

    symbol_of: dict[Rect, int] = {}

    def expand(rect: Rect) -> int:
        if rect in symbol_of:
            return symbol_of[rect]
        term = intern(Kind.TERMINAL, rect)
        cuts = _valid_cuts(rect, l_min)
        if not cuts:
            symbol_of[rect] = term
            return term
        or_id = intern(Kind.OR, rect)
        symbol_of[rect] = or_id
        children = [term]
        for axis, l in cuts:
            and_id = intern(Kind.AND, rect, axis, l)
            left, right = _split(rect, axis, l)
            nodes[and_id].children = [expand(left), expand(right)]
            children.append(and_id)
        nodes[or_id].children = children
        return or_id

    start = expand(Rect(0, 0, grid_w, grid_h))
    root_id = start
    if with_super_or and nodes[start].kind == Kind.OR:
        grid_area = grid_w * grid_h
        big_ors = [n.id for n in nodes
                   if n.kind == Kind.OR
                   and (n.id == start or n.rect.area / grid_area > super_or_threshold)]
        root_id = intern(Kind.SUPER_OR, Rect(0, 0, grid_w, grid_h))
        nodes[root_id].children = sorted(big_ors)

    for n in nodes:
        for c in n.children:
            nodes[c].parents.append(n.id)

    dfs_order: list[int] = []
    seen: set[int] = set()

    def post(nid: int) -> None:
        if nid in seen:
            return
        seen.add(nid)
        for c in nodes[nid].children:
            post(c)
        dfs_order.append(nid)

    post(root_id)
    return Aog(grid_w, grid_h, l_min, super_or_threshold, nodes, root_id,
               dfs_order, list(reversed(dfs_order)))


def count_parse_trees(aog: Aog, node_id: int | None = None) -> int:
    """Number of distinct parse trees rooted at node_id (default: root).

    Exact arbitrary-precision DP over the DAG: Terminal -> 1, AND ->
    product of children, OR -> sum of children.
    """
    start = aog.root_id if node_id is None else aog.node(node_id).id
    memo: dict[int, int] = {}
    for nid in aog.dfs_order:  # children first
        node = aog.nodes[nid]
        if node.kind == Kind.TERMINAL:
            memo[nid] = 1
        elif node.kind == Kind.AND:
            memo[nid] = memo[node.children[0]] * memo[node.children[1]]
        else:
            memo[nid] = sum(memo[c] for c in node.children)
    if start not in memo:
        # node_id may be outside the root's reachable set only if ids are
        # stale; recompute locally.
        def rec(nid: int) -> int:
            if nid in memo:
                return memo[nid]
            node = aog.node(nid)
            if node.kind == Kind.TERMINAL:
                v = 1
            elif node.kind == Kind.AND:
                v = rec(node.children[0]) * rec(node.children[1])
            else:
                v = sum(rec(c) for c in node.children)
            memo[nid] = v
            return v
        rec(start)
    return memo[start]


def enumerate_parse_trees(aog: Aog, limit: int = 100_000) -> list[ParseTree]:
    """All parse trees from the root, in deterministic child-order.

    Raises CapacityError before doing any work if the count exceeds
    ``limit``.
    """
    total = count_parse_trees(aog)
    if total > limit:
        raise CapacityError(total, limit)

    # per node: list of (or-choice dict, terminal id tuple)
    memo: dict[int, list[tuple[dict[int, int], tuple[int, ...]]]] = {}
    for nid in aog.dfs_order:
        node = aog.nodes[nid]
        if node.kind == Kind.TERMINAL:
            memo[nid] = [({}, (nid,))]
        elif node.kind == Kind.AND:
            combined = []
            for (ca, ta), (cb, tb) in itertools.product(
                    memo[node.children[0]], memo[node.children[1]]):
                combined.append(({**ca, **cb}, ta + tb))
            memo[nid] = combined
        else:
            alts = []
            for child in node.children:
                for choices, terms in memo[child]:
                    alts.append(({nid: child, **choices}, terms))
            memo[nid] = alts

    trees = []
    for choices, terms in memo[aog.root_id]:
        node_ids = _tree_nodes(aog, choices)
        trees.append(ParseTree(None, choices, node_ids, list(terms)))
    return trees


def _tree_nodes(aog: Aog, choices: dict[int, int]) -> list[int]:
    out: list[int] = []
    stack = [aog.root_id]
    while stack:
        nid = stack.pop()
        out.append(nid)
        node = aog.nodes[nid]
        if node.kind == Kind.AND:
            stack.extend(reversed(node.children))
        elif node.is_or_like:
            stack.append(choices[nid])
    return out


def collapse(aog: Aog, tree: ParseTree) -> Configuration:
    return Configuration(
        frozenset(aog.node(t).rect for t in tree.terminal_ids),
        aog.grid_w, aog.grid_h)


def enumerate_configurations(aog: Aog, limit: int = 100_000) -> set[Configuration]:
    """Distinct configurations reachable from the root."""
    return {collapse(aog, t) for t in enumerate_parse_trees(aog, limit)}


def sample_parse_tree(aog: Aog, rng) -> ParseTree:
    """Uniform independent choice at every OR node encountered."""
    chosen: dict[int, int] = {}
    stack = [aog.root_id]
    while stack:
        node = aog.nodes[stack.pop()]
        if node.kind == Kind.AND:
            stack.extend(node.children)
        elif node.is_or_like:
            child = node.children[int(rng.integers(len(node.children)))]
            chosen[node.id] = child
            stack.append(child)
    return ParseTree.from_choices(aog, chosen)
