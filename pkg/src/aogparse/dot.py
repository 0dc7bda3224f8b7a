"""Graphviz DOT rendering of an AND-OR graph, with optional parse-tree
highlighting, plus a minimal DOT syntax validator used by smoke tests."""

from __future__ import annotations

import re

from .errors import DataError
from .grammar import Aog, Kind, ParseTree

_SHAPES = {
    Kind.TERMINAL: "plaintext",
    Kind.AND: "box",
    Kind.OR: "ellipse",
    Kind.SUPER_OR: "ellipse",
}

_LABELS = {
    Kind.TERMINAL: "t",
    Kind.AND: "A",
    Kind.OR: "O",
    Kind.SUPER_OR: "SuperO",
}


def tree_edges(aog: Aog, tree: ParseTree) -> set[tuple[int, int]]:
    """Parent->child edges retained by a parse tree."""
    edges: set[tuple[int, int]] = set()
    stack = [aog.root_id]
    while stack:
        node = aog.node(stack.pop())
        if node.kind == Kind.AND:
            for c in node.children:
                edges.add((node.id, c))
                stack.append(c)
        elif node.is_or_like:
            if node.id not in tree.chosen_or_children:
                raise DataError(
                    f"parse tree has no choice for OR node {node.id}; "
                    "was it built from a different graph?")
            c = tree.chosen_or_children[node.id]
            if c not in node.children:
                raise DataError(
                    f"parse-tree choice {c} is not a child of node {node.id}")
            edges.add((node.id, c))
            stack.append(c)
    return edges


def to_dot(aog: Aog, highlight: ParseTree | None = None) -> str:
    hi = tree_edges(aog, highlight) if highlight is not None else set()
    lines = ["digraph aog {", "  rankdir=TB;"]
    for node in aog.nodes:
        r = node.rect
        label = f"{_LABELS[node.kind]}({r.x},{r.y},{r.w},{r.h})"
        if node.kind == Kind.AND:
            ax = "V" if node.axis.value == "vertical" else "H"
            label += f" {ax}@{node.offset}"
        attrs = f'shape={_SHAPES[node.kind]}, label="{label}"'
        if highlight is not None and node.id in highlight.node_ids:
            attrs += ", color=red"
        lines.append(f"  n{node.id} [{attrs}];")
    for node in aog.nodes:
        for c in node.children:
            extra = " [color=red, penwidth=2.0]" if (node.id, c) in hi else ""
            lines.append(f"  n{node.id} -> n{c}{extra};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_NODE_RE = re.compile(r"^\s*\w+\s*\[[^\]]*\]\s*;\s*$")
_EDGE_RE = re.compile(r"^\s*\w+\s*->\s*\w+\s*(\[[^\]]*\])?\s*;\s*$")
_ATTR_RE = re.compile(r"^\s*\w+\s*=\s*\w+\s*;\s*$")


def validate_dot(text: str) -> tuple[int, int]:
    """Check that text is a plain DOT digraph of the shape to_dot emits.

    Returns (node_count, edge_count); raises DataError otherwise.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not re.match(r"^digraph\s+\w+\s*\{$", lines[0].strip()):
        raise DataError("not a DOT digraph header")
    if lines[-1].strip() != "}":
        raise DataError("missing closing brace")
    nodes = edges = 0
    for ln in lines[1:-1]:
        if _EDGE_RE.match(ln):
            edges += 1
        elif _NODE_RE.match(ln):
            nodes += 1
        elif not _ATTR_RE.match(ln):
            raise DataError(f"unrecognized DOT statement: {ln.strip()!r}")
    return nodes, edges
