"""JSON serialization of the AND-OR graph.

Schema::

    {schema_version, grid_w, grid_h, l_min, super_or_threshold, root_id,
     nodes: [{id, kind, rect: [x,y,w,h], axis?, offset?, children: [...]}],
     dfs_order, bfs_order}
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import FormatError, VersionError
from .grammar import Aog, AogNode, Axis, Kind, Rect

SCHEMA_VERSION = 1


def aog_to_obj(aog: Aog) -> dict:
    nodes = []
    for n in aog.nodes:
        item = {
            "id": n.id,
            "kind": n.kind.value,
            "rect": n.rect.as_list(),
            "children": list(n.children),
        }
        if n.kind == Kind.AND:
            item["axis"] = n.axis.value
            item["offset"] = n.offset
        nodes.append(item)
    return {
        "schema_version": SCHEMA_VERSION,
        "grid_w": aog.grid_w,
        "grid_h": aog.grid_h,
        "l_min": aog.l_min,
        "super_or_threshold": aog.super_or_threshold,
        "root_id": aog.root_id,
        "nodes": nodes,
        "dfs_order": list(aog.dfs_order),
        "bfs_order": list(aog.bfs_order),
    }


def aog_from_obj(obj: dict) -> Aog:
    try:
        version = obj["schema_version"]
        if version != SCHEMA_VERSION:
            raise VersionError(
                f"AOG schema version {version} not supported "
                f"(expected {SCHEMA_VERSION})")
        nodes = []
        for item in obj["nodes"]:
            axis = Axis(item["axis"]) if "axis" in item else None
            nodes.append(AogNode(
                id=item["id"],
                kind=Kind(item["kind"]),
                rect=Rect(*item["rect"]),
                axis=axis,
                offset=item.get("offset"),
                children=list(item["children"]),
            ))
        if [n.id for n in nodes] != list(range(len(nodes))):
            raise FormatError("node ids are not dense in creation order")
        for n in nodes:
            for c in n.children:
                nodes[c].parents.append(n.id)
        return Aog(
            grid_w=obj["grid_w"],
            grid_h=obj["grid_h"],
            l_min=obj["l_min"],
            super_or_threshold=obj["super_or_threshold"],
            nodes=nodes,
            root_id=obj["root_id"],
            dfs_order=list(obj["dfs_order"]),
            bfs_order=list(obj["bfs_order"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed AOG object: {exc!r}") from exc


def save_aog(aog: Aog, path) -> None:
    Path(path).write_text(json.dumps(aog_to_obj(aog), indent=1) + "\n")


def load_aog(path) -> Aog:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(
            f"{path}: invalid JSON at line {exc.lineno} col {exc.colno}: "
            f"{exc.msg}") from exc
    return aog_from_obj(obj)
