import json

import pytest

from aogparse import (DataError, FormatError, VersionError, build_aog,
                      enumerate_parse_trees, load_aog, save_aog)
from aogparse.dot import to_dot, tree_edges, validate_dot
from aogparse.grammar import ParseTree


def test_dot_1x1():
    text = to_dot(build_aog(1, 1, 1))
    nodes, edges = validate_dot(text)
    assert (nodes, edges) == (1, 0)


def test_dot_2x1_counts():
    aog = build_aog(2, 1, 1)
    nodes, edges = validate_dot(to_dot(aog))
    assert nodes == 6
    # SuperOr->Or, Or->{T, And}, And->{T, T}
    assert edges == 5


def test_dot_highlight_edges():
    aog = build_aog(2, 1, 1)
    two_part = [t for t in enumerate_parse_trees(aog)
                if len(t.terminal_ids) == 2][0]
    assert len(tree_edges(aog, two_part)) == 4
    text = to_dot(aog, two_part)
    assert text.count("penwidth=2.0") == 4
    validate_dot(text)


def test_dot_foreign_tree_rejected():
    aog = build_aog(2, 1, 1)
    other = build_aog(2, 2, 1)
    tree = enumerate_parse_trees(other)[3]
    with pytest.raises(DataError):
        to_dot(aog, tree)


def test_parse_tree_json_round_trip():
    aog = build_aog(2, 2, 1)
    for tree in enumerate_parse_trees(aog):
        obj = tree.to_json_obj(aog)
        back = ParseTree.from_json_obj(aog, obj)
        assert back.chosen_or_children == tree.chosen_or_children
        assert sorted(back.terminal_ids) == sorted(tree.terminal_ids)


def test_aog_round_trip(tmp_path):
    for dims in [(1, 1), (3, 3)]:
        aog = build_aog(*dims, 1, 0.5)
        path = tmp_path / "aog.json"
        save_aog(aog, path)
        loaded = load_aog(path)
        assert loaded.grid_w == aog.grid_w and loaded.grid_h == aog.grid_h
        assert loaded.l_min == aog.l_min
        assert loaded.super_or_threshold == aog.super_or_threshold
        assert loaded.root_id == aog.root_id
        assert loaded.dfs_order == aog.dfs_order
        assert loaded.bfs_order == aog.bfs_order
        assert loaded.counts_by_kind() == aog.counts_by_kind()
        for a, b in zip(loaded.nodes, aog.nodes):
            assert (a.id, a.kind, a.rect, a.axis, a.offset, a.children,
                    a.parents) == (b.id, b.kind, b.rect, b.axis, b.offset,
                                   b.children, b.parents)


def test_truncated_file_is_a_parse_error(tmp_path):
    aog = build_aog(2, 2, 1)
    path = tmp_path / "aog.json"
    save_aog(aog, path)
    path.write_text(path.read_text()[:50])
    with pytest.raises(FormatError):
        load_aog(path)


def test_version_mismatch(tmp_path):
    aog = build_aog(2, 2, 1)
    path = tmp_path / "aog.json"
    save_aog(aog, path)
    obj = json.loads(path.read_text())
    obj["schema_version"] = 99
    path.write_text(json.dumps(obj))
    with pytest.raises(VersionError):
        load_aog(path)
