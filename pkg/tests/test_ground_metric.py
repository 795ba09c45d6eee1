"""
Tests for tree, block and file-based ground metrics
"""

import json

import numpy as np
import pytest

from core.errors import MetricValidationError, ValidationError
from core.metrics.ground_metric import (
    BlockPartition,
    LabelTree,
    TreeNode,
    block_metric,
    load_metric,
    metric_from_spec,
    tree_metric,
)
from core.synthetic import hierarchy_tree


def test_tree_zero_diagonal_and_sibling_distance():
    d = tree_metric(hierarchy_tree())
    assert np.all(np.diag(d.dist) == 0)
    assert d.distance("c0", "c1") == pytest.approx(0.1)


def test_tree_distance_across_root_children():
    d = tree_metric(hierarchy_tree())
    assert d.distance("c0", "c3") == pytest.approx(1.5)
    assert d.distance("c2", "c8") == pytest.approx(1.5)


def test_tree_internal_node_labels():
    tree = LabelTree(
        nodes=[TreeNode("r"), TreeNode("animal", "r", "animal"), TreeNode("dog", "animal", "dog"),
               TreeNode("cat", "animal", "cat")],
        layer_weights=[0.5, 0.2],
    )
    d = tree_metric(tree)
    assert d.distance("animal", "dog") == pytest.approx(0.2)
    assert d.distance("dog", "cat") == pytest.approx(0.4)


def test_tree_label_order_is_respected_and_consistent():
    tree = hierarchy_tree()
    forward = tree_metric(tree)
    order = list(reversed(forward.labels))
    backward = tree_metric(tree, order)
    perm = [forward.index_of(label) for label in order]
    assert backward.labels == tuple(order)
    assert np.allclose(backward.dist, forward.dist[np.ix_(perm, perm)])


def test_tree_several_roots_get_a_virtual_root():
    tree = LabelTree(nodes=[TreeNode("a", None, "a"), TreeNode("b", None, "b")], layer_weights=[0.5])
    assert tree_metric(tree).distance("a", "b") == pytest.approx(1.0)


@pytest.mark.parametrize("weights, message", [
    ([0.2, 0.5, 0.05], "non-increasing"),
    ([0.5, 0.0, 0.05], "strictly positive"),
    ([], "at least one"),
])
def test_tree_layer_weight_rules(weights, message):
    with pytest.raises(ValidationError, match=message):
        LabelTree(nodes=[TreeNode("r")], layer_weights=weights)


def test_tree_disconnected_and_cyclic():
    with pytest.raises(ValidationError, match="unknown parent"):
        LabelTree(nodes=[TreeNode("r"), TreeNode("a", "missing", "a")], layer_weights=[0.5])
    with pytest.raises(ValidationError, match="cycle"):
        LabelTree(nodes=[TreeNode("r"), TreeNode("a", "b", "a"), TreeNode("b", "a", "b")], layer_weights=[0.5])


def test_tree_class_without_node():
    with pytest.raises(ValidationError, match="no node"):
        tree_metric(hierarchy_tree(), ["c0", "dog"])


def test_tree_too_deep_for_weights():
    with pytest.raises(ValidationError, match="no layer weight"):
        LabelTree(nodes=[TreeNode("r"), TreeNode("a", "r"), TreeNode("b", "a", "b")], layer_weights=[0.5])


def test_block_metric_values():
    d = block_metric(BlockPartition(cells=[["a", "b"], ["c"]], within=0.2, between=1.0))
    assert d.distance("a", "a") == 0.0
    assert d.distance("a", "b") == pytest.approx(0.2)
    assert d.distance("a", "c") == pytest.approx(1.0)


def test_block_partition_rules():
    with pytest.raises(ValidationError, match="more than one cell"):
        BlockPartition(cells=[["a", "b"], ["b"]], within=0.2, between=1.0)
    with pytest.raises(ValidationError, match="within < between"):
        BlockPartition(cells=[["a"], ["b"]], within=1.0, between=0.2)


def test_load_tree_spec_from_json(tmp_path):
    spec = {
        "type": "tree",
        "layer_weights": [0.5, 0.2, 0.05],
        "nodes": [{"id": node.id, "parent": node.parent, "label": node.label} for node in hierarchy_tree().nodes],
    }
    path = tmp_path / "tree.json"
    path.write_text(json.dumps(spec))
    d = load_metric(path)
    assert d.n_classes == 9
    assert d.distance("c4", "c5") == pytest.approx(0.1)


def test_load_block_spec_reorders_labels(tmp_path):
    path = tmp_path / "block.json"
    path.write_text(json.dumps({"type": "block", "within": 0.2, "between": 1.0, "cells": [["x", "y"], ["z"]]}))
    d = load_metric(path, labels=["z", "x", "y"])
    assert d.labels == ("z", "x", "y")
    assert d.dist[0, 1] == pytest.approx(1.0)
    assert d.dist[1, 2] == pytest.approx(0.2)


def test_load_matrix_file_with_row_labels(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(",a,b,c\na,0,1,1\nb,1,0,0.5\nc,1,0.5,0\n")
    d = load_metric(path)
    assert d.labels == ("a", "b", "c")
    assert d.distance("b", "c") == pytest.approx(0.5)


def test_load_matrix_spec_pointing_at_file(tmp_path):
    (tmp_path / "d.tsv").write_text("a\tb\n0\t1\n1\t0\n")
    (tmp_path / "m.json").write_text(json.dumps({"type": "matrix", "file": "d.tsv"}))
    assert load_metric(tmp_path / "m.json").distance("a", "b") == 1.0


def test_load_matrix_file_errors(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("a,b\n0,1\n1\n")
    with pytest.raises(ValidationError, match="expected 2 values"):
        load_metric(ragged)
    bad = tmp_path / "triangle.csv"
    bad.write_text("a,b,c\n0,1,3\n1,0,1\n3,1,0\n")
    with pytest.raises(MetricValidationError, match="triangle"):
        load_metric(bad)
    with pytest.raises(ValidationError, match="does not exist"):
        load_metric(tmp_path / "missing.json")


def test_unknown_spec_type():
    with pytest.raises(ValidationError, match="unknown metric type"):
        metric_from_spec({"type": "graph"})
