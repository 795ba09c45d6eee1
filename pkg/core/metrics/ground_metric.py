"""
Ground Metric Construction
Builds class-distance matrices from label hierarchies, topic partitions and
precomputed matrix files, validating every result as a GroundMetric.

Metric spec file (JSON), one of:
    {"type": "tree", "layer_weights": [0.5, 0.2, 0.05],
     "nodes": [{"id": "r", "parent": null, "label": null}, ...]}
    {"type": "block", "within": 0.2, "between": 1.0, "cells": [["a", "b"], ["c"]]}
    {"type": "matrix", "labels": ["a", "b"], "dist": [[0, 1], [1, 0]]}
    {"type": "matrix", "file": "distances.csv"}
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union
import csv
import json

import numpy as np

from core.errors import ValidationError
from core.transport.ot import GroundMetric

VIRTUAL_ROOT_ID = "__root__"


@dataclass(frozen=True)
class TreeNode:
    """Node of a label hierarchy; internal nodes may carry class labels too"""
    id: str
    parent: Optional[str] = None
    label: Optional[str] = None


@dataclass
class LabelTree:
    """
    Label hierarchy with per-depth edge weights.

    The weight of an edge is layer_weights[depth(child) - 1], so children of
    the root use layer_weights[0]. A virtual root is inserted when the input
    has several roots.
    """
    nodes: List[TreeNode]
    layer_weights: Sequence[float]
    depth: Dict[str, int] = field(init=False, repr=False)
    parent_of: Dict[str, Optional[str]] = field(init=False, repr=False)
    node_of_label: Dict[str, str] = field(init=False, repr=False)

    def __post_init__(self):
        nodes = [n if isinstance(n, TreeNode) else TreeNode(**n) for n in self.nodes]
        weights = [float(w) for w in self.layer_weights]

        if not weights:
            raise ValidationError("at least one layer weight is required", field="layer_weights")
        if any(w <= 0 for w in weights):
            raise ValidationError("layer weights must be strictly positive", field="layer_weights")
        if any(later > earlier for earlier, later in zip(weights, weights[1:])):
            raise ValidationError("layer weights must be non-increasing with depth",
                                  field="layer_weights")

        ids = [str(n.id) for n in nodes]
        if len(set(ids)) != len(ids):
            raise ValidationError("node ids must be unique", field="nodes")
        parent_of = {str(n.id): (None if n.parent is None else str(n.parent)) for n in nodes}

        for node_id, parent in parent_of.items():
            if parent is not None and parent not in parent_of:
                raise ValidationError(f"node '{node_id}' has unknown parent '{parent}' (disconnected tree)",
                                      field="nodes")

        roots = [node_id for node_id, parent in parent_of.items() if parent is None]
        if not roots:
            raise ValidationError("tree has no root (cycle through every node)", field="nodes")
        if len(roots) > 1:
            if VIRTUAL_ROOT_ID in parent_of:
                raise ValidationError(f"node id '{VIRTUAL_ROOT_ID}' is reserved", field="nodes")
            for root in roots:
                parent_of[root] = VIRTUAL_ROOT_ID
            parent_of[VIRTUAL_ROOT_ID] = None
            nodes = [TreeNode(VIRTUAL_ROOT_ID)] + nodes

        depth: Dict[str, int] = {}
        for node_id in parent_of:
            chain = []
            current = node_id
            while current is not None and current not in depth:
                if current in chain:
                    raise ValidationError(f"cycle through node '{current}'", field="nodes")
                chain.append(current)
                current = parent_of[current]
            base = -1 if current is None else depth[current]
            for offset, member in enumerate(reversed(chain), start=1):
                depth[member] = base + offset

        too_deep = [n for n, dpt in depth.items() if dpt > len(weights)]
        if too_deep:
            raise ValidationError(
                f"node '{too_deep[0]}' at depth {depth[too_deep[0]]} has no layer weight "
                f"({len(weights)} given)", field="layer_weights")

        node_of_label: Dict[str, str] = {}
        for n in nodes:
            if n.label is None:
                continue
            label = str(n.label)
            if label in node_of_label:
                raise ValidationError(f"class '{label}' maps to more than one node", field="nodes")
            node_of_label[label] = str(n.id)

        self.nodes = nodes
        self.layer_weights = tuple(weights)
        self.depth = depth
        self.parent_of = parent_of
        self.node_of_label = node_of_label

    @property
    def labels(self) -> List[str]:
        """Class labels in node order"""
        return [str(n.label) for n in self.nodes if n.label is not None]

    def path_to_root(self, node_id: str) -> List[str]:
        path = [node_id]
        while self.parent_of[path[-1]] is not None:
            path.append(self.parent_of[path[-1]])
        return path

    def edge_weight(self, child_id: str) -> float:
        return self.layer_weights[self.depth[child_id] - 1]

    def path_length(self, a: str, b: str) -> float:
        """Sum of edge weights on the unique path between two nodes"""
        path_a = self.path_to_root(a)
        ancestors_b = set(self.path_to_root(b))
        lca = next(n for n in path_a if n in ancestors_b)
        total = 0.0
        for start in (a, b):
            node = start
            while node != lca:
                total += self.edge_weight(node)
                node = self.parent_of[node]
        return total


@dataclass
class BlockPartition:
    """Disjoint label cells with one distance inside a cell and another across cells"""
    cells: List[List[str]]
    within: float
    between: float

    def __post_init__(self):
        self.cells = [[str(label) for label in cell] for cell in self.cells]
        if not self.cells or any(not cell for cell in self.cells):
            raise ValidationError("cells must be non-empty", field="cells")
        seen = set()
        for cell in self.cells:
            for label in cell:
                if label in seen:
                    raise ValidationError(f"class '{label}' appears in more than one cell", field="cells")
                seen.add(label)
        if not 0 < self.within < self.between:
            raise ValidationError(
                f"need 0 < within < between, got within={self.within}, between={self.between}",
                field="within")

    @property
    def labels(self) -> List[str]:
        return [label for cell in self.cells for label in cell]


def _ordered_labels(available: Sequence[str], labels: Optional[Sequence[str]]) -> List[str]:
    if labels is None:
        return list(available)
    labels = [str(label) for label in labels]
    missing = [label for label in labels if label not in set(available)]
    if missing:
        raise ValidationError(f"class '{missing[0]}' has no node in the metric definition", field="labels")
    return labels


def tree_metric(tree: LabelTree, labels: Optional[Sequence[str]] = None) -> GroundMetric:
    """
    Shortest-path metric over a weighted label tree.

    Args:
        tree: validated LabelTree
        labels: class order of the output (default: node order)
    """
    labels = _ordered_labels(tree.labels, labels)
    n = len(labels)
    dist = np.zeros((n, n))
    node_ids = [tree.node_of_label[label] for label in labels]
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = tree.path_length(node_ids[i], node_ids[j])
    return GroundMetric(dist, tuple(labels))


def block_metric(part: BlockPartition, labels: Optional[Sequence[str]] = None) -> GroundMetric:
    """
    0 on the diagonal, `within` inside a cell and `between` across cells.

    Any 0 < within < between satisfies the triangle inequality; the result
    still goes through the GroundMetric checks.
    """
    labels = _ordered_labels(part.labels, labels)
    cell_of = {label: idx for idx, cell in enumerate(part.cells) for label in cell}
    cells = np.array([cell_of[label] for label in labels])
    dist = np.where(cells[:, None] == cells[None, :], part.within, part.between).astype(float)
    np.fill_diagonal(dist, 0.0)
    return GroundMetric(dist, tuple(labels))


def load_metric_matrix(path: Union[str, Path], delimiter: Optional[str] = None) -> GroundMetric:
    """
    Read a labeled square matrix (CSV/TSV).

    The header row lists the class labels (optionally after an empty corner
    cell); each data row may start with its own label.
    """
    path = Path(path)
    if delimiter is None:
        delimiter = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","

    with open(path, newline='') as f:
        rows = [row for row in csv.reader(f, delimiter=delimiter) if any(cell.strip() for cell in row)]
    if not rows:
        raise ValidationError(f"{path} is empty", field="metric")

    header = [cell.strip() for cell in rows[0]]
    if header and header[0] == "":
        header = header[1:]
    n = len(header)

    matrix = []
    for line_no, row in enumerate(rows[1:], start=2):
        cells = [cell.strip() for cell in row]
        if len(cells) == n + 1:
            expected = header[len(matrix)] if len(matrix) < n else None
            if cells[0] != expected:
                raise ValidationError(f"{path}:{line_no}: row label '{cells[0]}' out of order", field="metric")
            cells = cells[1:]
        if len(cells) != n:
            raise ValidationError(f"{path}:{line_no}: expected {n} values, got {len(cells)}", field="metric")
        try:
            matrix.append([float(cell) for cell in cells])
        except ValueError:
            raise ValidationError(f"{path}:{line_no}: non-numeric distance", field="metric") from None

    if len(matrix) != n:
        raise ValidationError(f"{path}: {n} labels but {len(matrix)} rows", field="metric")
    return GroundMetric.from_matrix(header, matrix)


def metric_from_spec(spec: Dict[str, Any], base_dir: Optional[Path] = None,
                     labels: Optional[Sequence[str]] = None) -> GroundMetric:
    """Build a GroundMetric from a parsed metric spec dictionary"""
    kind = spec.get("type")
    if kind == "tree":
        tree = LabelTree(nodes=spec.get("nodes", []), layer_weights=spec.get("layer_weights", []))
        return tree_metric(tree, labels)
    if kind == "block":
        part = BlockPartition(cells=spec.get("cells", []), within=float(spec.get("within", 0)),
                              between=float(spec.get("between", 0)))
        return block_metric(part, labels)
    if kind == "matrix":
        if "file" in spec:
            file_path = Path(spec["file"])
            if base_dir is not None and not file_path.is_absolute():
                file_path = base_dir / file_path
            metric = load_metric_matrix(file_path)
        else:
            metric = GroundMetric.from_matrix(spec.get("labels", []), spec.get("dist", []))
        if labels is not None:
            idx = [metric.index_of(label) for label in labels]
            metric = GroundMetric(metric.dist[np.ix_(idx, idx)], tuple(labels))
        return metric
    raise ValidationError(f"unknown metric type '{kind}' (expected tree, block or matrix)", field="type")


def load_metric(path: Union[str, Path], labels: Optional[Sequence[str]] = None) -> GroundMetric:
    """Load a metric spec (.json) or a labeled matrix file (.csv/.tsv)"""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"metric file {path} does not exist", field="metric")
    if path.suffix.lower() == ".json":
        with open(path, 'r') as f:
            try:
                spec = json.load(f)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}: invalid JSON ({e})", field="metric") from None
        return metric_from_spec(spec, base_dir=path.parent, labels=labels)
    metric = load_metric_matrix(path)
    if labels is not None:
        return metric_from_spec(metric.to_dict(), labels=labels)
    return metric
