"""Serialization: CSV ingestion with one-hot encoding, JSON persistence for
trees / mixtures / blackboxes, and Graphviz DOT export.

JSON round-trips are bit-exact for doubles because Python's json module
emits shortest round-tripping decimal representations.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .blackbox import BoxBlackbox, RandomForest, TabularPolicy
from .core import (LE, AxisConstraint, BoxConstraint, Dataset, DecisionTree,
                   Internal, Leaf)
from .errors import InputError, UnknownCategoryError
from .gmm import GaussianMixture

FORMAT_VERSION = 1

NUMERIC = "numeric"
CATEGORICAL = "categorical"
LABEL = "label"


# ---------------------------------------------------------------------------
# CSV


@dataclass
class TableSchema:
    """Column roles for a CSV file, plus category maps filled at load time.

    columns maps each header name to one of numeric / categorical / label,
    in file order. Categorical columns are one-hot encoded into one binary
    feature per category, ordered by first appearance.
    """

    columns: list[tuple[str, str]]
    categories: dict = field(default_factory=dict)
    label_classes: Optional[list] = None

    def __post_init__(self):
        kinds = {k for _, k in self.columns}
        if not kinds <= {NUMERIC, CATEGORICAL, LABEL}:
            raise InputError(f"unknown column kind in {kinds}")
        if sum(1 for _, k in self.columns if k == LABEL) > 1:
            raise InputError("at most one label column allowed")

    @classmethod
    def from_json(cls, doc) -> "TableSchema":
        if isinstance(doc, (str, os.PathLike)):
            with open(doc, encoding="utf-8") as fh:
                doc = json.load(fh)
        return cls([(c["name"], c["kind"]) for c in doc["columns"]])

    @classmethod
    def all_numeric_with_label(cls, header: Sequence[str]) -> "TableSchema":
        cols = [(name, NUMERIC) for name in header[:-1]] + [(header[-1], LABEL)]
        return cls(cols)

    def feature_names(self) -> list[str]:
        names = []
        for name, kind in self.columns:
            if kind == NUMERIC:
                names.append(name)
            elif kind == CATEGORICAL:
                names.extend(f"{name}={c}" for c in self.categories.get(name, []))
        return names


def _parse_number(text: str, row_idx: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"row {row_idx}: non-numeric value {text!r} in column {col!r}")


def load_csv(path, schema: Optional[TableSchema] = None) -> tuple[Dataset, TableSchema]:
    """Read a headered CSV into a Dataset, one-hot encoding categoricals.

    Without a schema, every column is numeric and the last is the label.
    The returned schema carries the category orderings needed to encode
    further rows consistently.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, header required")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    if schema is None:
        schema = TableSchema.all_numeric_with_label(header)
    names = [name for name, _ in schema.columns]
    if names != list(header):
        raise InputError(f"{path}: header {header} does not match schema columns {names}")

    # First pass: collect category orderings by first appearance.
    schema.categories = {name: [] for name, kind in schema.columns if kind == CATEGORICAL}
    label_col = next((i for i, (_, k) in enumerate(schema.columns) if k == LABEL), None)
    raw_labels: list = []
    for r_idx, row in enumerate(rows, start=1):
        if len(row) != len(schema.columns):
            raise InputError(f"{path}: row {r_idx} has {len(row)} fields, expected {len(schema.columns)}")
        for (name, kind), value in zip(schema.columns, row):
            if kind == CATEGORICAL and value not in schema.categories[name]:
                schema.categories[name].append(value)
        if label_col is not None:
            raw_labels.append(row[label_col])

    labels = None
    m = 0
    if label_col is not None:
        try:
            ints = [int(v) for v in raw_labels]
            if min(ints) < 0:
                raise ValueError
            schema.label_classes = [str(i) for i in range(max(ints) + 1)]
            labels = np.array(ints, dtype=np.int64)
        except ValueError:
            classes: list = []
            for v in raw_labels:
                if v not in classes:
                    classes.append(v)
            schema.label_classes = classes
            labels = np.array([classes.index(v) for v in raw_labels], dtype=np.int64)
        m = len(schema.label_classes)

    X = np.array([_encode_row(schema, row, r_idx)
                  for r_idx, row in enumerate(rows, start=1)])
    return Dataset(X, labels, tuple(schema.feature_names()), m), schema


def _encode_row(schema: TableSchema, row, row_idx: int) -> list:
    out: list = []
    for (name, kind), value in zip(schema.columns, row):
        if kind == NUMERIC:
            out.append(_parse_number(value, row_idx, name))
        elif kind == CATEGORICAL:
            cats = schema.categories[name]
            if value not in cats:
                raise UnknownCategoryError(
                    f"row {row_idx}: unseen category {value!r} in column {name!r}")
            out.extend(1.0 if value == c else 0.0 for c in cats)
    return out


def encode_features(schema: TableSchema, rows, has_labels: bool = False) -> np.ndarray:
    """Encode raw CSV rows with an already-fitted schema (predict time)."""
    X = []
    for r_idx, row in enumerate(rows, start=1):
        if len(row) != len(schema.columns):
            raise InputError(f"row {r_idx} has {len(row)} fields")
        X.append(_encode_row(schema, row, r_idx))
    return np.array(X)


def save_csv(path, dataset: Dataset, label_column: str = "label") -> None:
    """Write a numeric dataset (and labels, when present) as headered CSV."""
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(dataset.column_names)
    if dataset.labels is not None:
        header.append(label_column)
    writer.writerow(header)
    for i in range(dataset.n):
        row = [repr(float(v)) for v in dataset.features[i]]
        if dataset.labels is not None:
            row.append(int(dataset.labels[i]))
        writer.writerow(row)
    write_text_atomic(path, buf.getvalue())


# ---------------------------------------------------------------------------
# JSON persistence


def write_text_atomic(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def tree_to_doc(tree: DecisionTree) -> dict:
    nodes = []
    for node in tree.nodes:
        if isinstance(node, Internal):
            nodes.append({"type": "internal", "dim": node.constraint.dim,
                          "threshold": node.constraint.threshold,
                          "left": node.left, "right": node.right})
        else:
            nodes.append({"type": "leaf", "label": node.label,
                          "class_histogram": [float(v) for v in node.class_histogram],
                          "mass": node.mass, "cached_gain": node.cached_gain})
    doc = {"format_version": FORMAT_VERSION, "kind": "decision_tree",
           "d": tree.d, "m": tree.m, "root": tree.root, "nodes": nodes}
    if tree.budget is not None:
        doc["budget"] = tree.budget
    return doc


def tree_from_doc(doc: dict) -> DecisionTree:
    if doc.get("kind") != "decision_tree":
        raise InputError("not a decision tree document")
    nodes: list = []
    for nd in doc["nodes"]:
        if nd["type"] == "internal":
            nodes.append(Internal(AxisConstraint(nd["dim"], nd["threshold"], LE),
                                  nd["left"], nd["right"]))
        else:
            nodes.append(Leaf(nd["label"], np.array(nd["class_histogram"]),
                              mass=nd["mass"], cached_gain=nd["cached_gain"]))
    return DecisionTree(tuple(nodes), doc["root"], doc["d"], doc["m"],
                        budget=doc.get("budget"))


def gmm_to_doc(gmm: GaussianMixture) -> dict:
    return {"format_version": FORMAT_VERSION, "kind": "gaussian_mixture",
            "weights": [float(v) for v in gmm.weights],
            "means": [[float(v) for v in row] for row in gmm.means],
            "stddevs": [[float(v) for v in row] for row in gmm.stddevs],
            "x_max": gmm.x_max}


def gmm_from_doc(doc: dict) -> GaussianMixture:
    if doc.get("kind") != "gaussian_mixture":
        raise InputError("not a gaussian mixture document")
    return GaussianMixture(np.array(doc["weights"]), np.array(doc["means"]),
                           np.array(doc["stddevs"]), x_max=doc.get("x_max"))


def _bound_to_json(v: float):
    return None if not np.isfinite(v) else float(v)


def _bound_from_json(v, sign: float) -> float:
    return sign * np.inf if v is None else float(v)


def blackbox_to_doc(model) -> dict:
    if isinstance(model, RandomForest):
        return {"format_version": FORMAT_VERSION, "kind": "random_forest",
                "d": model.d, "m": model.m,
                "trees": [tree_to_doc(t) for t in model.trees]}
    if isinstance(model, TabularPolicy):
        return {"format_version": FORMAT_VERSION, "kind": "tabular_policy",
                "grid_sizes": list(model.grid_sizes),
                "edges": [[float(v) for v in e] for e in model.edges],
                "actions": [int(a) for a in model.actions]}
    if isinstance(model, BoxBlackbox):
        return {"format_version": FORMAT_VERSION, "kind": "box_blackbox",
                "d": model.d, "m": model.m, "default_label": model.default_label,
                "labels": list(model.labels),
                "boxes": [{"lower": [_bound_to_json(v) for v in b.lower],
                           "upper": [_bound_to_json(v) for v in b.upper]}
                          for b in model.boxes]}
    raise InputError(f"cannot serialize blackbox of type {type(model).__name__}")


def blackbox_from_doc(doc: dict):
    kind = doc.get("kind")
    if kind == "random_forest":
        return RandomForest(tuple(tree_from_doc(t) for t in doc["trees"]),
                            doc["d"], doc["m"])
    if kind == "tabular_policy":
        return TabularPolicy(tuple(np.array(e) for e in doc["edges"]),
                             np.array(doc["actions"], dtype=np.int64),
                             tuple(doc["grid_sizes"]), d=len(doc["grid_sizes"]))
    if kind == "box_blackbox":
        boxes = tuple(BoxConstraint([_bound_from_json(v, -1) for v in b["lower"]],
                                    [_bound_from_json(v, +1) for v in b["upper"]])
                      for b in doc["boxes"])
        return BoxBlackbox(boxes, tuple(doc["labels"]), doc["d"], doc["m"],
                           doc.get("default_label", 0))
    raise InputError(f"unknown blackbox kind {kind!r}")


def save_json(path, doc: dict) -> None:
    write_text_atomic(path, _dump(doc))


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_tree(path, tree: DecisionTree) -> None:
    save_json(path, tree_to_doc(tree))


def load_tree(path) -> DecisionTree:
    return tree_from_doc(load_json(path))


def save_gmm(path, gmm: GaussianMixture) -> None:
    save_json(path, gmm_to_doc(gmm))


def load_gmm(path) -> GaussianMixture:
    return gmm_from_doc(load_json(path))


# ---------------------------------------------------------------------------
# DOT


def export_dot(tree: DecisionTree, column_names: Optional[Sequence[str]] = None,
               class_names: Optional[Sequence[str]] = None) -> str:
    """Graphviz digraph: internal nodes as "name ≤ t", leaves as class names."""
    if column_names is None:
        column_names = [f"x{i}" for i in range(tree.d)]
    if len(column_names) != tree.d:
        raise InputError("column_names length does not match tree dimension")
    if class_names is None:
        class_names = [f"class_{i}" for i in range(tree.m)]
    lines = ["digraph tree {"]
    edges = []
    for idx, node in enumerate(tree.nodes):
        if isinstance(node, Internal):
            label = f"{column_names[node.constraint.dim]} ≤ {node.constraint.threshold:g}"
            lines.append(f'  n{idx} [shape=box, label="{label}"];')
            edges.append(f"  n{idx} -> n{node.left};")
            edges.append(f"  n{idx} -> n{node.right};")
        else:
            lines.append(f'  n{idx} [shape=ellipse, label="{class_names[node.label]}"];')
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"
