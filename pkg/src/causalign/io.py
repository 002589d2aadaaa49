"""On-disk formats: datasets (CSV), graphs (adjacency CSV or JSON edge
list), instance bundles, refinement traces, and prediction matrices.

Floats are written with repr (shortest round-trip form), so files are
byte-stable across reruns of the same seeded computation.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .errors import DataFormatError, StructuralInputError
from .graph import Dag
from .scm import CausalInstance, Dataset

__all__ = [
    "load_dataset",
    "save_dataset",
    "load_graph",
    "save_graph",
    "save_matrix",
    "load_matrix",
    "save_instance_bundle",
    "load_instance_bundle",
    "save_trace_jsonl",
    "save_training_set",
    "load_training_set",
]


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    return rows


def _looks_like_header(row: list[str]) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return True
    return False


def load_dataset(path: str, header: bool | str = "auto") -> Dataset:
    """Read a numeric CSV into a Dataset.

    header may be True, False, or "auto" (header assumed iff the first row
    contains a non-numeric cell). Parse failures report 1-based line and
    column; non-finite values are rejected.
    """
    rows = _read_rows(path)
    columns = None
    start = 0
    if header == "auto":
        header = _looks_like_header(rows[0])
    if header:
        columns = [c.strip() for c in rows[0]]
        start = 1
        if len(rows) == 1:
            raise DataFormatError(f"{path}: header but no data rows")
    width = len(rows[start])
    data = np.empty((len(rows) - start, width), dtype=float)
    for r in range(start, len(rows)):
        row = rows[r]
        if len(row) != width:
            raise DataFormatError(
                f"{path}: line {r + 1} has {len(row)} fields, expected {width}"
            )
        for c, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: line {r + 1}, column {c + 1}: not a number: {cell!r}"
                ) from exc
            if not math.isfinite(val):
                raise DataFormatError(
                    f"{path}: line {r + 1}, column {c + 1}: non-finite value {cell!r}"
                )
            data[r - start, c] = val
    return Dataset(data, columns=columns)


def save_dataset(dataset: Dataset, path: str, header: bool = True) -> None:
    names = dataset.columns or [f"x{j}" for j in range(dataset.d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(names)
        for row in dataset.values:
            writer.writerow([repr(float(v)) for v in row])


def load_graph(path: str) -> Dag:
    """Adjacency CSV (0/1 entries, no header) or JSON edge list
    {"d": int, "edges": [[i, j], ...]}; validates shape and acyclicity."""
    if path.endswith(".json"):
        try:
            with open(path) as fh:
                return Dag.from_json(fh.read())
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, StructuralInputError):
                raise
            raise DataFormatError(f"{path}: {exc}") from exc
    rows = _read_rows(path)
    d = len(rows)
    adj = np.zeros((d, d), dtype=np.int8)
    for r, row in enumerate(rows):
        if len(row) != d:
            raise DataFormatError(
                f"{path}: line {r + 1} has {len(row)} fields, expected {d} (square matrix)"
            )
        for c, cell in enumerate(row):
            text = cell.strip()
            if text not in ("0", "1"):
                raise DataFormatError(
                    f"{path}: line {r + 1}, column {c + 1}: adjacency entries must be 0 or 1, got {cell!r}"
                )
            adj[r, c] = int(text)
    return Dag(adj)  # raises StructuralInputError on cycles / diagonal


def save_graph(dag: Dag, path: str) -> None:
    if path.endswith(".json"):
        with open(path, "w") as fh:
            fh.write(dag.to_json())
        return
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in dag.adjacency:
            writer.writerow([int(v) for v in row])


def save_matrix(matrix: np.ndarray, path: str) -> None:
    """Write a float matrix (edge probabilities) as headerless CSV."""
    arr = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([repr(float(v)) for v in row])


def load_matrix(path: str) -> np.ndarray:
    rows = _read_rows(path)
    width = len(rows[0])
    out = np.empty((len(rows), width), dtype=float)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(f"{path}: line {r + 1} is ragged")
        for c, cell in enumerate(row):
            try:
                out[r, c] = float(cell)
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: line {r + 1}, column {c + 1}: not a number: {cell!r}"
                ) from exc
    return out


def save_instance_bundle(instance: CausalInstance, out_dir: str) -> None:
    """data.csv + graph.csv + meta.json in one directory."""
    os.makedirs(out_dir, exist_ok=True)
    save_dataset(instance.data, os.path.join(out_dir, "data.csv"))
    save_graph(instance.dag, os.path.join(out_dir, "graph.csv"))
    meta = {
        "mechanism": instance.spec.mechanism.value,
        "noise": instance.spec.noise.value,
        "graph_model": instance.spec.graph_model.value,
        "seed": instance.seed,
        "n": instance.data.n,
        "d": instance.data.d,
        "generator": instance.scm.meta,
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)


def load_instance_bundle(bundle_dir: str) -> tuple[Dataset, Dag, dict]:
    data = load_dataset(os.path.join(bundle_dir, "data.csv"))
    dag = load_graph(os.path.join(bundle_dir, "graph.csv"))
    meta_path = os.path.join(bundle_dir, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    return data, dag, meta


def save_trace_jsonl(steps, path: str) -> None:
    """One JSON object per refinement step."""
    with open(path, "w") as fh:
        for record in steps:
            fh.write(json.dumps(record.to_json()))
            fh.write("\n")


def save_training_set(training_set, out_dir: str) -> None:
    """instance_### subdirectories (data.csv + graph.csv) plus provenance."""
    os.makedirs(out_dir, exist_ok=True)
    for k, (data_k, graph_k) in enumerate(training_set.instances):
        inst_dir = os.path.join(out_dir, f"instance_{k:03d}")
        os.makedirs(inst_dir, exist_ok=True)
        save_dataset(data_k, os.path.join(inst_dir, "data.csv"))
        save_graph(graph_k, os.path.join(inst_dir, "graph.csv"))
    with open(os.path.join(out_dir, "provenance.json"), "w") as fh:
        json.dump(training_set.provenance, fh, indent=2)


def load_training_set(ts_dir: str):
    from .model import TrainingSet

    try:
        names = sorted(
            name
            for name in os.listdir(ts_dir)
            if name.startswith("instance_") and os.path.isdir(os.path.join(ts_dir, name))
        )
    except OSError as exc:
        raise DataFormatError(f"{ts_dir}: {exc}") from exc
    if not names:
        raise DataFormatError(f"{ts_dir}: no instance_* subdirectories found")
    instances = []
    for name in names:
        inst_dir = os.path.join(ts_dir, name)
        data = load_dataset(os.path.join(inst_dir, "data.csv"))
        dag = load_graph(os.path.join(inst_dir, "graph.csv"))
        instances.append((data, dag))
    provenance = {}
    prov_path = os.path.join(ts_dir, "provenance.json")
    if os.path.exists(prov_path):
        with open(prov_path) as fh:
            provenance = json.load(fh)
    return TrainingSet(instances=instances, provenance=provenance)
