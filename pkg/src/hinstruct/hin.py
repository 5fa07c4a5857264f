"""Typed heterogeneous graph model and dataset ingestion.

A dataset directory holds:

* ``schema.json`` -- node/edge type vocabulary (see :func:`load_schema`)
* ``counts.json`` -- node count per node-type name
* ``<edge_type_name>.edges`` -- one file per edge type, ``src<TAB>dst`` per
  line, ``#`` starts a comment. An edge type declared as the inverse of
  another may omit its file; the transposed adjacency is used instead.
* ``ratings.tsv`` (optional) -- ``src<TAB>dst<TAB>rating``
* ``labels.tsv`` (optional) -- ``node_index<TAB>class_id``

Node indices are dense, 0-based and per-type; mapping back to original
dataset ids is the preprocessor's concern.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .sparse import SparseMatrix


class SchemaError(ValueError):
    """Malformed schema file or schema invariant violation."""


class DataError(ValueError):
    """Malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class NodeType:
    id: int
    name: str
    noun: str


@dataclass(frozen=True)
class EdgeType:
    id: int
    name: str
    src: int
    dst: int
    verb: str
    inverse: int | None = None


@dataclass(frozen=True)
class Schema:
    node_types: tuple[NodeType, ...]
    edge_types: tuple[EdgeType, ...]
    _between: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for et in self.edge_types:
            self._between.setdefault((et.src, et.dst), []).append(et)

    @property
    def n_node_types(self) -> int:
        return len(self.node_types)

    @property
    def n_edge_types(self) -> int:
        return len(self.edge_types)

    def node_type(self, tid: int) -> NodeType:
        return self.node_types[tid]

    def edge_type(self, eid: int) -> EdgeType:
        return self.edge_types[eid]

    def node_type_by_name(self, name: str) -> NodeType:
        for nt in self.node_types:
            if nt.name == name:
                return nt
        raise SchemaError(f"unknown node type name: {name!r}")

    def edge_type_by_name(self, name: str) -> EdgeType:
        for et in self.edge_types:
            if et.name == name:
                return et
        raise SchemaError(f"unknown edge type name: {name!r}")

    def edge_types_between(self, src_tid: int, dst_tid: int) -> list[EdgeType]:
        return list(self._between.get((src_tid, dst_tid), ()))

    def out_edge_types(self, src_tid: int) -> list[EdgeType]:
        return [et for et in self.edge_types if et.src == src_tid]

    def to_dict(self) -> dict:
        return {
            "node_types": [
                {"id": nt.id, "name": nt.name, "noun": nt.noun} for nt in self.node_types
            ],
            "edge_types": [
                {
                    "id": et.id,
                    "name": et.name,
                    "src": et.src,
                    "dst": et.dst,
                    "verb": et.verb,
                    "inverse": et.inverse,
                }
                for et in self.edge_types
            ],
        }


def schema_from_dict(payload: dict) -> Schema:
    """Validate a schema mapping and build a :class:`Schema`."""
    raw_nodes = payload.get("node_types")
    if not raw_nodes:
        raise SchemaError("schema declares no node types")
    raw_edges = payload.get("edge_types", [])

    try:
        nodes = [
            NodeType(id=int(n["id"]), name=str(n["name"]), noun=str(n.get("noun", n["name"])))
            for n in raw_nodes
        ]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed node type entry: {exc}") from exc
    nodes.sort(key=lambda n: n.id)
    if [n.id for n in nodes] != list(range(len(nodes))):
        raise SchemaError("node type ids must be dense 0..k-1")
    if len({n.name for n in nodes}) != len(nodes):
        raise SchemaError("node type names must be unique")

    try:
        edges = [
            EdgeType(
                id=int(e["id"]),
                name=str(e["name"]),
                src=int(e["src"]),
                dst=int(e["dst"]),
                verb=str(e.get("verb", "")),
                inverse=None if e.get("inverse") is None else int(e["inverse"]),
            )
            for e in raw_edges
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed edge type entry: {exc}") from exc
    edges.sort(key=lambda e: e.id)
    if [e.id for e in edges] != list(range(len(edges))):
        raise SchemaError("edge type ids must be dense 0..j-1")
    if len({e.name for e in edges}) != len(edges):
        raise SchemaError("edge type names must be unique")

    n = len(nodes)
    for e in edges:
        if not (0 <= e.src < n and 0 <= e.dst < n):
            raise SchemaError(f"edge type {e.name!r} references unknown node type")
        if e.inverse is not None:
            if not (0 <= e.inverse < len(edges)):
                raise SchemaError(f"edge type {e.name!r} declares unknown inverse id {e.inverse}")
            inv = edges[e.inverse]
            if inv.inverse != e.id or inv.src != e.dst or inv.dst != e.src:
                raise SchemaError(
                    f"asymmetric inverse declaration between {e.name!r} and {inv.name!r}"
                )
    return Schema(tuple(nodes), tuple(edges))


def load_schema(path) -> Schema:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from exc
    return schema_from_dict(payload)


@dataclass(frozen=True)
class HinGraph:
    schema: Schema
    node_counts: tuple[int, ...]
    adjacency: dict  # edge type id -> SparseMatrix

    def count(self, tid: int) -> int:
        return self.node_counts[tid]

    def adjacency_of(self, eid: int) -> SparseMatrix:
        return self.adjacency[eid]

    def with_adjacency(self, eid: int, matrix: SparseMatrix) -> "HinGraph":
        et = self.schema.edge_type(eid)
        if (matrix.rows, matrix.cols) != (self.count(et.src), self.count(et.dst)):
            raise DataError(f"adjacency shape mismatch for edge type {et.name!r}")
        adj = dict(self.adjacency)
        adj[eid] = matrix
        return HinGraph(self.schema, self.node_counts, adj)


def _parse_edge_lines(path: Path, n_fields: int):
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != n_fields:
                raise DataError(f"{path}:{lineno}: expected {n_fields} fields, got {len(parts)}")
            try:
                rows.append(tuple(int(p) for p in parts))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer field") from exc
    return rows


def load_graph(schema: Schema, directory) -> HinGraph:
    """Load per-relation adjacency from a dataset directory.

    Duplicate edges collapse to a single unit entry. Edge types whose file is
    absent fall back to the transpose of their declared inverse.
    """
    directory = Path(directory)
    counts_path = directory / "counts.json"
    if not counts_path.is_file():
        raise DataError(f"missing node counts file: {counts_path}")
    raw_counts = json.loads(counts_path.read_text(encoding="utf-8"))
    counts = []
    for nt in schema.node_types:
        if nt.name not in raw_counts:
            raise DataError(f"counts.json lacks node type {nt.name!r}")
        counts.append(int(raw_counts[nt.name]))

    loaded: dict[int, SparseMatrix] = {}
    for et in schema.edge_types:
        path = directory / f"{et.name}.edges"
        if not path.is_file():
            continue
        pairs = _parse_edge_lines(path, 2)
        n_src, n_dst = counts[et.src], counts[et.dst]
        for s, d in pairs:
            if not (0 <= s < n_src):
                raise DataError(f"{path}: source index {s} out of range for {et.name!r}")
            if not (0 <= d < n_dst):
                raise DataError(f"{path}: target index {d} out of range for {et.name!r}")
        loaded[et.id] = SparseMatrix.from_triplets(
            n_src, n_dst, ((s, d, 1.0) for s, d in pairs), collapse=True
        )

    for et in schema.edge_types:
        if et.id in loaded:
            continue
        if et.inverse is not None and et.inverse in loaded:
            loaded[et.id] = loaded[et.inverse].transpose()
        else:
            raise DataError(f"missing relation file for edge type {et.name!r}")

    return HinGraph(schema, tuple(counts), loaded)


def binarize_ratings(ratings, threshold: int = 2):
    """Map integer ratings to binary preference labels (1 iff rating > threshold)."""
    out = []
    for src, dst, rating in ratings:
        if rating < 0:
            raise DataError(f"negative rating for pair ({src}, {dst})")
        out.append((src, dst, 1 if rating > threshold else 0))
    return out


def load_ratings(path):
    return _parse_edge_lines(Path(path), 3)


def load_labels(path) -> dict[int, int]:
    pairs = _parse_edge_lines(Path(path), 2)
    labels: dict[int, int] = {}
    for node, cls in pairs:
        if node in labels and labels[node] != cls:
            raise DataError(f"{path}: conflicting labels for node {node}")
        labels[node] = cls
    return labels
