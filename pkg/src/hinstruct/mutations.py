"""One-step neighborhood of a meta-structure.

Three operations modify a structure: INSERTION replaces an edge with a
compatible component path, GRAFTING merges a component's endpoints onto two
existing positions to open a branch, DELETION removes an interior position
and reconnects its neighbors through admissible edge types. Components are
schema meta-paths enumerated up to configured size limits.

Every emitted neighbor is schema-valid, distinct from the origin, and
deduplicated by canonical key.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .hin import Schema
from .structure import MetaPath, MetaStructure, canonical_key, validate

# Deletion reconnection enumerates one neighbor per admissible edge-type
# assignment; the combination count is clamped to keep degenerate schemas
# from exploding the candidate set.
MAX_RECONNECT_COMBOS = 512


class EmptyNeighborhoodError(RuntimeError):
    """The structure has no valid one-step neighbors."""


@dataclass(frozen=True)
class ComponentLimits:
    insertion_max_interior: int = 1
    grafting_max_nodes: int = 3


@dataclass(frozen=True)
class ComponentLibrary:
    insertion: tuple[MetaPath, ...]
    grafting: tuple[MetaPath, ...]
    limits: ComponentLimits


@dataclass(frozen=True)
class Candidate:
    structure: MetaStructure
    key: str
    descriptor: dict = field(compare=False)


@dataclass(frozen=True)
class CandidateSet:
    origin: MetaStructure
    candidates: tuple[Candidate, ...]
    sampled: bool


def build_component_library(schema: Schema, limits: ComponentLimits | None = None) -> ComponentLibrary:
    limits = limits or ComponentLimits()
    insertion_cap = 2 + limits.insertion_max_interior
    paths = _schema_paths(schema, max(insertion_cap, limits.grafting_max_nodes))
    return ComponentLibrary(
        insertion=tuple(p for p in paths if p.n_nodes <= insertion_cap),
        grafting=tuple(p for p in paths if p.n_nodes <= limits.grafting_max_nodes),
        limits=limits,
    )


def _schema_paths(schema: Schema, max_nodes: int) -> list[MetaPath]:
    """Exhaustive meta-paths of 2..max_nodes nodes, ordered by size then types."""
    found: list[MetaPath] = []

    def extend(nodes, etypes):
        if len(nodes) >= 2:
            found.append(MetaPath(tuple(nodes), tuple(etypes)))
        if len(nodes) == max_nodes:
            return
        for et in sorted(schema.out_edge_types(nodes[-1]), key=lambda e: e.id):
            extend(nodes + [et.dst], etypes + [et.id])

    for nt in schema.node_types:
        extend([nt.id], [])
    found.sort(key=lambda p: (p.n_nodes, p.type_sequence()))
    return found


def _dedup_edges(edges):
    seen = set()
    out = []
    for edge in edges:
        if edge not in seen:
            seen.add(edge)
            out.append(edge)
    return tuple(out)


def neighbors_insertion(ms: MetaStructure, lib: ComponentLibrary, schema: Schema,
                        max_nodes: int = 10) -> list[tuple[MetaStructure, dict]]:
    out = []
    for idx, (u, v, e) in enumerate(ms.edges):
        for comp in lib.insertion:
            if comp.node_types[0] != ms.nodes[u] or comp.node_types[-1] != ms.nodes[v]:
                continue
            interior = comp.node_types[1:-1]
            if ms.n_nodes + len(interior) > max_nodes:
                continue
            base = ms.n_nodes
            mapped = [u] + [base + i for i in range(len(interior))] + [v]
            edges = [edge for j, edge in enumerate(ms.edges) if j != idx]
            edges.extend(
                (mapped[i], mapped[i + 1], ce) for i, ce in enumerate(comp.edge_types)
            )
            cand = MetaStructure(
                nodes=ms.nodes + interior,
                edges=_dedup_edges(edges),
                source=ms.source,
                target=ms.target,
            )
            desc = {
                "op": "insertion",
                "edge": [u, v, e],
                "component": list(comp.type_sequence()),
            }
            out.append((cand, desc))
    return _validated(out, ms, schema)


def neighbors_grafting(ms: MetaStructure, lib: ComponentLibrary, schema: Schema,
                       max_nodes: int = 10) -> list[tuple[MetaStructure, dict]]:
    out = []
    for comp in lib.grafting:
        first_t, last_t = comp.node_types[0], comp.node_types[-1]
        interior = comp.node_types[1:-1]
        if ms.n_nodes + len(interior) > max_nodes:
            continue
        for u in range(ms.n_nodes):
            if ms.nodes[u] != first_t:
                continue
            for w in range(ms.n_nodes):
                if w == u or ms.nodes[w] != last_t:
                    continue
                base = ms.n_nodes
                mapped = [u] + [base + i for i in range(len(interior))] + [w]
                edges = list(ms.edges)
                edges.extend(
                    (mapped[i], mapped[i + 1], ce) for i, ce in enumerate(comp.edge_types)
                )
                cand = MetaStructure(
                    nodes=ms.nodes + interior,
                    edges=_dedup_edges(edges),
                    source=ms.source,
                    target=ms.target,
                )
                desc = {
                    "op": "grafting",
                    "anchors": [u, w],
                    "component": list(comp.type_sequence()),
                }
                out.append((cand, desc))
    return _validated(out, ms, schema)


def neighbors_deletion(ms: MetaStructure, schema: Schema,
                       max_nodes: int = 10) -> list[tuple[MetaStructure, dict]]:
    out = []
    for v in range(ms.n_nodes):
        if v in (ms.source, ms.target):
            continue
        kept = [edge for edge in ms.edges if v not in edge[:2]]
        preds = sorted({a for a, b, _ in ms.edges if b == v})
        succs = sorted({b for a, b, _ in ms.edges if a == v})
        pair_choices = []
        for p, s in itertools.product(preds, succs):
            if p == s:
                continue
            admissible = sorted(
                et.id for et in schema.edge_types_between(ms.nodes[p], ms.nodes[s])
            )
            if admissible:
                pair_choices.append([(p, s, eid) for eid in admissible])
        combos = itertools.product(*pair_choices) if pair_choices else iter([()])
        for combo in itertools.islice(combos, MAX_RECONNECT_COMBOS):
            edges = _dedup_edges(list(kept) + list(combo))
            remap = [p if p < v else p - 1 for p in range(ms.n_nodes)]
            cand = MetaStructure(
                nodes=ms.nodes[:v] + ms.nodes[v + 1 :],
                edges=tuple((remap[a], remap[b], e) for a, b, e in edges),
                source=remap[ms.source],
                target=remap[ms.target],
            )
            desc = {
                "op": "deletion",
                "position": v,
                "reconnect": [list(c) for c in combo],
            }
            out.append((cand, desc))
    return _validated(out, ms, schema)


def _validated(raw, origin: MetaStructure, schema: Schema):
    """Keep valid candidates, drop the origin, dedupe by canonical key."""
    origin_key = canonical_key(origin)
    seen = {origin_key}
    out = []
    for cand, desc in raw:
        if validate(cand, schema):
            continue
        key = canonical_key(cand)
        if key in seen:
            continue
        seen.add(key)
        out.append((cand, desc))
    return out


def one_step_neighbors(
    ms: MetaStructure,
    lib: ComponentLibrary,
    schema: Schema,
    rng: np.random.Generator,
    cap: int = 20,
    max_nodes: int = 10,
) -> CandidateSet:
    """Union of the three operations, deduplicated, uniformly capped."""
    union: list[Candidate] = []
    seen = {canonical_key(ms)}
    for cand, desc in itertools.chain(
        neighbors_insertion(ms, lib, schema, max_nodes),
        neighbors_grafting(ms, lib, schema, max_nodes),
        neighbors_deletion(ms, schema, max_nodes),
    ):
        key = canonical_key(cand)
        if key in seen:
            continue
        seen.add(key)
        union.append(Candidate(cand, key, desc))

    if not union:
        raise EmptyNeighborhoodError("structure has no valid one-step neighbors")

    if len(union) <= cap:
        return CandidateSet(ms, tuple(union), sampled=False)
    picked = rng.choice(len(union), size=cap, replace=False)
    picked.sort()
    return CandidateSet(ms, tuple(union[i] for i in picked), sampled=True)
