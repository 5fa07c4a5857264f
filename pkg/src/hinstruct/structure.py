"""Meta-structure DAGs over a schema.

A meta-structure is a typed DAG with a single source and a single target
position; every position lies on a directed source-to-target path. The
linear special case is a meta-path. Canonical keys identify structures up
to type-preserving isomorphism and drive deduplication and fitness caching.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass

from .hin import Schema

log = logging.getLogger(__name__)

# Exhaustive canonicalization bounds: below these the key is exact (equal
# keys <=> isomorphic); above, the refined signature alone is used and
# isomorphic structures may, in principle, receive distinct keys.
EXACT_CANONICAL_NODES = 10
PERMUTATION_BUDGET = 40_320


class StructureError(ValueError):
    """Operation applied to an invalid meta-structure."""


@dataclass(frozen=True)
class MetaPath:
    node_types: tuple[int, ...]
    edge_types: tuple[int, ...]

    def __post_init__(self):
        if len(self.node_types) != len(self.edge_types) + 1 or not self.edge_types:
            raise StructureError("meta-path needs k+1 node types for k >= 1 edges")

    @property
    def n_nodes(self) -> int:
        return len(self.node_types)

    def type_sequence(self) -> tuple[int, ...]:
        """Alternating node/edge type ids; the path's identity."""
        seq = [self.node_types[0]]
        for et, nt in zip(self.edge_types, self.node_types[1:]):
            seq.append(et)
            seq.append(nt)
        return tuple(seq)

    def is_valid(self, schema: Schema) -> bool:
        for i, eid in enumerate(self.edge_types):
            if not (0 <= eid < schema.n_edge_types):
                return False
            et = schema.edge_type(eid)
            if et.src != self.node_types[i] or et.dst != self.node_types[i + 1]:
                return False
        return True


@dataclass(frozen=True)
class MetaStructure:
    nodes: tuple[int, ...]  # node type id per position
    edges: tuple[tuple[int, int, int], ...]  # (from position, to position, edge type id)
    source: int
    target: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def out_edges(self, pos: int):
        return sorted((b, e) for a, b, e in self.edges if a == pos)

    def in_edges(self, pos: int):
        return sorted((a, e) for a, b, e in self.edges if b == pos)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "source": self.source,
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MetaStructure":
        try:
            return cls(
                nodes=tuple(int(t) for t in payload["nodes"]),
                edges=tuple((int(a), int(b), int(e)) for a, b, e in payload["edges"]),
                source=int(payload["source"]),
                target=int(payload["target"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StructureError(f"malformed meta-structure payload: {exc}") from exc

    @classmethod
    def from_path(cls, path: MetaPath) -> "MetaStructure":
        edges = tuple((i, i + 1, e) for i, e in enumerate(path.edge_types))
        return cls(nodes=path.node_types, edges=edges, source=0, target=path.n_nodes - 1)


def validate(ms: MetaStructure, schema: Schema) -> list[str]:
    """Return all invariant violations; an empty list means valid."""
    n = ms.n_nodes
    fatal = []
    if n == 0:
        return ["no positions"]
    for t in ms.nodes:
        if not (0 <= t < schema.n_node_types):
            fatal.append(f"unknown node type id {t}")
    if not (0 <= ms.source < n):
        fatal.append(f"source position {ms.source} out of range")
    if not (0 <= ms.target < n):
        fatal.append(f"target position {ms.target} out of range")
    for a, b, e in ms.edges:
        if not (0 <= a < n and 0 <= b < n):
            fatal.append(f"edge ({a},{b}) position out of range")
        if not (0 <= e < schema.n_edge_types):
            fatal.append(f"unknown edge type id {e}")
    if fatal:
        return fatal

    violations = []
    if not ms.edges:
        violations.append("no edges")
    if ms.source == ms.target:
        violations.append("source equals target")

    seen = set()
    indeg = [0] * n
    outdeg = [0] * n
    succs = [[] for _ in range(n)]
    preds = [[] for _ in range(n)]
    for a, b, e in ms.edges:
        if a == b:
            violations.append(f"self-loop at position {a}")
            continue
        if (a, b, e) in seen:
            violations.append(f"duplicate edge ({a},{b},{e})")
        seen.add((a, b, e))
        et = schema.edge_type(e)
        if et.src != ms.nodes[a] or et.dst != ms.nodes[b]:
            violations.append(
                f"edge type {et.name!r} does not connect node types at positions {a}->{b}"
            )
        indeg[b] += 1
        outdeg[a] += 1
        succs[a].append(b)
        preds[b].append(a)

    if indeg[ms.source] > 0:
        violations.append("source has incoming edges")
    if outdeg[ms.target] > 0:
        violations.append("target has outgoing edges")

    # Kahn's algorithm for acyclicity
    remaining = list(indeg)
    queue = [p for p in range(n) if remaining[p] == 0]
    visited = 0
    while queue:
        p = queue.pop()
        visited += 1
        for b in succs[p]:
            remaining[b] -= 1
            if remaining[b] == 0:
                queue.append(b)
    if visited != n:
        violations.append("cycle")
        return violations

    from_source = _reachable(succs, ms.source)
    to_target = _reachable(preds, ms.target)
    for p in range(n):
        if not (from_source[p] and to_target[p]):
            violations.append(f"node {p} off all source-target paths")
    return violations


def _reachable(adjacency, start):
    seen = [False] * len(adjacency)
    seen[start] = True
    stack = [start]
    while stack:
        p = stack.pop()
        for q in adjacency[p]:
            if not seen[q]:
                seen[q] = True
                stack.append(q)
    return seen


def enumerate_paths(ms: MetaStructure) -> list[MetaPath]:
    """All simple source-to-target paths, lexicographic by (positions, edge types)."""
    succs = {}
    for a, b, e in ms.edges:
        succs.setdefault(a, []).append((b, e))
    for a in succs:
        succs[a].sort()

    paths: list[MetaPath] = []

    def walk(pos, node_acc, edge_acc):
        if pos == ms.target:
            paths.append(
                MetaPath(tuple(ms.nodes[p] for p in node_acc), tuple(edge_acc))
            )
            return
        for b, e in succs.get(pos, ()):
            if b in node_acc:  # simple paths only; cannot occur in a DAG
                continue
            walk(b, node_acc + [b], edge_acc + [e])

    walk(ms.source, [ms.source], [])
    if not paths:
        raise StructureError("no source-target path; structure is invalid")
    return paths


# ---------------------------------------------------------------------------
# canonical keys
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=262_144)
def canonical_key(
    ms: MetaStructure,
    exact_limit: int = EXACT_CANONICAL_NODES,
    perm_budget: int = PERMUTATION_BUDGET,
) -> str:
    """Isomorphism-invariant identifier.

    Colors are refined from (type, source?, target?) by iterated in/out
    neighborhood signatures. Remaining ties are broken by exhaustive
    permutation within color classes, which keeps the key exact; structures
    too large for that fall back to the refined signature alone.
    """
    n = ms.n_nodes
    colors = _refine_colors(ms)
    groups: dict[int, list[int]] = {}
    for p in range(n):
        groups.setdefault(colors[p], []).append(p)
    ordered_groups = [groups[c] for c in sorted(groups)]

    perms = 1
    for g in ordered_groups:
        perms *= math.factorial(len(g))
    if n > exact_limit or perms > perm_budget:
        log.warning(
            "canonical key falling back to refined signature for %d-node structure", n
        )
        return _signature_key(ms, colors)

    best = None
    for ordering in _orderings(ordered_groups):
        new_index = {old: i for i, old in enumerate(ordering)}
        relabeled = tuple(sorted((new_index[a], new_index[b], e) for a, b, e in ms.edges))
        if best is None or relabeled < best[0]:
            best = (relabeled, ordering)
    relabeled, ordering = best
    types = ",".join(str(ms.nodes[p]) for p in ordering)
    edges = ";".join(f"{a}-{b}-{e}" for a, b, e in relabeled)
    new_index = {old: i for i, old in enumerate(ordering)}
    return f"n:{types}|e:{edges}|s:{new_index[ms.source]}|t:{new_index[ms.target]}"


def _refine_colors(ms: MetaStructure) -> list[int]:
    n = ms.n_nodes
    outs = [[] for _ in range(n)]
    ins = [[] for _ in range(n)]
    for a, b, e in ms.edges:
        outs[a].append((e, b))
        ins[b].append((e, a))

    base = sorted({(ms.nodes[p], p == ms.source, p == ms.target) for p in range(n)})
    rank = {sig: i for i, sig in enumerate(base)}
    colors = [rank[(ms.nodes[p], p == ms.source, p == ms.target)] for p in range(n)]

    for _ in range(n):
        sigs = []
        for p in range(n):
            out_sig = tuple(sorted((e, colors[b]) for e, b in outs[p]))
            in_sig = tuple(sorted((e, colors[a]) for e, a in ins[p]))
            sigs.append((colors[p], out_sig, in_sig))
        uniq = sorted(set(sigs))
        rank = {sig: i for i, sig in enumerate(uniq)}
        new_colors = [rank[s] for s in sigs]
        if new_colors == colors:
            break
        colors = new_colors
    return colors


def _orderings(groups):
    """All position orderings that permute only within color groups."""
    for combo in itertools.product(*[itertools.permutations(g) for g in groups]):
        yield [p for group in combo for p in group]


def _signature_key(ms: MetaStructure, colors) -> str:
    node_part = ",".join(str(c) for c in sorted(f"{ms.nodes[p]}.{colors[p]}" for p in range(ms.n_nodes)))
    edge_part = ";".join(
        sorted(f"{colors[a]}-{colors[b]}-{e}" for a, b, e in ms.edges)
    )
    return f"wl|n:{node_part}|e:{edge_part}|s:{colors[ms.source]}|t:{colors[ms.target]}"


# ---------------------------------------------------------------------------
# subgraph containment and seeding
# ---------------------------------------------------------------------------


def contains_substructure(big: MetaStructure, small: MetaStructure) -> bool:
    """True if an injective, type- and role-preserving embedding of ``small``
    into ``big`` maps every edge of ``small`` onto an edge of ``big``."""
    if small.n_nodes > big.n_nodes or small.n_edges > big.n_edges:
        return False
    big_edges = set(big.edges)
    assignment: dict[int, int] = {small.source: big.source, small.target: big.target}
    if big.nodes[big.source] != small.nodes[small.source]:
        return False
    if big.nodes[big.target] != small.nodes[small.target]:
        return False
    free = [p for p in range(small.n_nodes) if p not in assignment]

    def ok_so_far():
        for a, b, e in small.edges:
            if a in assignment and b in assignment:
                if (assignment[a], assignment[b], e) not in big_edges:
                    return False
        return True

    def search(i):
        if not ok_so_far():
            return False
        if i == len(free):
            return True
        p = free[i]
        used = set(assignment.values())
        for q in range(big.n_nodes):
            if q in used or big.nodes[q] != small.nodes[p]:
                continue
            assignment[p] = q
            if search(i + 1):
                return True
            del assignment[p]
        return False

    return search(0)


def seed_population(
    schema: Schema,
    source_type: int,
    target_type: int,
    size: int,
    max_nodes: int = 10,
    max_expansions: int = 200_000,
) -> list[MetaStructure]:
    """The ``size`` shortest meta-paths between the task's endpoint types,
    found by breadth-first search over the schema graph and converted to
    linear structures. Pads with duplicates when fewer exist."""
    found: list[MetaPath] = []
    queue = deque([((source_type,), ())])
    expansions = 0
    while queue and len(found) < size:
        node_types, edge_types = queue.popleft()
        if len(node_types) >= max_nodes:
            continue
        for et in sorted(schema.out_edge_types(node_types[-1]), key=lambda e: e.id):
            expansions += 1
            child = (node_types + (et.dst,), edge_types + (et.id,))
            if et.dst == target_type:
                found.append(MetaPath(child[0], child[1]))
                if len(found) == size:
                    break
            queue.append(child)
        if expansions > max_expansions:
            break

    if not found:
        raise StructureError(
            f"no schema path from node type {source_type} to node type {target_type}"
        )
    seeds = [MetaStructure.from_path(p) for p in found]
    while len(seeds) < size:
        seeds.append(seeds[len(seeds) % len(found)])
    return seeds[:size]
