import itertools

import numpy as np
import pytest

from hinstruct.hin import Schema, schema_from_dict
from hinstruct.structure import MetaStructure, canonical_key, validate
from hinstruct.synth import generate, toy_schema

# the minimal schema from the ingestion examples: 4 node types, 4 edge types
MINI_SCHEMA_DICT = {
    "node_types": [
        {"id": 0, "name": "user", "noun": "User"},
        {"id": 1, "name": "business", "noun": "Business"},
        {"id": 2, "name": "category", "noun": "Category"},
        {"id": 3, "name": "city", "noun": "City"},
    ],
    "edge_types": [
        {"id": 0, "name": "rates", "src": 0, "dst": 1, "verb": "rates"},
        {"id": 1, "name": "belongs_to", "src": 1, "dst": 2, "verb": "belongs to"},
        {"id": 2, "name": "located_in", "src": 1, "dst": 3, "verb": "is located in"},
        {"id": 3, "name": "friend", "src": 0, "dst": 0, "verb": "is friend of", "inverse": 3},
    ],
}


@pytest.fixture
def mini_schema() -> Schema:
    return schema_from_dict(MINI_SCHEMA_DICT)


@pytest.fixture(scope="session")
def schema() -> Schema:
    return toy_schema()


@pytest.fixture(scope="session")
def planted_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("planted-data")
    generate(path, seed=0)
    return path


# ---------------------------------------------------------------------------
# independent generators and oracles
# ---------------------------------------------------------------------------


def random_structure(schema: Schema, rng: np.random.Generator, max_nodes: int = 8) -> MetaStructure:
    """Random valid structure, independent of the mutation machinery.

    Grows a random schema walk, then adds branch nodes and chord edges while
    maintaining a topological order, so validity holds by construction.
    """
    for _ in range(200):
        length = int(rng.integers(2, max(3, max_nodes - 1)))
        start = int(rng.integers(schema.n_node_types))
        types = [start]
        etypes = []
        for _ in range(length - 1):
            outs = schema.out_edge_types(types[-1])
            if not outs:
                break
            et = outs[int(rng.integers(len(outs)))]
            etypes.append(et.id)
            types.append(et.dst)
        if len(types) < 2:
            continue

        order = list(range(len(types)))  # position ids in topological order
        nodes = list(types)
        edges = [(order[i], order[i + 1], etypes[i]) for i in range(len(etypes))]

        for _ in range(int(rng.integers(0, 4))):
            if len(nodes) < max_nodes and rng.random() < 0.6:
                # branch node between two ordered positions
                i, j = sorted(rng.choice(len(order), size=2, replace=False))
                if i == j or order.index(order[i]) == len(order) - 1:
                    continue
                a, b = order[i], order[j]
                options = [
                    (e1.id, e1.dst, e2.id)
                    for e1 in schema.out_edge_types(nodes[a])
                    for e2 in schema.out_edge_types(e1.dst)
                    if e2.dst == nodes[b]
                ]
                if not options:
                    continue
                e1, mid_t, e2 = options[int(rng.integers(len(options)))]
                mid = len(nodes)
                nodes.append(mid_t)
                order.insert(i + 1, mid)
                edges.extend([(a, mid, e1), (mid, b, e2)])
            else:
                # chord between ordered positions, never into source/out of target
                i, j = sorted(rng.choice(len(order), size=2, replace=False))
                if i == j or i == len(order) - 1 or j == 0:
                    continue
                a, b = order[i], order[j]
                between = schema.edge_types_between(nodes[a], nodes[b])
                if not between:
                    continue
                et = between[int(rng.integers(len(between)))]
                if (a, b, et.id) not in edges:
                    edges.append((a, b, et.id))

        ms = MetaStructure(
            nodes=tuple(nodes), edges=tuple(edges), source=order[0], target=order[-1]
        )
        if not validate(ms, schema):
            return ms
    raise RuntimeError("random structure generation failed to converge")


def brute_force_paths(ms: MetaStructure):
    """Exhaustive DFS path enumeration, independent of enumerate_paths."""
    succ = {}
    for a, b, e in ms.edges:
        succ.setdefault(a, []).append((b, e))
    results = []
    stack = [(ms.source, (ms.source,), ())]
    while stack:
        pos, npath, epath = stack.pop()
        if pos == ms.target:
            results.append(
                (tuple(ms.nodes[p] for p in npath), epath)
            )
            continue
        for b, e in succ.get(pos, ()):
            if b not in npath:
                stack.append((b, npath + (b,), epath + (e,)))
    return sorted(results)


def brute_isomorphic(a: MetaStructure, b: MetaStructure) -> bool:
    """Permutation-search isomorphism oracle (role- and type-preserving)."""
    if a.n_nodes != b.n_nodes or a.n_edges != b.n_edges:
        return False
    if sorted(a.nodes) != sorted(b.nodes):
        return False
    b_edges = set(b.edges)
    for perm in itertools.permutations(range(b.n_nodes)):
        if perm[a.source] != b.source or perm[a.target] != b.target:
            continue
        if any(a.nodes[p] != b.nodes[perm[p]] for p in range(a.n_nodes)):
            continue
        if all((perm[x], perm[y], e) in b_edges for x, y, e in a.edges):
            return True
    return False


def enumerate_corpus(schema: Schema, max_nodes: int):
    """All valid structures up to isomorphism, positions in topological order."""
    corpus = {}
    for n in range(2, max_nodes + 1):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for types in itertools.product(range(schema.n_node_types), repeat=n):
            options = []
            for i, j in pairs:
                ets = [None] + [et.id for et in schema.edge_types_between(types[i], types[j])]
                options.append(ets)
            if all(len(o) == 1 for o in options):
                continue
            for combo in itertools.product(*options):
                edges = tuple(
                    (i, j, e) for (i, j), e in zip(pairs, combo) if e is not None
                )
                if len(edges) < n - 1:
                    continue
                ms = MetaStructure(nodes=types, edges=edges, source=0, target=n - 1)
                if not validate(ms, schema):
                    corpus.setdefault(canonical_key(ms), ms)
    return corpus
