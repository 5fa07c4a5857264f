"""Natural-language encoding of meta-structures.

Every decomposed source-to-target path becomes one clause chain (a
"sub-logic"): the first clause names both endpoint nouns, each following hop
is attached with the literal conjunction ``THAT``. Sub-logics are joined
with the literal conjunction ``AND``. Both tokens are uppercase so they can
be recovered mechanically from prompts and stub responses.
"""

from __future__ import annotations

from dataclasses import dataclass

from .hin import Schema
from .structure import MetaPath, MetaStructure, enumerate_paths

THAT = "THAT"
AND = "AND"


class GrammarError(ValueError):
    """Schema lacks the vocabulary needed to verbalize a path."""


@dataclass(frozen=True)
class SubLogic:
    sentence: str
    path: MetaPath


def encode_path(path: MetaPath, schema: Schema) -> SubLogic:
    """Render one meta-path as a nested-clause sentence."""
    verbs = []
    for eid in path.edge_types:
        verb = schema.edge_type(eid).verb
        if not verb:
            raise GrammarError(f"edge type {schema.edge_type(eid).name!r} has no verb phrase")
        verbs.append(verb)
    nouns = [schema.node_type(t).noun for t in path.node_types]

    parts = [f"{nouns[0]} {verbs[0]} {nouns[1]}"]
    for verb, noun in zip(verbs[1:], nouns[2:]):
        parts.append(f"{verb} {noun}")
    return SubLogic(sentence=f" {THAT} ".join(parts), path=path)


def encode_metastructure(ms: MetaStructure, schema: Schema) -> str:
    """Join the structure's sub-logics with AND, ordered by path type sequence."""
    paths = sorted(enumerate_paths(ms), key=lambda p: p.type_sequence())
    return f" {AND} ".join(encode_path(p, schema).sentence for p in paths)
