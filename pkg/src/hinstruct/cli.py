"""Command-line interface.

Subcommands: ``search`` (full evolutionary run), ``translate`` (structure to
sentence), ``evaluate`` (score one structure), ``neighbors`` (list one-step
neighbors), ``explain`` (re-run the differential explainer on a result).

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 backend
error. Output files are written atomically (temp file plus rename).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import BackendError, HttpChatBackend, PromptLibrary, TranscriptLog, make_stub_backend
from .evaluator import (
    EvaluationError,
    NodeClassificationEvaluator,
    RecommendationEvaluator,
)
from .evolution import (
    PerformancePool,
    PoolRecord,
    SearchConfig,
    explain_top_structures,
    run_search,
)
from .grammar import GrammarError, encode_metastructure
from .hin import (
    DataError,
    SchemaError,
    binarize_ratings,
    load_graph,
    load_labels,
    load_ratings,
    load_schema,
)
from .mutations import ComponentLimits, EmptyNeighborhoodError, build_component_library, one_step_neighbors
from .sparse import MatrixBlowupError
from .splits import SplitError, make_node_label_split, make_recommendation_split
from .structure import MetaStructure, StructureError, validate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

DEFAULT_API_KEY_ENV = "HINSTRUCT_API_KEY"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    dataset_dir: Path
    task_kind: str  # "recommendation" | "classification"
    target: str  # edge type name or node type name
    rating_threshold: int
    split_ratio: tuple
    search: SearchConfig
    backend_spec: dict
    output_dir: Path
    prompt_dir: Path | None

    @classmethod
    def load(cls, path, seed_override=None, out_override=None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        payload = json.loads(path.read_text(encoding="utf-8"))

        dataset_dir = Path(payload.get("dataset_dir", ""))
        if not dataset_dir.is_dir():
            raise DataError(f"dataset directory not found: {dataset_dir}")

        task = payload.get("task") or {}
        kind = task.get("kind")
        if kind == "recommendation":
            target = task.get("target_relation")
        elif kind == "classification":
            target = task.get("target_type")
        else:
            raise DataError("config task.kind must be 'recommendation' or 'classification'")
        if not target:
            raise DataError("config task must name exactly one target relation or node type")

        search_payload = dict(payload.get("search", {}))
        if seed_override is not None:
            search_payload["seed"] = seed_override
        unknown = set(search_payload) - {f.name for f in dataclasses.fields(SearchConfig)}
        if unknown:
            raise DataError(f"unknown search config keys: {sorted(unknown)}")
        try:
            search = SearchConfig(**search_payload)
        except (TypeError, ValueError) as exc:
            raise DataError(f"invalid search config: {exc}") from exc

        backend_spec = payload.get("backend") or {"kind": "stub"}
        if backend_spec.get("kind") not in ("stub", "http"):
            raise DataError("backend.kind must be 'stub' or 'http'")
        if backend_spec["kind"] == "http" and not backend_spec.get("url"):
            raise DataError("http backend needs a url")

        output_dir = Path(out_override or payload.get("output_dir", "hinstruct-out"))
        prompt_dir = payload.get("prompt_dir")
        if prompt_dir is not None:
            prompt_dir = Path(prompt_dir)
            if not prompt_dir.is_dir():
                raise DataError(f"prompt directory not found: {prompt_dir}")

        return cls(
            dataset_dir=dataset_dir,
            task_kind=kind,
            target=target,
            rating_threshold=int(payload.get("rating_threshold", 2)),
            split_ratio=tuple(payload.get("split_ratio", (3, 1, 1))),
            search=search,
            backend_spec=backend_spec,
            output_dir=output_dir,
            prompt_dir=prompt_dir,
        )


def make_backend(spec: dict):
    if spec["kind"] == "stub":
        return make_stub_backend()
    api_key = os.environ.get(spec.get("api_key_env", DEFAULT_API_KEY_ENV))
    return HttpChatBackend(
        url=spec["url"],
        model=spec.get("model", "gpt-4"),
        api_key=api_key,
        temperature=float(spec.get("temperature", 0.0)),
        timeout=float(spec.get("timeout", 60.0)),
    )


def build_task(config: RunConfig, part: str = "val"):
    """Load the dataset and construct (graph, split, evaluator)."""
    schema = load_schema(config.dataset_dir / "schema.json")
    graph = load_graph(schema, config.dataset_dir)
    if config.task_kind == "recommendation":
        et = schema.edge_type_by_name(config.target)
        ratings_path = config.dataset_dir / "ratings.tsv"
        if not ratings_path.is_file():
            raise DataError(f"recommendation task needs ratings file: {ratings_path}")
        labeled = binarize_ratings(load_ratings(ratings_path), config.rating_threshold)
        split, graph = make_recommendation_split(
            graph, et.id, labeled, seed=config.search.seed, ratio=config.split_ratio
        )
        evaluator = RecommendationEvaluator(part=part)
    else:
        nt = schema.node_type_by_name(config.target)
        labels_path = config.dataset_dir / "labels.tsv"
        if not labels_path.is_file():
            raise DataError(f"classification task needs label file: {labels_path}")
        labels = load_labels(labels_path)
        split = make_node_label_split(
            nt.id, labels, seed=config.search.seed, ratio=config.split_ratio
        )
        evaluator = NodeClassificationEvaluator(part=part)
    return graph, split, evaluator


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _load_structure(path) -> MetaStructure:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"structure file not found: {path}")
    return MetaStructure.from_dict(json.loads(path.read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_search(args) -> int:
    config = RunConfig.load(args.config, args.seed, args.out)
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    graph, split, evaluator = build_task(config, part="val")
    backend = make_backend(config.backend_spec)
    prompts = PromptLibrary(config.prompt_dir)
    transcript_path = out_dir / "transcripts.jsonl"
    transcript_path.unlink(missing_ok=True)
    transcript = TranscriptLog(transcript_path)

    result = run_search(
        config.search, graph, split, backend, evaluator,
        prompts=prompts, transcript=transcript,
    )

    _atomic_write(out_dir / "result.json", json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    curve_lines = ["generation,best_fitness,mean_fitness"]
    curve_lines += [f"{g},{best:.12g},{mean:.12g}" for g, best, mean in result.curve_rows()]
    _atomic_write(out_dir / "curve.csv", "\n".join(curve_lines) + "\n")
    _atomic_write(
        out_dir / "events.jsonl",
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in result.events),
    )
    _atomic_write(
        out_dir / "explanations.json",
        json.dumps([r.to_dict() for r in result.explanations], indent=2, sort_keys=True) + "\n",
    )

    if result.aborted is not None:
        print(f"search aborted: {result.aborted}; partial results in {out_dir}", file=sys.stderr)
        return EXIT_DATA
    best = result.final_best
    print(f"final best: {evaluator.metric}={best.fitness:.6f} key={best.key}")
    print(f"  {best.sentence}")
    print(f"results written to {out_dir}")
    return EXIT_OK


def cmd_translate(args) -> int:
    schema = load_schema(args.schema)
    ms = _load_structure(args.structure)
    violations = validate(ms, schema)
    if violations:
        for v in violations:
            print(f"invalid structure: {v}", file=sys.stderr)
        return EXIT_DATA
    print(encode_metastructure(ms, schema))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = RunConfig.load(args.config, args.seed, args.out)
    graph, split, evaluator = build_task(config, part=args.split)
    ms = _load_structure(args.structure)
    violations = validate(ms, graph.schema)
    if violations:
        for v in violations:
            print(f"invalid structure: {v}", file=sys.stderr)
        return EXIT_DATA
    result = evaluator.evaluate(graph, split, ms)
    print(f"{result.metric} {result.value:.6f}")
    return EXIT_OK


def cmd_neighbors(args) -> int:
    schema = load_schema(args.schema)
    ms = _load_structure(args.structure)
    violations = validate(ms, schema)
    if violations:
        for v in violations:
            print(f"invalid structure: {v}", file=sys.stderr)
        return EXIT_DATA
    lib = build_component_library(
        schema, ComponentLimits(args.insertion_max_interior, args.grafting_max_nodes)
    )
    rng = np.random.default_rng(args.seed)
    try:
        cands = one_step_neighbors(ms, lib, schema, rng, cap=args.cap, max_nodes=args.max_nodes)
    except EmptyNeighborhoodError:
        print("neighbors=0 sampled=false")
        return EXIT_OK
    print(f"neighbors={len(cands.candidates)} sampled={str(cands.sampled).lower()}")
    for c in cands.candidates:
        sentence = encode_metastructure(c.structure, schema)
        print(f"{json.dumps(c.descriptor, sort_keys=True)}\t{c.key}\t{sentence}")
    return EXIT_OK


def cmd_explain(args) -> int:
    config = RunConfig.load(args.config, args.seed, args.out)
    result_path = Path(args.result)
    if not result_path.is_file():
        raise DataError(f"result file not found: {result_path}")
    payload = json.loads(result_path.read_text(encoding="utf-8"))
    if not payload.get("generations"):
        raise DataError(f"result file has no generations: {result_path}")

    search = config.search
    if args.top_k is not None:
        search = dataclasses.replace(search, explain_top_k=args.top_k)

    graph, split, evaluator = build_task(config, part="val")
    backend = make_backend(config.backend_spec)
    prompts = PromptLibrary(config.prompt_dir)
    lib = build_component_library(
        graph.schema, ComponentLimits(search.insertion_max_interior, search.grafting_max_nodes)
    )
    pool = PerformancePool()
    for raw in payload.get("pool", []):
        pool.insert(
            PoolRecord(
                key=raw["key"],
                sentence=raw["sentence"],
                fitness=raw["fitness"],
                generation=raw["generation"],
                structure=raw["structure"],
            )
        )
    final_keys = payload["generations"][-1]["population"]
    rng = np.random.default_rng(search.seed)

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    transcript = TranscriptLog(out_dir / "explain-transcripts.jsonl")
    reports = explain_top_structures(
        search, graph, split, backend, evaluator, pool, lib, final_keys,
        rng, prompts, transcript, events=[], strict_backend=True,
    )
    _atomic_write(
        out_dir / "explanations.json",
        json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n",
    )
    print(f"wrote {len(reports)} explanation report(s) to {out_dir / 'explanations.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="hinstruct", description="Meta-structure discovery for typed networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("search", help="run the evolutionary search")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--out", default=None, help="override the configured output directory")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("translate", help="print a structure's sentence")
    p.add_argument("structure", help="meta-structure JSON file")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score one structure on the configured task")
    p.add_argument("structure", help="meta-structure JSON file")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--split", choices=("val", "test"), default="val")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("neighbors", help="list a structure's one-step neighbors")
    p.add_argument("structure", help="meta-structure JSON file")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--cap", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-nodes", type=int, default=10, dest="max_nodes")
    p.add_argument("--insertion-max-interior", type=int, default=1, dest="insertion_max_interior")
    p.add_argument("--grafting-max-nodes", type=int, default=3, dest="grafting_max_nodes")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("explain", help="re-run the explainer on a search result")
    p.add_argument("result", help="result JSON from a search run")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--top-k", type=int, default=None, dest="top_k")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_explain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (
        DataError,
        SchemaError,
        SplitError,
        StructureError,
        GrammarError,
        EvaluationError,
        MatrixBlowupError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
