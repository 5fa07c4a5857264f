"""Evolutionary search loop: evaluate, eliminate, reproduce, mutate.

A population of meta-structures evolves for a fixed number of generations.
Fitness is the validation metric from the pluggable evaluator; every
evaluated structure is recorded once in the performance pool, keyed by
canonical key, and never re-evaluated. Mutation is agent-guided: the
predictor scores each structure's one-step neighbors against a sample of the
pool, the selector picks one, and the individual is replaced by it.

Everything is deterministic given the configuration seed and the stub
backend; the event log captures each evaluation, elimination, reproduction
draw, and mutation decision together with an rng-state digest.
"""

from __future__ import annotations

import hashlib
import logging
import math
import threading
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .agents import (
    BackendError,
    EvaluatedStructure,
    PoolSample,
    PromptLibrary,
    ScoredCandidate,
    TranscriptLog,
    explain,
    predict_candidates,
    select_candidate,
)
from .evaluator import EvaluationError
from .grammar import encode_metastructure
from .hin import HinGraph
from .mutations import (
    ComponentLimits,
    EmptyNeighborhoodError,
    build_component_library,
    one_step_neighbors,
)
from .sparse import MatrixBlowupError
from .splits import NodeLabelSplit, RecommendationSplit
from .structure import MetaStructure, canonical_key, seed_population

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    generations: int = 30
    population_size: int = 5
    elimination_rate: float = 0.2
    candidate_cap: int = 20
    pool_sample_size: int = 30
    seed: int = 0
    max_structure_nodes: int = 10
    insertion_max_interior: int = 1
    grafting_max_nodes: int = 3
    explain_top_k: int = 3
    explain_neighbors: int = 4
    retries: int = 3
    backoff: float = 1.0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population size must be at least 2")
        if not (0.0 < self.elimination_rate < 1.0):
            raise ValueError("elimination rate must lie strictly between 0 and 1")
        if self.generations < 0:
            raise ValueError("generations must be nonnegative")
        for name in ("candidate_cap", "pool_sample_size", "explain_top_k", "explain_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True)
class Individual:
    structure: MetaStructure
    key: str
    sentence: str
    fitness: float | None = None


@dataclass(frozen=True)
class PoolRecord:
    key: str
    sentence: str
    fitness: float
    generation: int
    structure: dict

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "sentence": self.sentence,
            "fitness": self.fitness,
            "generation": self.generation,
            "structure": self.structure,
        }


class PerformancePool:
    """Insert-once record of every evaluated structure across the run."""

    def __init__(self):
        self._records: dict[str, PoolRecord] = {}
        self._lock = threading.Lock()
        self.evaluator_calls = 0

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def get(self, key: str) -> PoolRecord | None:
        with self._lock:
            return self._records.get(key)

    def insert(self, record: PoolRecord):
        with self._lock:
            if record.key in self._records:
                raise RuntimeError(f"pool already holds key {record.key}")
            self._records[record.key] = record

    def records(self) -> list[PoolRecord]:
        return list(self._records.values())

    def sample(self, rng: np.random.Generator, size: int) -> PoolSample:
        """Without replacement when the pool exceeds ``size``, else everything."""
        records = self.records()
        if len(records) > size:
            picked = rng.choice(len(records), size=size, replace=False)
            picked.sort()
            records = [records[i] for i in picked]
        return PoolSample(tuple((r.sentence, r.fitness) for r in records))


def _rng_digest(rng: np.random.Generator) -> str:
    return hashlib.sha256(repr(rng.bit_generator.state).encode()).hexdigest()[:12]


def _rank(fitness: float, structure: MetaStructure, key: str):
    """Ordering for "best": higher fitness, then smaller, then by key."""
    return (-fitness, structure.n_nodes, structure.n_edges, key)


def eliminate(population, rate: float):
    """Drop the floor(N * rate) weakest individuals, at least one.

    Fitness ties eliminate the larger structure (edge count) first, then the
    lexicographically smaller canonical key.
    """
    n = len(population)
    k = max(1, math.floor(n * rate + 1e-9))
    order = sorted(
        range(n),
        key=lambda i: (population[i].fitness, -population[i].structure.n_edges, population[i].key),
    )
    removed_idx = set(order[:k])
    survivors = [population[i] for i in range(n) if i not in removed_idx]
    removed = [population[i] for i in order[:k]]
    return survivors, removed


def reproduce(survivors, size: int, rng: np.random.Generator):
    """Refill to ``size`` with i.i.d. fitness-proportional duplicates.

    All survivors are retained, so the generation best always carries over.
    """
    if not survivors:
        raise ValueError("no survivors to reproduce from")
    deficit = size - len(survivors)
    fitnesses = np.asarray([ind.fitness for ind in survivors], dtype=np.float64)
    total = fitnesses.sum()
    if total > 0:
        probs = fitnesses / total
    else:
        probs = np.full(len(survivors), 1.0 / len(survivors))
    if deficit <= 0:
        return list(survivors), []
    draws = rng.choice(len(survivors), size=deficit, replace=True, p=probs)
    population = list(survivors) + [survivors[int(i)] for i in draws]
    return population, [int(i) for i in draws]


def evaluate_population(population, evaluator, graph, split, pool, generation, events, rng, phase="search"):
    """Fitness for each individual, via the pool cache or a fresh evaluation."""
    out = []
    for ind in population:
        record = pool.get(ind.key)
        cached = record is not None
        if record is None:
            result = evaluator.evaluate(graph, split, ind.structure)
            record = PoolRecord(
                key=ind.key,
                sentence=ind.sentence,
                fitness=result.value,
                generation=generation,
                structure=ind.structure.to_dict(),
            )
            pool.insert(record)
            pool.evaluator_calls += 1
        events.append(
            {
                "event": "evaluation",
                "phase": phase,
                "generation": generation,
                "key": ind.key,
                "fitness": record.fitness,
                "cached": cached,
                "rng": _rng_digest(rng),
            }
        )
        out.append(replace(ind, fitness=record.fitness))
    return out


def mutate_population(
    population, lib, schema, backend, pool, config: SearchConfig, rng, prompts, transcript, events, generation
):
    """Replace each individual with its agent-chosen one-step neighbor."""
    out = []
    for ind in population:
        try:
            cands = one_step_neighbors(
                ind.structure, lib, schema, rng,
                cap=config.candidate_cap, max_nodes=config.max_structure_nodes,
            )
        except EmptyNeighborhoodError:
            events.append(
                {
                    "event": "mutation",
                    "generation": generation,
                    "origin": ind.key,
                    "chosen": ind.key,
                    "note": "empty neighborhood",
                    "rng": _rng_digest(rng),
                }
            )
            out.append(ind)
            continue

        sample = pool.sample(rng, config.pool_sample_size)
        sentences = [encode_metastructure(c.structure, schema) for c in cands.candidates]
        try:
            preds = predict_candidates(
                backend, sentences, sample, prompts,
                retries=config.retries, backoff=config.backoff, transcript=transcript,
            )
            scored = [
                ScoredCandidate(
                    sentence=sentences[i],
                    p_hat=preds[i].p_hat,
                    c_hat=preds[i].c_hat,
                    n_nodes=c.structure.n_nodes,
                    n_edges=c.structure.n_edges,
                    key=c.key,
                )
                for i, c in enumerate(cands.candidates)
            ]
            decision = select_candidate(
                backend, scored, prompts,
                retries=config.retries, backoff=config.backoff, transcript=transcript,
            )
        except BackendError as exc:
            log.warning("agents failed for %s; individual passes through: %s", ind.key, exc)
            events.append(
                {
                    "event": "mutation",
                    "generation": generation,
                    "origin": ind.key,
                    "chosen": ind.key,
                    "note": f"agent failure: {exc}",
                    "rng": _rng_digest(rng),
                }
            )
            out.append(ind)
            continue

        chosen = cands.candidates[decision.index]
        events.append(
            {
                "event": "mutation",
                "generation": generation,
                "origin": ind.key,
                "chosen": chosen.key,
                "descriptor": chosen.descriptor,
                "sampled": cands.sampled,
                "flagged": decision.fallback,
                "rng": _rng_digest(rng),
            }
        )
        out.append(Individual(chosen.structure, chosen.key, sentences[decision.index]))
    return out


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_key: str
    best_fitness: float
    mean_fitness: float
    population: tuple

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "best_key": self.best_key,
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "population": list(self.population),
        }


@dataclass
class SearchResult:
    config: SearchConfig
    generations: list
    final_best: PoolRecord | None
    pool: PerformancePool
    events: list
    explanations: list = field(default_factory=list)
    aborted: str | None = None

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "generations": [g.to_dict() for g in self.generations],
            "final_best": None if self.final_best is None else self.final_best.to_dict(),
            "pool": [r.to_dict() for r in self.pool.records()],
            "aborted": self.aborted,
        }

    def curve_rows(self):
        return [(g.generation, g.best_fitness, g.mean_fitness) for g in self.generations]


def _generation_record(generation, population) -> GenerationRecord:
    best = min(population, key=lambda i: _rank(i.fitness, i.structure, i.key))
    mean = float(np.mean([i.fitness for i in population]))
    return GenerationRecord(
        generation=generation,
        best_key=best.key,
        best_fitness=best.fitness,
        mean_fitness=mean,
        population=tuple(i.key for i in population),
    )


def task_endpoints(schema, split):
    if isinstance(split, RecommendationSplit):
        et = schema.edge_type(split.target_edge_type)
        return et.src, et.dst
    if isinstance(split, NodeLabelSplit):
        return split.target_node_type, split.target_node_type
    raise TypeError(f"unsupported split type {type(split).__name__}")


def run_search(
    config: SearchConfig,
    graph: HinGraph,
    split,
    backend,
    evaluator,
    prompts: PromptLibrary | None = None,
    transcript: TranscriptLog | None = None,
) -> SearchResult:
    schema = graph.schema
    prompts = prompts or PromptLibrary()
    rng = np.random.default_rng(config.seed)
    lib = build_component_library(
        schema, ComponentLimits(config.insertion_max_interior, config.grafting_max_nodes)
    )
    src_t, dst_t = task_endpoints(schema, split)
    seeds = seed_population(
        schema, src_t, dst_t, config.population_size, config.max_structure_nodes
    )
    population = [
        Individual(ms, canonical_key(ms), encode_metastructure(ms, schema)) for ms in seeds
    ]

    pool = PerformancePool()
    events: list[dict] = []
    gen_records: list[GenerationRecord] = []
    aborted = None

    try:
        for generation in range(config.generations):
            population = evaluate_population(
                population, evaluator, graph, split, pool, generation, events, rng
            )
            gen_records.append(_generation_record(generation, population))
            survivors, removed = eliminate(population, config.elimination_rate)
            events.append(
                {
                    "event": "elimination",
                    "generation": generation,
                    "removed": [ind.key for ind in removed],
                    "rng": _rng_digest(rng),
                }
            )
            population, draws = reproduce(survivors, config.population_size, rng)
            for draw in draws:
                events.append(
                    {
                        "event": "reproduction_draw",
                        "generation": generation,
                        "survivor_index": draw,
                        "key": survivors[draw].key,
                        "rng": _rng_digest(rng),
                    }
                )
            population = mutate_population(
                population, lib, schema, backend, pool, config, rng, prompts,
                transcript, events, generation,
            )
        population = evaluate_population(
            population, evaluator, graph, split, pool, config.generations, events, rng
        )
        gen_records.append(_generation_record(config.generations, population))
    except (EvaluationError, MatrixBlowupError) as exc:
        log.error("search aborted by evaluator failure: %s", exc)
        aborted = str(exc)

    final_best = None
    if len(pool):
        final_best = min(
            pool.records(),
            key=lambda r: (
                -r.fitness,
                len(r.structure["nodes"]),
                len(r.structure["edges"]),
                r.key,
            ),
        )

    result = SearchResult(
        config=config,
        generations=gen_records,
        final_best=final_best,
        pool=pool,
        events=events,
        aborted=aborted,
    )
    if aborted is None and gen_records:
        result.explanations = explain_top_structures(
            config, graph, split, backend, evaluator, pool, lib,
            gen_records[-1].population, rng, prompts, transcript, events,
        )
    return result


def explain_top_structures(
    config, graph, split, backend, evaluator, pool, lib, final_keys, rng, prompts,
    transcript, events, strict_backend: bool = False,
):
    """Differential explanations for the top-k distinct final structures.

    With ``strict_backend`` a backend failure propagates instead of merely
    skipping the affected report.
    """
    schema = graph.schema
    distinct = []
    for key in final_keys:
        if key not in distinct:
            distinct.append(key)
    records = [pool.get(key) for key in distinct]
    records.sort(
        key=lambda r: (-r.fitness, len(r.structure["nodes"]), len(r.structure["edges"]), r.key)
    )
    if config.explain_top_k > len(records):
        log.warning(
            "explain_top_k=%d exceeds %d distinct final structures; explaining all",
            config.explain_top_k, len(records),
        )
    records = records[: config.explain_top_k]

    reports = []
    for record in records:
        ms = MetaStructure.from_dict(record.structure)
        try:
            cands = one_step_neighbors(
                ms, lib, schema, rng,
                cap=config.explain_neighbors, max_nodes=config.max_structure_nodes,
            )
        except EmptyNeighborhoodError:
            log.warning("no neighbors to contrast %s against; skipping report", record.key)
            continue
        neighbor_inds = [
            Individual(c.structure, c.key, encode_metastructure(c.structure, schema))
            for c in cands.candidates
        ]
        try:
            evaluated = evaluate_population(
                neighbor_inds, evaluator, graph, split, pool,
                config.generations, events, rng, phase="explain",
            )
            target = EvaluatedStructure(
                key=record.key, sentence=record.sentence,
                metric=evaluator.metric, value=record.fitness,
            )
            neighbors = tuple(
                EvaluatedStructure(
                    key=ind.key, sentence=ind.sentence,
                    metric=evaluator.metric, value=ind.fitness,
                )
                for ind in evaluated
            )
            reports.append(
                explain(
                    backend, target, neighbors, prompts,
                    retries=config.retries, backoff=config.backoff, transcript=transcript,
                )
            )
        except (BackendError, EvaluationError, MatrixBlowupError) as exc:
            if strict_backend and isinstance(exc, BackendError):
                raise
            log.warning("explainer skipped %s: %s", record.key, exc)
    return reports
