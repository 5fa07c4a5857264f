import json

import numpy as np
import pytest

from hinstruct.agents import BackendError, PromptLibrary, make_stub_backend
from hinstruct.evaluator import RecommendationEvaluator
from hinstruct.evolution import (
    Individual,
    PerformancePool,
    PoolRecord,
    SearchConfig,
    eliminate,
    evaluate_population,
    mutate_population,
    reproduce,
    run_search,
)
from hinstruct.grammar import encode_metastructure
from hinstruct.hin import load_graph, load_ratings, load_schema, binarize_ratings
from hinstruct.mutations import ComponentLimits, build_component_library
from hinstruct.splits import make_recommendation_split
from hinstruct.structure import MetaStructure, canonical_key
from hinstruct.synth import planted_structure, toy_schema

U, B = 0, 1
RATES, RATED_BY, FRIEND = 0, 1, 2

# dof=3 critical value at p=0.01; statistic below it means p > 0.01
CHI2_CRIT_DOF3_P01 = 11.345


def individual(n_edges, fitness, tag):
    # distinct structures with a controlled edge count: friend chains
    nodes = tuple([U] * n_edges + [B])
    edges = tuple(
        (i, i + 1, FRIEND if i < n_edges - 1 else RATES) for i in range(n_edges)
    )
    ms = MetaStructure(nodes, edges, 0, n_edges)
    return Individual(ms, f"{tag}-{canonical_key(ms)}", f"sentence {tag}", fitness)


class TestSearchConfig:
    def test_defaults_match_stated_hyperparameters(self):
        config = SearchConfig()
        assert config.generations == 30
        assert config.population_size == 5
        assert config.elimination_rate == 0.2
        assert config.candidate_cap == 20
        assert config.pool_sample_size == 30

    def test_validation(self):
        with pytest.raises(ValueError):
            SearchConfig(population_size=1)
        with pytest.raises(ValueError):
            SearchConfig(elimination_rate=0.0)
        with pytest.raises(ValueError):
            SearchConfig(elimination_rate=1.0)
        with pytest.raises(ValueError):
            SearchConfig(candidate_cap=0)


class TestEliminate:
    def test_five_at_point_two_removes_one(self):
        population = [individual(i + 1, 0.1 * (i + 1), f"i{i}") for i in range(5)]
        survivors, removed = eliminate(population, 0.2)
        assert len(removed) == 1 and len(survivors) == 4
        assert removed[0].fitness == pytest.approx(0.1)

    def test_minimum_one_removed(self):
        population = [individual(i + 1, 0.1 * (i + 1), f"i{i}") for i in range(5)]
        survivors, removed = eliminate(population, 0.1)
        assert len(removed) == 1

    def test_equal_fitness_removes_largest(self):
        population = [individual(n, 0.5, f"i{n}") for n in (2, 5, 3, 4)]
        _, removed = eliminate(population, 0.2)
        assert removed[0].structure.n_edges == 5

    def test_survivor_order_preserved(self):
        population = [individual(i + 1, [0.3, 0.1, 0.9, 0.5][i], f"i{i}") for i in range(4)]
        survivors, _ = eliminate(population, 0.25)
        assert [s.fitness for s in survivors] == [0.3, 0.9, 0.5]


class TestReproduce:
    def survivors(self):
        return [individual(i + 1, f, f"s{i}") for i, f in enumerate([0.8, 0.6, 0.4, 0.2])]

    def test_refills_to_size_keeping_survivors(self):
        rng = np.random.default_rng(0)
        population, draws = reproduce(self.survivors(), 5, rng)
        assert len(population) == 5
        assert population[:4] == self.survivors()
        assert len(draws) == 1

    def test_single_survivor_duplicated(self):
        rng = np.random.default_rng(0)
        lone = [individual(1, 0.7, "only")]
        population, draws = reproduce(lone, 4, rng)
        assert len(population) == 4
        assert all(ind is lone[0] for ind in population)

    def test_zero_total_fitness_uniform(self):
        rng = np.random.default_rng(0)
        flat = [individual(i + 1, 0.0, f"z{i}") for i in range(3)]
        population, _ = reproduce(flat, 6, rng)
        assert len(population) == 6

    def test_draw_frequencies_fitness_proportional(self):
        rng = np.random.default_rng(0)
        survivors = self.survivors()
        counts = np.zeros(4)
        n_draws = 10_000
        _, draws = reproduce(survivors, 4 + n_draws, rng)
        for d in draws:
            counts[d] += 1
        expected = np.array([0.4, 0.3, 0.2, 0.1]) * n_draws
        stat = ((counts - expected) ** 2 / expected).sum()
        assert stat < CHI2_CRIT_DOF3_P01, (counts, stat)


class TestPerformancePool:
    def test_insert_once(self):
        pool = PerformancePool()
        record = PoolRecord("k", "s", 0.5, 0, {"nodes": [0], "edges": [], "source": 0, "target": 0})
        pool.insert(record)
        assert pool.get("k") == record
        with pytest.raises(RuntimeError, match="already holds"):
            pool.insert(record)

    def test_sample_small_pool_returns_everything(self):
        pool = PerformancePool()
        for i in range(4):
            pool.insert(PoolRecord(f"k{i}", f"s{i}", i / 10, 0, {}))
        sample = pool.sample(np.random.default_rng(0), 30)
        assert len(sample.records) == 4

    def test_sample_large_pool_without_replacement(self):
        pool = PerformancePool()
        for i in range(50):
            pool.insert(PoolRecord(f"k{i}", f"s{i}", i / 100, 0, {}))
        sample = pool.sample(np.random.default_rng(0), 30)
        assert len(sample.records) == 30
        assert len(set(sample.records)) == 30

    def test_pool_mean_prior(self):
        pool = PerformancePool()
        assert pool.sample(np.random.default_rng(0), 30).mean == 0.5


@pytest.fixture(scope="module")
def planted_task(planted_dir):
    schema = load_schema(planted_dir / "schema.json")
    graph = load_graph(schema, planted_dir)
    labeled = binarize_ratings(load_ratings(planted_dir / "ratings.tsv"))
    split, graph = make_recommendation_split(graph, 0, labeled, seed=0)
    return graph, split


class TestEvaluatePopulation:
    def test_cache_prevents_reevaluation(self, planted_task):
        graph, split = planted_task
        schema = graph.schema
        ms = planted_structure()
        ind = Individual(ms, canonical_key(ms), encode_metastructure(ms, schema))
        pool = PerformancePool()
        events = []
        rng = np.random.default_rng(0)
        evaluator = RecommendationEvaluator("val")
        out1 = evaluate_population([ind], evaluator, graph, split, pool, 0, events, rng)
        out2 = evaluate_population([ind, ind], evaluator, graph, split, pool, 1, events, rng)
        assert pool.evaluator_calls == 1
        assert out1[0].fitness == out2[0].fitness == out2[1].fitness
        cached_flags = [e["cached"] for e in events if e["event"] == "evaluation"]
        assert cached_flags == [False, True, True]


class TestMutatePopulation:
    def test_stub_choice_replaces_individual(self, planted_task):
        graph, split = planted_task
        schema = graph.schema
        config = SearchConfig(backoff=0.0)
        lib = build_component_library(schema)
        seed_ms = MetaStructure((U, U, B), ((0, 1, FRIEND), (1, 2, RATES)), 0, 2)
        ind = Individual(seed_ms, canonical_key(seed_ms), encode_metastructure(seed_ms, schema), 0.8)
        pool = PerformancePool()
        pool.insert(PoolRecord(ind.key, ind.sentence, 0.8, 0, seed_ms.to_dict()))
        events = []
        out = mutate_population(
            [ind], lib, schema, make_stub_backend(), pool, config,
            np.random.default_rng(0), PromptLibrary(), None, events, 0,
        )
        assert len(out) == 1
        assert out[0].key != ind.key
        assert events[-1]["event"] == "mutation"
        assert events[-1]["descriptor"]["op"] in ("insertion", "grafting", "deletion")

    def test_pool_match_attracts_choice(self, planted_task):
        # a pool record identical to one candidate gives it similarity 1 and
        # the pool's top value, so the stub must choose it
        graph, split = planted_task
        schema = graph.schema
        config = SearchConfig(backoff=0.0)
        lib = build_component_library(schema)
        seed_ms = MetaStructure((U, B), ((0, 1, RATES),), 0, 1)
        ind = Individual(seed_ms, canonical_key(seed_ms), encode_metastructure(seed_ms, schema), 0.5)
        target = MetaStructure((U, U, B), ((0, 1, FRIEND), (1, 2, RATES)), 0, 2)
        pool = PerformancePool()
        pool.insert(
            PoolRecord(
                canonical_key(target), encode_metastructure(target, schema), 0.99, 0, target.to_dict()
            )
        )
        out = mutate_population(
            [ind], lib, schema, make_stub_backend(), pool, config,
            np.random.default_rng(0), PromptLibrary(), None, [], 0,
        )
        assert out[0].key == canonical_key(target)

    def test_agent_failure_passes_through(self, planted_task):
        graph, split = planted_task
        schema = graph.schema

        class Dead:
            identity = "dead"

            def complete(self, *a, **k):
                raise BackendError("down")

        config = SearchConfig(backoff=0.0, retries=2)
        lib = build_component_library(schema)
        seed_ms = MetaStructure((U, U, B), ((0, 1, FRIEND), (1, 2, RATES)), 0, 2)
        ind = Individual(seed_ms, canonical_key(seed_ms), encode_metastructure(seed_ms, schema), 0.8)
        events = []
        out = mutate_population(
            [ind], lib, schema, Dead(), PerformancePool(), config,
            np.random.default_rng(0), PromptLibrary(), None, events, 0,
        )
        assert out[0] is ind
        assert "agent failure" in events[-1]["note"]


class TestRunSearch:
    def test_generations_zero_evaluates_seeds_only(self, planted_task):
        graph, split = planted_task
        config = SearchConfig(generations=0, backoff=0.0)
        result = run_search(
            config, graph, split, make_stub_backend(), RecommendationEvaluator("val")
        )
        assert len(result.generations) == 1
        assert result.generations[0].generation == 0
        search_evals = [
            e for e in result.events if e["event"] == "evaluation" and e["phase"] == "search"
        ]
        assert len(search_evals) == config.population_size
        assert set(result.generations[0].population) == {e["key"] for e in search_evals}
        assert result.final_best is not None

    def test_population_size_constant(self, planted_task):
        graph, split = planted_task
        config = SearchConfig(generations=4, backoff=0.0)
        result = run_search(
            config, graph, split, make_stub_backend(), RecommendationEvaluator("val")
        )
        for record in result.generations:
            assert len(record.population) == config.population_size

    def test_running_best_nondecreasing(self, planted_task):
        graph, split = planted_task
        config = SearchConfig(generations=6, backoff=0.0)
        result = run_search(
            config, graph, split, make_stub_backend(), RecommendationEvaluator("val")
        )
        running = 0.0
        by_gen = {}
        for record in result.pool.records():
            by_gen.setdefault(record.generation, []).append(record.fitness)
        best_so_far = []
        for g in sorted(by_gen):
            running = max(running, max(by_gen[g]))
            best_so_far.append(running)
        assert best_so_far == sorted(best_so_far)

    def test_no_repeat_evaluator_calls(self, planted_task):
        graph, split = planted_task
        config = SearchConfig(generations=6, backoff=0.0)

        calls = []
        inner = RecommendationEvaluator("val")

        class Counting:
            metric = "auc"

            def evaluate(self, graph, split, ms):
                calls.append(canonical_key(ms))
                return inner.evaluate(graph, split, ms)

        result = run_search(config, graph, split, make_stub_backend(), Counting())
        assert len(calls) == len(set(calls))
        assert len(calls) == result.pool.evaluator_calls == len(result.pool)

    def test_event_log_deterministic(self, planted_task):
        graph, split = planted_task
        config = SearchConfig(generations=3, backoff=0.0)
        a = run_search(config, graph, split, make_stub_backend(), RecommendationEvaluator("val"))
        b = run_search(config, graph, split, make_stub_backend(), RecommendationEvaluator("val"))
        assert json.dumps(a.events, sort_keys=True) == json.dumps(b.events, sort_keys=True)
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)

    def test_explanations_for_distinct_finals(self, planted_task):
        graph, split = planted_task
        config = SearchConfig(generations=3, backoff=0.0)
        result = run_search(config, graph, split, make_stub_backend(), RecommendationEvaluator("val"))
        distinct = len(set(result.generations[-1].population))
        assert 1 <= len(result.explanations) <= min(3, distinct)
        for report in result.explanations:
            assert 1 <= len(report.neighbors) <= config.explain_neighbors
            assert report.comprehension and report.attribution

    def test_evaluator_failure_aborts_with_partial_results(self, planted_task):
        graph, split = planted_task

        class Exploding:
            metric = "auc"

            def __init__(self):
                self.count = 0

            def evaluate(self, graph, split, ms):
                self.count += 1
                if self.count > 3:
                    from hinstruct.evaluator import EvaluationError

                    raise EvaluationError("synthetic failure")
                return RecommendationEvaluator("val").evaluate(graph, split, ms)

        config = SearchConfig(generations=3, backoff=0.0)
        result = run_search(config, graph, split, make_stub_backend(), Exploding())
        assert result.aborted is not None
        assert len(result.pool) == 3
        assert result.final_best is not None
