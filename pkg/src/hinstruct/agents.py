"""Chat-backend abstraction and the three search agents.

Agents exchange plain text with a backend through ``complete(system, user)``.
Prompts are rendered from external template files with named placeholders so
wording can be swapped without code changes; responses follow a line-oriented
contract (``CANDIDATE i: p=..., c=...`` / ``CHOICE: i``) that the parsers
here recover.

Two backends ship: an HTTP client speaking the common chat-completion wire
format, and a deterministic offline stub whose rules mirror the intuitions
the live agents are prompted with (structural similarity predicts similar
scores; simpler candidates win ties). The stub makes the whole agent layer a
pure function of its inputs.
"""

from __future__ import annotations

import json
import logging
import re
import string
import time
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol

import requests

log = logging.getLogger(__name__)

DEFAULT_SYSTEM = "You are an expert analyst of heterogeneous information networks."
PROMPT_NAMES = ("predictor", "selector", "explainer_step1", "explainer_step2")


class BackendError(RuntimeError):
    """Transport or protocol failure talking to a chat backend."""


class ChatBackend(Protocol):
    identity: str

    def complete(self, system: str, user: str, temperature: float = 0.0) -> str: ...


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictorOutput:
    p_hat: float
    c_hat: float


@dataclass(frozen=True)
class ScoredCandidate:
    sentence: str
    p_hat: float
    c_hat: float
    n_nodes: int
    n_edges: int
    key: str


@dataclass(frozen=True)
class SelectorDecision:
    index: int
    rationale: str
    fallback: bool = False


@dataclass(frozen=True)
class EvaluatedStructure:
    key: str
    sentence: str
    metric: str
    value: float

    def to_dict(self) -> dict:
        return {"key": self.key, "sentence": self.sentence, "metric": self.metric, "value": self.value}


@dataclass(frozen=True)
class ExplainerReport:
    target: EvaluatedStructure
    neighbors: tuple[EvaluatedStructure, ...]
    comprehension: str
    attribution: str

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "neighbors": [n.to_dict() for n in self.neighbors],
            "comprehension": self.comprehension,
            "attribution": self.attribution,
        }


@dataclass(frozen=True)
class PoolSample:
    records: tuple  # of (sentence, value)

    @property
    def mean(self) -> float:
        if not self.records:
            return 0.5
        return sum(v for _, v in self.records) / len(self.records)


# ---------------------------------------------------------------------------
# prompt templates and blocks
# ---------------------------------------------------------------------------


class PromptLibrary:
    """Loads the four agent templates from a directory or the packaged set."""

    def __init__(self, directory=None):
        self.templates = {}
        for name in PROMPT_NAMES:
            if directory is not None:
                text = (Path(directory) / f"{name}.txt").read_text(encoding="utf-8")
            else:
                text = (resources.files("hinstruct") / "prompts" / f"{name}.txt").read_text(
                    encoding="utf-8"
                )
            self.templates[name] = string.Template(text)

    def render(self, name: str, **subs) -> str:
        return self.templates[name].substitute(**subs)


def pool_block(sample: PoolSample) -> str:
    if not sample.records:
        return "(no evaluated structures yet)"
    return "\n".join(
        f"RECORD {j}: value={value:.6f} | {sentence}"
        for j, (sentence, value) in enumerate(sample.records)
    )


def predictor_candidate_block(sentences) -> str:
    return "\n".join(f"CANDIDATE {i}: {s}" for i, s in enumerate(sentences))


def selector_candidate_block(candidates) -> str:
    return "\n".join(
        f"CANDIDATE {i}: nodes={c.n_nodes} edges={c.n_edges} "
        f"p={c.p_hat:.6f} c={c.c_hat:.6f} key={c.key} | {c.sentence}"
        for i, c in enumerate(candidates)
    )


def structure_block(entries) -> str:
    return "\n".join(f"STRUCTURE {i}: {e.sentence}" for i, e in enumerate(entries))


def metric_block(entries) -> str:
    return "\n".join(
        f"STRUCTURE {i}: metric={e.metric} value={e.value:.6f} | {e.sentence}"
        for i, e in enumerate(entries)
    )


# ---------------------------------------------------------------------------
# transcripts
# ---------------------------------------------------------------------------


class TranscriptLog:
    """Append-only JSON-lines record of every prompt/response exchange."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.entries = []

    def record(self, agent: str, system: str, user: str, response: str, model: str):
        entry = {
            "agent": agent,
            "model": model,
            "system": system,
            "user": user,
            "response": response,
        }
        self.entries.append(entry)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# sentence similarity used by the stub predictor
# ---------------------------------------------------------------------------


def sentence_clauses(sentence: str) -> Counter:
    """Multiset of clause strings; each clause renders one edge traversal."""
    clauses = Counter()
    for sub in sentence.split(" AND "):
        for part in sub.split(" THAT "):
            clauses[part] += 1
    return clauses


def clause_jaccard(a: str, b: str) -> float:
    ca, cb = sentence_clauses(a), sentence_clauses(b)
    inter = sum((ca & cb).values())
    union = sum((ca | cb).values())
    return inter / union if union else 0.0


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

_RE_RECORD = re.compile(r"^RECORD\s+(\d+):\s*value=([0-9.eE+-]+)\s*\|\s*(.*)$", re.M)
_RE_CAND_PLAIN = re.compile(r"^CANDIDATE\s+(\d+):\s*(.*)$", re.M)
_RE_CAND_SCORED = re.compile(
    r"^CANDIDATE\s+(\d+):\s*nodes=(\d+)\s+edges=(\d+)\s+p=([0-9.eE+-]+)"
    r"\s+c=([0-9.eE+-]+)\s+key=(\S+)\s*\|\s*(.*)$",
    re.M,
)
_RE_STRUCT = re.compile(r"^STRUCTURE\s+(\d+):\s*(.*)$", re.M)
_RE_METRIC = re.compile(r"^STRUCTURE\s+(\d+):\s*metric=(\S+)\s+value=([0-9.eE+-]+)\s*\|\s*(.*)$", re.M)

_RE_PRED_REPLY = re.compile(r"CANDIDATE\s+(\d+)\s*:\s*p\s*=\s*([0-9.eE+-]+)\s*,\s*c\s*=\s*([0-9.eE+-]+)")
_RE_CHOICE_REPLY = re.compile(r"CHOICE\s*:\s*(\d+)")


class StubBackend:
    """Deterministic offline stand-in for a chat model.

    Predictor rule: each candidate inherits the value of its nearest pool
    record by clause-multiset Jaccard similarity, with that similarity as the
    confidence; with an empty pool the prior is (0.5, 0.0). Selector rule:
    highest predicted score, ties to fewer edges, then the smaller canonical
    key. Explainer rule: template reports from the decomposed sentences and
    the score extremes.
    """

    identity = "stub"

    def complete(self, system: str, user: str, temperature: float = 0.0) -> str:
        header = user.lstrip().splitlines()[0].strip() if user.strip() else ""
        if header == "TASK: PREDICT":
            return self._predict(user)
        if header == "TASK: SELECT":
            return self._select(user)
        if header == "TASK: EXPLAIN-STRUCTURE":
            return self._explain_structure(user)
        if header == "TASK: EXPLAIN-ATTRIBUTE":
            return self._explain_attribute(user)
        raise BackendError(f"stub backend cannot serve prompt with header {header!r}")

    def _predict(self, user: str) -> str:
        records = [(m.group(3), float(m.group(2))) for m in _RE_RECORD.finditer(user)]
        candidates = [
            m.group(2)
            for m in _RE_CAND_PLAIN.finditer(user)
            if not m.group(2).startswith(("nodes=", "p="))
        ]
        lines = []
        for i, sentence in enumerate(candidates):
            if not records:
                p, c = 0.5, 0.0
            else:
                sims = [clause_jaccard(sentence, rec_sentence) for rec_sentence, _ in records]
                best = max(range(len(records)), key=lambda j: (sims[j], -j))
                p, c = records[best][1], sims[best]
            lines.append(f"CANDIDATE {i}: p={p:.6f}, c={c:.6f}")
        return "\n".join(lines)

    def _select(self, user: str) -> str:
        rows = [
            (int(m.group(1)), int(m.group(3)), float(m.group(4)), m.group(6))
            for m in _RE_CAND_SCORED.finditer(user)
        ]
        if not rows:
            raise BackendError("stub selector found no candidates in prompt")
        chosen = min(rows, key=lambda r: (-r[2], r[1], r[3]))[0]
        return (
            f"CHOICE: {chosen}\n"
            "Deterministic pick: highest predicted score, ties broken toward "
            "fewer edges, then the smaller canonical key."
        )

    def _explain_structure(self, user: str) -> str:
        lines = []
        for m in _RE_STRUCT.finditer(user):
            idx, sentence = int(m.group(1)), m.group(2)
            subs = sentence.split(" AND ")
            lines.append(f"STRUCTURE {idx} decomposes into {len(subs)} sub-structure(s):")
            for j, sub in enumerate(subs, start=1):
                lines.append(f"  ({j}) {sub}")
        if not lines:
            raise BackendError("stub explainer found no structures in prompt")
        return "\n".join(lines)

    def _explain_attribute(self, user: str) -> str:
        rows = [
            (int(m.group(1)), float(m.group(3)), m.group(4)) for m in _RE_METRIC.finditer(user)
        ]
        if not rows:
            raise BackendError("stub explainer found no metrics in prompt")
        best = min(rows, key=lambda r: (-r[1], r[0]))
        worst = min(rows, key=lambda r: (r[1], r[0]))

        def unique_clauses(target):
            mine = set(sentence_clauses(target[2]))
            others = set()
            for row in rows:
                if row[0] != target[0]:
                    others |= set(sentence_clauses(row[2]))
            return sorted(mine - others)

        beneficial = unique_clauses(best) or ["none"]
        detrimental = unique_clauses(worst) or ["none"]
        return "\n".join(
            [
                f"Highest score: STRUCTURE {best[0]} (value={best[1]:.6f}); "
                f"lowest score: STRUCTURE {worst[0]} (value={worst[1]:.6f}).",
                f"Beneficial sub-structures, unique to STRUCTURE {best[0]}: "
                + "; ".join(beneficial),
                f"Detrimental sub-structures, unique to STRUCTURE {worst[0]}: "
                + "; ".join(detrimental),
            ]
        )


def make_stub_backend() -> StubBackend:
    """Factory for the offline backend; its rules need no seed."""
    return StubBackend()


@dataclass
class HttpChatBackend:
    """Client for an HTTP chat-completion endpoint.

    Sends ``{"model", "messages": [{"role", "content"}, ...], "temperature"}``
    and reads the first choice's message content.
    """

    url: str
    model: str
    api_key: str | None = None
    temperature: float = 0.0
    timeout: float = 60.0

    @property
    def identity(self) -> str:
        return self.model

    def complete(self, system: str, user: str, temperature: float | None = None) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature if temperature is None else temperature,
        }
        try:
            response = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            response.raise_for_status()
            return response.json()["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"chat completion failed: {exc}") from exc


# ---------------------------------------------------------------------------
# agent operations
# ---------------------------------------------------------------------------


def _clamp01(value: float, what: str) -> float:
    if 0.0 <= value <= 1.0:
        return value
    log.warning("%s value %s outside [0, 1]; clamped", what, value)
    return min(1.0, max(0.0, value))


def _call(backend, agent, user, transcript, retries, backoff):
    last_error = None
    for attempt in range(max(1, retries)):
        try:
            response = backend.complete(DEFAULT_SYSTEM, user)
        except BackendError as exc:
            last_error = exc
            log.warning("%s backend call failed (attempt %d): %s", agent, attempt + 1, exc)
            if attempt + 1 < retries and backoff > 0:
                time.sleep(backoff * 2**attempt)
            continue
        if transcript is not None:
            transcript.record(agent, DEFAULT_SYSTEM, user, response, backend.identity)
        return response
    raise BackendError(f"{agent} backend failed after {retries} attempts: {last_error}")


def predict_candidates(
    backend,
    sentences,
    sample: PoolSample,
    prompts: PromptLibrary,
    retries: int = 3,
    backoff: float = 1.0,
    per_candidate: bool = False,
    transcript: TranscriptLog | None = None,
) -> list[PredictorOutput]:
    """Ask the predictor for a (score, confidence) estimate per candidate.

    Entries the backend leaves malformed after all retries default to
    (mean of the pool sample, 0.0).
    """
    if not sentences:
        raise ValueError("empty candidate list")
    if per_candidate:
        out = []
        for sentence in sentences:
            out.extend(
                predict_candidates(
                    backend, [sentence], sample, prompts,
                    retries=retries, backoff=backoff, transcript=transcript,
                )
            )
        return out

    user = prompts.render(
        "predictor",
        pool_block=pool_block(sample),
        candidate_block=predictor_candidate_block(sentences),
    )
    parsed: dict[int, PredictorOutput] = {}
    for attempt in range(max(1, retries)):
        response = _call(backend, "predictor", user, transcript, retries, backoff)
        for m in _RE_PRED_REPLY.finditer(response):
            idx = int(m.group(1))
            if 0 <= idx < len(sentences) and idx not in parsed:
                try:
                    p = _clamp01(float(m.group(2)), "predicted score")
                    c = _clamp01(float(m.group(3)), "confidence")
                except ValueError:
                    continue
                parsed[idx] = PredictorOutput(p, c)
        if len(parsed) == len(sentences):
            break
        log.warning(
            "predictor reply covered %d/%d candidates (attempt %d)",
            len(parsed), len(sentences), attempt + 1,
        )
    default = PredictorOutput(_clamp01(sample.mean, "pool mean"), 0.0)
    return [parsed.get(i, default) for i in range(len(sentences))]


def select_candidate(
    backend,
    candidates,
    prompts: PromptLibrary,
    retries: int = 3,
    backoff: float = 1.0,
    transcript: TranscriptLog | None = None,
) -> SelectorDecision:
    """Ask the selector to pick one candidate; falls back to the stub rule
    (and flags the decision) when no parseable index comes back."""
    if not candidates:
        raise ValueError("empty candidate list")
    user = prompts.render("selector", candidate_block=selector_candidate_block(candidates))
    for attempt in range(max(1, retries)):
        response = _call(backend, "selector", user, transcript, retries, backoff)
        m = _RE_CHOICE_REPLY.search(response)
        if m is not None:
            idx = int(m.group(1))
            if 0 <= idx < len(candidates):
                return SelectorDecision(index=idx, rationale=response, fallback=False)
        log.warning("selector reply had no usable CHOICE line (attempt %d)", attempt + 1)
    idx = stub_selection_rule(candidates)
    return SelectorDecision(
        index=idx,
        rationale="fallback rule: highest predicted score, fewest edges, smallest key",
        fallback=True,
    )


def stub_selection_rule(candidates) -> int:
    return min(
        range(len(candidates)),
        key=lambda i: (-candidates[i].p_hat, candidates[i].n_edges, candidates[i].key),
    )


def explain(
    backend,
    target: EvaluatedStructure,
    neighbors,
    prompts: PromptLibrary,
    retries: int = 3,
    backoff: float = 1.0,
    transcript: TranscriptLog | None = None,
) -> ExplainerReport:
    """Two chained prompts: structural comprehension, then performance
    attribution over the quick-evaluated neighbors."""
    neighbors = tuple(neighbors)
    if not neighbors:
        raise ValueError("explainer needs at least one neighbor")
    entries = (target,) + neighbors
    step1 = prompts.render(
        "explainer_step1",
        n_neighbors=len(neighbors),
        structure_block=structure_block(entries),
    )
    comprehension = _call(backend, "explainer", step1, transcript, retries, backoff)
    step2 = prompts.render("explainer_step2", metric_block=metric_block(entries))
    attribution = _call(backend, "explainer", step2, transcript, retries, backoff)
    return ExplainerReport(
        target=target,
        neighbors=neighbors,
        comprehension=comprehension,
        attribution=attribution,
    )
