"""One-shot evaluation: Hits@1/5/10, MRR and a breakdown by head-to-tail distance."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .episode import derive_rng, make_episode, run_episode
from .kg import KnowledgeGraph, TaskSplit, shortest_distance
from .nn import ParameterStore, Tape
from .reasoner import Rollout, RolloutConfig

HITS_AT = (1, 5, 10)
DISTANCE_HORIZON = 4
FAR = "5+"


def rank_answer(rollout: Rollout, target: int, candidates=None, exclude=()) -> int | None:
    """1-based rank of ``target`` among scored graph nodes, or ``None`` when absent.

    Ranking is by descending score with ties going to the smaller entity id.
    ``exclude`` drops other known answers (filtered ranking).
    """
    graph = rollout.graph
    if target not in graph or (candidates is not None and target not in candidates):
        return None
    scores = rollout.prediction.scores.value
    own = scores[graph.nodes.index(target)]
    rank = 1
    for e, s in zip(graph.nodes, scores):
        if e == target or e in exclude or (candidates is not None and e not in candidates):
            continue
        if s > own or (s == own and e < target):
            rank += 1
    return rank


def distance_bucket(distance: int | None) -> str:
    return FAR if distance is None else str(distance)


@dataclass
class QueryResult:
    relation: str
    head: int
    tail: int
    rank: int | None
    bucket: str

    @property
    def reciprocal_rank(self) -> float:
        return 0.0 if self.rank is None else 1.0 / self.rank


@dataclass
class MetricsReport:
    hits: dict[int, float]
    mrr: float
    n_queries: int
    absent_fraction: float
    buckets: dict[str, dict] = field(default_factory=dict)
    per_query: list[QueryResult] = field(default_factory=list, repr=False)

    @classmethod
    def from_results(cls, results: list[QueryResult]) -> "MetricsReport":
        n = len(results)
        hits = {k: _hits(results, k) for k in HITS_AT}
        mrr = sum(r.reciprocal_rank for r in results) / n if n else 0.0
        absent = sum(r.rank is None for r in results) / n if n else 0.0
        buckets = {}
        for key in sorted({r.bucket for r in results}, key=lambda b: (b == FAR, b)):
            sub = [r for r in results if r.bucket == key]
            buckets[key] = {
                "n_queries": len(sub),
                "hits": {str(k): _hits(sub, k) for k in HITS_AT},
                "mrr": sum(r.reciprocal_rank for r in sub) / len(sub),
            }
        return cls(hits, mrr, n, absent, buckets, results)

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "hits": {str(k): v for k, v in self.hits.items()},
            "mrr": self.mrr,
            "absent_fraction": self.absent_fraction,
            "buckets": self.buckets,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = f"{'bucket':>8} {'n':>6} {'H@1':>7} {'H@5':>7} {'H@10':>7} {'MRR':>7}"
        lines = [head, "-" * len(head)]
        rows = [("all", self.n_queries, {str(k): v for k, v in self.hits.items()}, self.mrr)]
        rows += [(k, b["n_queries"], b["hits"], b["mrr"]) for k, b in self.buckets.items()]
        for name, n, hits, mrr in rows:
            lines.append(f"{name:>8} {n:>6} {hits['1']:>7.4f} {hits['5']:>7.4f} {hits['10']:>7.4f} {mrr:>7.4f}")
        lines.append(f"answer not in graph: {self.absent_fraction:.4f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["relation", "head", "tail", "rank", "bucket"])
            for r in self.per_query:
                w.writerow([r.relation, r.head, r.tail, "" if r.rank is None else r.rank, r.bucket])


REPORT_SCHEMA = {
    "type": "object",
    "required": ["n_queries", "hits", "mrr", "absent_fraction", "buckets"],
    "properties": {
        "n_queries": {"type": "integer", "minimum": 0},
        "hits": {
            "type": "object",
            "required": ["1", "5", "10"],
            "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "mrr": {"type": "number", "minimum": 0, "maximum": 1},
        "absent_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "buckets": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["n_queries", "hits", "mrr"],
            },
        },
    },
}


def _hits(results, k):
    if not results:
        return 0.0
    return sum(r.rank is not None and r.rank <= k for r in results) / len(results)


def eval_queries(split: TaskSplit, section: str) -> list[tuple[str, tuple[int, int], tuple[int, int]]]:
    out = []
    for name in split.relations(section):
        support = split.support(name)
        out.extend((name, support, q) for q in split.queries(name))
    return out


def evaluate(kg: KnowledgeGraph, split: TaskSplit, section: str, store: ParameterStore,
             config: RolloutConfig = RolloutConfig(), seed: int = 0, filtered: bool = False,
             add_support_edge: bool = False, threads: int = 1, max_queries: int | None = None) -> MetricsReport:
    """One seeded rollout per query; the support triple of each relation is held out."""
    queries = eval_queries(split, section)
    if max_queries is not None:
        queries = queries[:max_queries]
    known = {}
    if filtered:
        for name in split.relations(section):
            for h, t in split.pairs(name):
                known.setdefault((name, h), set()).add(t)

    graphs = {}
    if add_support_edge:
        for name, support, _ in queries:
            if name not in graphs:
                graphs[name] = kg.with_support_edge(*support)

    def one(i):
        name, support, (h, t) = queries[i]
        graph = graphs.get(name, kg)
        episode = make_episode(graph, split, name, support, (h, t))
        tape = Tape(store, record=False)
        result = run_episode(graph, episode, tape, derive_rng(seed, "eval", i), config)
        exclude = known.get((name, h), set()) - {t} if filtered else ()
        rank = rank_answer(result, t, exclude=exclude)
        bucket = distance_bucket(shortest_distance(kg, h, t, DISTANCE_HORIZON))
        return QueryResult(name, h, t, rank, bucket)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(len(queries))))
    else:
        results = [one(i) for i in range(len(queries))]
    return MetricsReport.from_results(results)
