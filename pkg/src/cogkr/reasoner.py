"""Cognitive-graph construction and answer prediction for one query.

A rollout starts from the query head, repeatedly pops a node from the
frontier, samples outgoing edges from a multinomial over its candidates
(plus a "no action" entry), adds them to the graph, and refreshes the hidden
state of every node whose ingoing edges changed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kg import DEFAULT_DEGREE_CAP
from .nn import Tape, Var
from .summary import RelationSummary

FIFO = "fifo"
PRIORITY = "priority"


@dataclass(frozen=True)
class RolloutConfig:
    degree_cap: int = DEFAULT_DEGREE_CAP
    max_nodes: int = 128
    action_budget: int = 5
    frontier: str = FIFO

    def __post_init__(self):
        if self.degree_cap < 1 or self.max_nodes < 1 or self.action_budget < 1:
            raise ValueError("degree_cap, max_nodes and action_budget must be >= 1")
        if self.frontier not in (FIFO, PRIORITY):
            raise ValueError(f"unknown frontier discipline {self.frontier!r}")


@dataclass
class CognitiveGraph:
    nodes: list[int]
    edges: list[tuple[int, int, int]] = field(default_factory=list)
    hidden: dict[int, Var] = field(default_factory=dict)
    ingoing: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    frontier: deque = field(default_factory=deque)
    explored: set[int] = field(default_factory=set)

    def __post_init__(self):
        self.node_set = set(self.nodes)

    def __contains__(self, e: int) -> bool:
        return e in self.node_set

    def add_node(self, e: int) -> None:
        self.nodes.append(e)
        self.node_set.add(e)
        self.frontier.append(e)

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass
class Step:
    node: int
    relations: np.ndarray
    entities: np.ndarray
    probs: np.ndarray
    counts: np.ndarray
    log_probs: Var

    @property
    def n_candidates(self) -> int:
        return len(self.entities) + 1


@dataclass
class Prediction:
    scores: Var
    q: np.ndarray
    answer: int

    def score_of(self, graph: CognitiveGraph) -> dict[int, float]:
        return dict(zip(graph.nodes, self.scores.value.tolist()))


@dataclass
class Rollout:
    head: int
    graph: CognitiveGraph
    steps: list[Step]
    summary: RelationSummary
    prediction: Prediction | None = None

    @property
    def action_log(self) -> list[np.ndarray]:
        return [s.counts for s in self.steps]

    @property
    def n_scored(self) -> int:
        """Candidate-scoring operations performed, no-action entries included."""
        return sum(s.n_candidates for s in self.steps)

    def log_pi(self, tape: Tape) -> Var:
        """Sum of log-probabilities of every logged draw."""
        terms = [tape.weighted_sum(s.log_probs, s.counts) for s in self.steps]
        return tape.add(*terms)

    def log_pi_value(self) -> float:
        return float(sum(np.dot(s.counts, s.log_probs.value) for s in self.steps))


def init_graph(head: int, tape: Tape) -> CognitiveGraph:
    graph = CognitiveGraph([head])
    graph.frontier.append(head)
    graph.ingoing[head] = []
    graph.hidden[head] = update_hidden(graph, head, tape)
    return graph


def update_hidden(graph: CognitiveGraph, e: int, tape: Tape) -> Var:
    """sigmoid(W_4 v_e + mean_k W_3 [v_{r_k}, x_{e_k}] + b_4) over ingoing graph edges."""
    terms = [tape.matvec(tape.param("W_4"), tape.rows("entity_emb", e)), tape.param("b_4")]
    incoming = graph.ingoing.get(e, [])
    if incoming:
        rels = np.array([r for r, _ in incoming])
        d = tape.store["b_4"].shape[0]
        srcs = tape.stack([graph.hidden[s] for _, s in incoming], d)
        msg = tape.concat([tape.rows("relation_emb", rels), srcs])
        terms.append(tape.matvec(tape.param("W_3"), tape.mean_rows(msg)))
    return tape.sigmoid(tape.add(*terms))


def score_actions(graph: CognitiveGraph, e_i: int, summary: RelationSummary, kg, tape: Tape,
                  cap: int | None = DEFAULT_DEGREE_CAP):
    """Candidate edges of ``e_i`` and the log-softmax over them plus "no action" (last).

    Returns ``(relations, entities, log_probs)``.
    """
    if e_i in graph.explored:
        raise ValueError(f"node {e_i} already explored")
    if e_i not in graph:
        raise ValueError(f"node {e_i} not in graph")
    rels, ents = kg.outgoing_edges(e_i, cap)
    d = tape.store["b_4"].shape[0]
    no_action = tape.param("no_action")
    if len(ents):
        hid = tape.stack([graph.hidden.get(int(e)) for e in ents], d)
        cand = tape.concat([tape.rows("entity_emb", ents), tape.rows("relation_emb", rels), hid])
        no_row = tape.stack([no_action], no_action.value.shape[0])
        rows = tape.vstack(cand, no_row)
    else:
        rows = tape.stack([no_action], no_action.value.shape[0])
    keys = tape.sigmoid(tape.matmat(rows, tape.param("W_1")))
    query = tape.sigmoid(tape.matvec(tape.param("W_2"), tape.concat([graph.hidden[e_i], summary.vector])))
    logits = tape.matvec(keys, query)
    return rels, ents, tape.log_softmax(logits)


def sample_actions(p: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Counts of ``n`` independent draws with replacement."""
    if n < 1:
        raise ValueError("action budget must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    return rng.multinomial(n, p / p.sum())


def apply_actions(graph: CognitiveGraph, e_i: int, chosen: Sequence[tuple[int, int]], tape: Tape,
                  max_nodes: int) -> None:
    """Add chosen ``(relation, entity)`` edges from ``e_i`` and refresh affected hidden states.

    Edges to new entities are dropped once the graph holds ``max_nodes`` nodes.
    """
    for r, e in chosen:
        if e not in graph:
            if graph.size >= max_nodes:
                continue
            graph.add_node(e)
        graph.edges.append((e_i, r, e))
        graph.ingoing.setdefault(e, []).append((r, e_i))
        graph.hidden[e] = update_hidden(graph, e, tape)
    graph.explored.add(e_i)


def _pop(graph: CognitiveGraph, summary: RelationSummary, tape: Tape, discipline: str) -> int:
    if discipline == FIFO or len(graph.frontier) == 1:
        return graph.frontier.popleft()
    W_p = tape.store["W_p"]
    d = W_p.shape[0] // 2
    scores = [float(W_p[:d] @ graph.hidden[e].value) for e in graph.frontier]
    best = int(np.argmax(scores))
    e = graph.frontier[best]
    del graph.frontier[best]
    return e


def rollout(kg, head: int, summary: RelationSummary, tape: Tape, rng: np.random.Generator | None,
            config: RolloutConfig = RolloutConfig(), forced: Sequence[np.ndarray] | None = None) -> Rollout:
    """Build the cognitive graph for ``head`` and score its nodes.

    ``forced`` replays logged draw counts instead of sampling, which makes the
    result a deterministic function of the parameters.
    """
    graph = init_graph(head, tape)
    steps: list[Step] = []
    while graph.frontier:
        e_i = _pop(graph, summary, tape, config.frontier)
        rels, ents, logp = score_actions(graph, e_i, summary, kg, tape, config.degree_cap)
        probs = np.exp(logp.value)
        if forced is not None:
            counts = np.asarray(forced[len(steps)])
            if counts.shape != probs.shape:
                raise ValueError("forced action counts do not match candidates")
        else:
            counts = sample_actions(probs, config.action_budget, rng)
        steps.append(Step(e_i, rels, ents, probs, counts, logp))
        chosen = [(int(rels[k]), int(ents[k])) for k in np.flatnonzero(counts[:-1])]
        apply_actions(graph, e_i, chosen, tape, config.max_nodes)
    if forced is not None and len(forced) != len(steps):
        raise ValueError("forced action log longer than the rollout")
    result = Rollout(head, graph, steps, summary)
    result.prediction = predict(graph, summary, tape)
    return result


def predict(graph: CognitiveGraph, summary: RelationSummary, tape: Tape) -> Prediction:
    """Scores ``W_p [x_e, omega]`` per node, softmax over nodes, argmax (ties -> smallest id)."""
    d = summary.vector.value.shape[0]
    hid = tape.stack([graph.hidden[e] for e in graph.nodes], d)
    rel = tape.stack([summary.vector] * graph.size, d)
    scores = tape.matvec(tape.concat([hid, rel]), tape.param("W_p"))
    s = scores.value
    q = np.exp(s - s.max())
    q /= q.sum()
    best = s.max()
    answer = min(e for e, v in zip(graph.nodes, s) if v == best)
    return Prediction(scores, q, answer)


def log_q(rollout: Rollout, target: int, tape: Tape) -> Var | None:
    """Log answer probability of ``target`` within the graph, or None when absent."""
    if target not in rollout.graph:
        return None
    idx = rollout.graph.nodes.index(target)
    ls = tape.log_softmax(rollout.prediction.scores)
    onehot = np.zeros(rollout.graph.size)
    onehot[idx] = 1.0
    return tape.weighted_sum(ls, onehot)


def ranked_nodes(rollout: Rollout) -> list[tuple[int, float]]:
    """Nodes by descending score, ties by ascending entity id."""
    pairs = zip(rollout.graph.nodes, rollout.prediction.scores.value.tolist())
    return sorted(pairs, key=lambda x: (-x[1], x[0]))
