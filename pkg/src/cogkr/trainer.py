"""Training: REINFORCE for graph building plus cross-entropy for answer scoring.

Each episode contributes ``r * grad log pi(G) + 1[t in G] * grad log q(t | G)``
with ``r = 1[t in G]``. Gradients are averaged over the batch and applied
with Adam (separate learning rates for embeddings and other weights).
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .episode import Episode, derive_rng, make_episode, run_episode
from .evaluate import evaluate
from .kg import KnowledgeGraph, TaskSplit
from .model import ModelDims, init_params
from .nn import EMBEDDING, OTHER, GradBuffer, NumericError, ParameterStore, Tape, adam_step
from .reasoner import RolloutConfig, log_q

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr_embeddings: float = 1e-5
    lr_other: float = 1e-4
    weight_decay: float = 1e-4
    degree_cap: int = 256
    max_nodes: int = 128
    action_budget: int = 5
    emb_dim: int = 100
    hidden_dim: int = 100
    steps: int = 10000
    eval_every: int = 100
    patience: int = 10
    eval_seed: int = 0
    eval_max_queries: int = 0
    seed: int = 0
    baseline: bool = False
    baseline_decay: float = 0.9
    clip_norm: float = 0.0
    frontier: str = "fifo"
    dtype: str = "float64"
    threads: int = 1
    pretrain_epochs: int = 0
    pretrain_negatives: int = 4
    pretrain_lr: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in ("int", "float") and isinstance(value, (int, float)) and value < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if self.batch_size < 1 or self.emb_dim < 1 or self.hidden_dim < 1:
            raise ValueError("batch_size, emb_dim and hidden_dim must be positive")

    @property
    def rollout(self) -> RolloutConfig:
        return RolloutConfig(self.degree_cap, self.max_nodes, self.action_budget, self.frontier)

    @property
    def lr_by_group(self) -> dict:
        return {EMBEDDING: self.lr_embeddings, OTHER: self.lr_other}

    def to_dict(self) -> dict:
        return asdict(self)


# -- episodes -----------------------------------------------------------------

def sample_episode(kg: KnowledgeGraph, split: TaskSplit, rng: np.random.Generator,
                   section: str = "train") -> Episode:
    """Uniform relation, then distinct support and query pairs from it."""
    names = [n for n in split.relations(section) if len(split.tasks[section][n]) >= 2]
    if not names:
        raise ValueError(f"no {section} relation has two or more pairs")
    name = names[rng.integers(len(names))]
    pairs = split.tasks[section][name]
    i, j = rng.choice(len(pairs), size=2, replace=False)
    return make_episode(kg, split, name, pairs[i], pairs[j])


def episode_loss(result, target: int, tape: Tape, advantage: float | None = None):
    """Surrogate loss whose gradient is the negated episode update, or None if it is zero."""
    reward = float(target in result.graph)
    adv = reward if advantage is None else advantage
    terms = []
    if adv != 0.0:
        terms.append(tape.scale(result.log_pi(tape), -adv))
    if reward:
        terms.append(tape.scale(log_q(result, target, tape), -1.0))
    if not terms:
        return None
    return terms[0] if len(terms) == 1 else tape.add(*terms)


def episode_gradients(episode: Episode, kg, store: ParameterStore, rng: np.random.Generator,
                      config: RolloutConfig = RolloutConfig(), baseline: float | None = None):
    """Run one episode and return ``(GradBuffer, reward, diagnostics)``.

    The buffer holds the gradient of the loss (the negated ascent direction).
    """
    tape = Tape(store)
    result = run_episode(kg, episode, tape, rng, config)
    reward = float(episode.target in result.graph)
    advantage = None if baseline is None else reward - baseline
    loss = episode_loss(result, episode.target, tape, advantage)
    buf = GradBuffer() if loss is None else tape.backward(loss)
    lq = None
    if reward:
        s = result.prediction.scores.value
        idx = result.graph.nodes.index(episode.target)
        lq = float(s[idx] - s.max() - np.log(np.exp(s - s.max()).sum()))
    diag = {"log_q": lq, "log_pi": result.log_pi_value(), "nodes": result.graph.size,
            "edges": len(result.graph.edges)}
    return buf, reward, diag


# -- training loop ------------------------------------------------------------

def initial_params(kg: KnowledgeGraph, config: TrainConfig, embeddings=None) -> ParameterStore:
    dims = ModelDims(kg.n_entities, kg.n_relation_ids, config.emb_dim, config.hidden_dim)
    if embeddings is None and config.pretrain_epochs:
        embeddings = pretrain_distmult(kg, config.emb_dim, config.pretrain_epochs, config.pretrain_negatives,
                                       derive_rng(config.seed, "distmult"), lr=config.pretrain_lr)
    return init_params(dims, derive_rng(config.seed, "init"), np.dtype(config.dtype), embeddings)


@dataclass
class TrainResult:
    best: ParameterStore
    final: ParameterStore
    log: list[dict]
    best_mrr: float
    steps: int


def train(kg: KnowledgeGraph, split: TaskSplit, config: TrainConfig, store: ParameterStore | None = None,
          on_record=None) -> TrainResult:
    """Minibatch training with periodic validation MRR and early stopping.

    Returns the best-validation snapshot (not the last) along with the final one.
    """
    store = initial_params(kg, config) if store is None else store
    rcfg = config.rollout
    best = store.copy()
    best_mrr = -1.0
    bad_evals = 0
    log: list[dict] = []
    baseline = 0.0 if config.baseline else None
    start = time.perf_counter()
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    max_q = config.eval_max_queries or None

    def one(step, b):
        rng = derive_rng(config.seed, "episode", step, b)
        episode = sample_episode(kg, split, rng)
        return episode_gradients(episode, kg, store, rng, rcfg, baseline)

    step = 0
    try:
        for step in range(1, config.steps + 1):
            jobs = [(step, b) for b in range(config.batch_size)]
            outs = list(pool.map(lambda a: one(*a), jobs)) if pool else [one(*a) for a in jobs]
            batch = GradBuffer()
            for buf, _, _ in outs:
                batch.merge(buf)
            store.apply(batch, scale=1.0 / config.batch_size)
            adam_step(store, config.lr_by_group, config.weight_decay, clip_norm=config.clip_norm or None)
            if not all(np.all(np.isfinite(p.value)) for _, p in store.items()):
                raise NumericError(f"parameters diverged at step {step}")
            rewards = [r for _, r, _ in outs]
            logqs = [d["log_q"] for _, _, d in outs if d["log_q"] is not None]
            if baseline is not None:
                baseline = config.baseline_decay * baseline + (1 - config.baseline_decay) * float(np.mean(rewards))
            record = {"step": step, "mean_reward": float(np.mean(rewards)),
                      "mean_logq": float(np.mean(logqs)) if logqs else None, "val_MRR": None}
            if config.eval_every and step % config.eval_every == 0 and split.relations("valid"):
                report = evaluate(kg, split, "valid", store, rcfg, seed=config.eval_seed, max_queries=max_q)
                record["val_MRR"] = report.mrr
                record["val_hits1"] = report.hits[1]
                if report.mrr > best_mrr:
                    best_mrr, best, bad_evals = report.mrr, store.copy(), 0
                else:
                    bad_evals += 1
            record["wallclock"] = time.perf_counter() - start
            log.append(record)
            if on_record:
                on_record(record)
            if config.patience and bad_evals >= config.patience:
                logger.info("early stop at step %d (best val MRR %.4f)", step, best_mrr)
                break
    finally:
        if pool:
            pool.shutdown()
    if best_mrr < 0:
        best = store.copy()
    return TrainResult(best, store, log, best_mrr, step)


def write_log(path: str, log: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- DistMult pretraining -----------------------------------------------------

def distmult_score(ent: np.ndarray, rel: np.ndarray, h, r, t) -> np.ndarray:
    return np.sum(ent[h] * rel[r] * ent[t], axis=-1)


def distmult_loss(store: ParameterStore, triples: np.ndarray, corrupt_tails: np.ndarray):
    """Mean logistic loss of positives vs corrupted tails; returns ``(loss, GradBuffer)``.

    ``triples`` is ``(B, 3)`` with directed relation ids, ``corrupt_tails`` is ``(B, k)``.
    """
    ent, rel = store["entity_emb"], store["relation_emb"]
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    B, k = corrupt_tails.shape
    hr = ent[h] * rel[r]
    pos = np.sum(hr * ent[t], axis=1)
    neg = np.einsum("bd,bkd->bk", hr, ent[corrupt_tails])
    # -log sigmoid(x) = logaddexp(0, -x)
    loss = (np.logaddexp(0, -pos).sum() + np.logaddexp(0, neg).sum()) / B
    dpos = -np.exp(-np.logaddexp(0, pos)) / B          # d/dpos of -log sigmoid(pos)
    dneg = np.exp(-np.logaddexp(0, -neg)) / B          # d/dneg of -log sigmoid(-neg)
    d_hr = dpos[:, None] * ent[t] + np.einsum("bk,bkd->bd", dneg, ent[corrupt_tails])
    buf = GradBuffer()
    buf.add_rows("entity_emb", h, d_hr * rel[r])
    buf.add_rows("relation_emb", r, d_hr * ent[h])
    buf.add_rows("entity_emb", t, dpos[:, None] * hr)
    buf.add_rows("entity_emb", corrupt_tails.reshape(-1), (dneg[:, :, None] * hr[:, None, :]).reshape(-1, hr.shape[1]))
    return float(loss), buf


def pretrain_distmult(kg: KnowledgeGraph, dim: int, epochs: int, negatives: int, rng: np.random.Generator,
                      lr: float = 0.01, batch_size: int = 512, n_relation_ids: int | None = None) -> dict:
    """Train DistMult tables over every directed edge; returns ``entity_emb``/``relation_emb``."""
    n_rel = kg.n_relation_ids if n_relation_ids is None else n_relation_ids
    store = ParameterStore()
    store.add("entity_emb", rng.uniform(-0.1, 0.1, size=(kg.n_entities, dim)), EMBEDDING)
    store.add("relation_emb", rng.uniform(-0.1, 0.1, size=(n_rel, dim)), EMBEDDING)
    src = np.repeat(np.arange(kg.n_entities), np.diff(kg.offsets))
    edges = np.stack([src, kg.adj_rel, kg.adj_ent], axis=1)
    for epoch in range(epochs):
        order = rng.permutation(len(edges))
        total = 0.0
        for lo in range(0, len(edges), batch_size):
            batch = edges[order[lo:lo + batch_size]]
            neg = rng.integers(kg.n_entities, size=(len(batch), negatives))
            loss, buf = distmult_loss(store, batch, neg)
            total += loss * len(batch)
            store.apply(buf)
            adam_step(store, {EMBEDDING: lr}, 0.0)
        logger.debug("distmult epoch %d loss %.4f", epoch, total / max(len(edges), 1))
    return {"entity_emb": store["entity_emb"].copy(), "relation_emb": store["relation_emb"].copy()}
