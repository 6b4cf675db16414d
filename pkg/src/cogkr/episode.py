"""One-shot episodes: a support pair, a query, and the edges hidden while solving it."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .kg import KnowledgeGraph, TaskSplit, inverse
from .nn import Tape
from .reasoner import Rollout, RolloutConfig, rollout
from .summary import summarize_pair


@dataclass(frozen=True)
class Episode:
    relation: str
    support: tuple[int, int]
    query: tuple[int, int]
    mask: tuple[tuple[int, int, int], ...] = field(default=())

    @property
    def head(self) -> int:
        return self.query[0]

    @property
    def target(self) -> int:
        return self.query[1]


def derive_rng(seed: int, label: str, *keys: int) -> np.random.Generator:
    """Independent stream for ``(seed, label, keys)``; stable across runs and platforms."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode()), *[int(k) for k in keys]])


def leakage_mask(kg: KnowledgeGraph, split: TaskSplit, relation: str,
                 support: tuple[int, int], query: tuple[int, int]) -> tuple[tuple[int, int, int], ...]:
    """Query and support edges of a relation merged into the KG (inverses are implied)."""
    base = split.relation_ids.get(relation)
    if base is None:
        return ()
    rel_id = 2 * base
    out = []
    for h, t in (query, support):
        if kg.has_edge(h, rel_id, t) and (h, rel_id, t) not in out:
            out.append((h, rel_id, t))
    return tuple(out)


def make_episode(kg: KnowledgeGraph, split: TaskSplit, relation: str,
                 support: tuple[int, int], query: tuple[int, int]) -> Episode:
    return Episode(relation, support, query, leakage_mask(kg, split, relation, support, query))


def run_episode(kg, episode: Episode, tape: Tape, rng: np.random.Generator | None,
                config: RolloutConfig = RolloutConfig(), forced=None) -> Rollout:
    """Summarize the support pair and build the cognitive graph for the query head."""
    view = kg.mask_edges(episode.mask) if episode.mask else kg
    summary = summarize_pair(view, *episode.support, tape, cap=config.degree_cap)
    return rollout(view, episode.head, summary, tape, rng, config, forced=forced)


def masked_edges(episode: Episode) -> set[tuple[int, int, int]]:
    out = set()
    for h, r, t in episode.mask:
        out.add((h, r, t))
        out.add((t, inverse(r), h))
    return out
