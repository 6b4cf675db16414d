"""Background knowledge graph: vocabularies, inverse-augmented adjacency, masking, BFS.

Relation ids are interleaved: base relation ``k`` has id ``2k`` and its inverse
``2k + 1``. Adjacency is stored CSR-style and each entity's slice is sorted by
``(relation_id, entity_id)``.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DEGREE_CAP = 256
INVERSE_SUFFIX = "_inv"
SUPPORT_RELATION = "<support>"


class DataError(ValueError):
    """Malformed dataset input."""


def inverse(rel_id: int) -> int:
    return rel_id ^ 1


class KnowledgeGraph:
    """Immutable directed multigraph with forward and inverse edges.

    Build with :meth:`from_triples` (names) or :meth:`from_ids`.
    """

    def __init__(self, entities: Sequence[str], relations: Sequence[str], triples: np.ndarray,
                 duplicates: int = 0):
        self.entities = list(entities)
        self.relations = list(relations)
        self.entity_index = {name: i for i, name in enumerate(self.entities)}
        self.relation_index = {name: i for i, name in enumerate(self.relations)}
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.triples = triples
        self.duplicates = duplicates
        self._check_ranges()
        self._build_adjacency()

    # -- construction -----------------------------------------------------

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]],
                     entities: Sequence[str] = (), relations: Sequence[str] = ()) -> "KnowledgeGraph":
        """Assign ids by first appearance, after any pre-seeded vocabulary."""
        ent = {name: i for i, name in enumerate(entities)}
        rel = {name: i for i, name in enumerate(relations)}
        seen = set()
        rows = []
        dups = 0
        for h, r, t in triples:
            for name in (h, t):
                if name not in ent:
                    ent[name] = len(ent)
            if r not in rel:
                rel[r] = len(rel)
            key = (ent[h], rel[r], ent[t])
            if key in seen:
                dups += 1
                continue
            seen.add(key)
            rows.append(key)
        return cls(list(ent), list(rel), np.array(rows, dtype=np.int64).reshape(-1, 3), dups)

    @classmethod
    def from_ids(cls, n_entities: int, n_relations: int, triples, entity_names=None,
                 relation_names=None) -> "KnowledgeGraph":
        """Triples use base relation ids ``0..n_relations-1``; duplicates are dropped."""
        arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if len(arr):
            _, first = np.unique(arr, axis=0, return_index=True)
            keep = np.sort(first)
            dups = len(arr) - len(keep)
            arr = arr[keep]
        else:
            dups = 0
        entity_names = entity_names or [f"e{i}" for i in range(n_entities)]
        relation_names = relation_names or [f"r{i}" for i in range(n_relations)]
        return cls(entity_names, relation_names, arr, dups)

    def _check_ranges(self) -> None:
        if not len(self.triples):
            return
        e, r = self.n_entities, self.n_relations
        if (self.triples < 0).any() or self.triples[:, [0, 2]].max() >= e or self.triples[:, 1].max() >= r:
            raise DataError("triple id out of range")

    def _build_adjacency(self) -> None:
        t = self.triples
        src = np.concatenate([t[:, 0], t[:, 2]])
        rel = np.concatenate([2 * t[:, 1], 2 * t[:, 1] + 1])
        dst = np.concatenate([t[:, 2], t[:, 0]])
        order = np.lexsort((dst, rel, src))
        src, rel, dst = src[order], rel[order], dst[order]
        self.offsets = np.zeros(self.n_entities + 1, dtype=np.int64)
        np.add.at(self.offsets, src + 1, 1)
        np.cumsum(self.offsets, out=self.offsets)
        self.adj_rel = rel
        self.adj_ent = dst

    # -- vocabulary -------------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        """Number of base relations."""
        return len(self.relations)

    @property
    def n_relation_ids(self) -> int:
        """Number of directed relation ids (base + inverse)."""
        return 2 * len(self.relations)

    @property
    def triple_count(self) -> int:
        return len(self.triples)

    @property
    def n_edges(self) -> int:
        return len(self.adj_ent)

    def relation_name(self, rel_id: int) -> str:
        if rel_id >= self.n_relation_ids:
            return SUPPORT_RELATION + (INVERSE_SUFFIX if rel_id % 2 else "")
        base = self.relations[rel_id // 2]
        return base + INVERSE_SUFFIX if rel_id % 2 else base

    def relation_id(self, name: str) -> int:
        """Directed id for a base name or ``name_inv``."""
        if name in self.relation_index:
            return 2 * self.relation_index[name]
        if name.endswith(INVERSE_SUFFIX) and name[: -len(INVERSE_SUFFIX)] in self.relation_index:
            return 2 * self.relation_index[name[: -len(INVERSE_SUFFIX)]] + 1
        raise KeyError(name)

    def entity_id(self, name: str) -> int:
        return self.entity_index[name]

    # -- queries ----------------------------------------------------------

    def _check_entity(self, e: int) -> None:
        if not 0 <= e < self.n_entities:
            raise IndexError(f"entity id {e} out of range [0, {self.n_entities})")

    def degree(self, e: int) -> int:
        self._check_entity(e)
        return int(self.offsets[e + 1] - self.offsets[e])

    def neighbors(self, e: int) -> tuple[np.ndarray, np.ndarray]:
        """All outgoing (relation_ids, entity_ids) of ``e``, sorted."""
        self._check_entity(e)
        lo, hi = self.offsets[e], self.offsets[e + 1]
        return self.adj_rel[lo:hi], self.adj_ent[lo:hi]

    def outgoing_edges(self, e: int, cap: int | None = DEFAULT_DEGREE_CAP) -> tuple[np.ndarray, np.ndarray]:
        """Return at most ``cap`` outgoing edges, the first ones under the sort order."""
        if cap is not None and cap < 1:
            raise ValueError("cap must be >= 1")
        rels, ents = self.neighbors(e)
        if cap is not None:
            rels, ents = rels[:cap], ents[:cap]
        return rels, ents

    def has_edge(self, h: int, rel_id: int, t: int) -> bool:
        rels, ents = self.neighbors(h)
        return bool(np.any((rels == rel_id) & (ents == t)))

    def edges(self):
        """Iterate every directed edge ``(src, rel_id, dst)``."""
        for e in range(self.n_entities):
            lo, hi = self.offsets[e], self.offsets[e + 1]
            for k in range(lo, hi):
                yield e, int(self.adj_rel[k]), int(self.adj_ent[k])

    def mask_edges(self, forbidden: Iterable[tuple[int, int, int]]) -> "MaskedGraph":
        return MaskedGraph(self, forbidden)

    def with_support_edge(self, h: int, t: int) -> "KnowledgeGraph":
        """Copy with one extra triple under a reserved relation appended after the base ones."""
        rels = self.relations + [SUPPORT_RELATION]
        triples = np.vstack([self.triples, [[h, len(self.relations), t]]])
        return KnowledgeGraph(self.entities, rels, triples)

    def shortest_distance(self, a: int, b: int, horizon: int) -> int | None:
        return shortest_distance(self, a, b, horizon)

    # -- io ---------------------------------------------------------------

    def write_vocab(self, directory: str) -> None:
        write_vocab(os.path.join(directory, "entities.tsv"), self.entities)
        write_vocab(os.path.join(directory, "relations.tsv"), self.relations)

    def vocab_hashes(self) -> dict:
        import hashlib

        def digest(names):
            return hashlib.sha256("".join(f"{n}\t{i}\n" for i, n in enumerate(names)).encode()).hexdigest()

        return {"entities": digest(self.entities), "relations": digest(self.relations)}

    def __repr__(self) -> str:
        return (f"KnowledgeGraph(entities={self.n_entities}, relations={self.n_relations}, "
                f"triples={self.triple_count})")


class MaskedGraph:
    """View of a KG with some directed edges (and their inverses) hidden."""

    def __init__(self, kg: KnowledgeGraph, forbidden: Iterable[tuple[int, int, int]] = ()):
        self.kg = kg
        self.forbidden: dict[int, set[tuple[int, int]]] = {}
        for h, r, t in forbidden:
            self._forbid(int(h), int(r), int(t))
            self._forbid(int(t), inverse(int(r)), int(h))

    def _forbid(self, h: int, r: int, t: int) -> None:
        self.forbidden.setdefault(h, set()).add((r, t))

    def __getattr__(self, name):
        return getattr(self.kg, name)

    def neighbors(self, e: int) -> tuple[np.ndarray, np.ndarray]:
        rels, ents = self.kg.neighbors(e)
        hidden = self.forbidden.get(e)
        if hidden:
            keep = np.array([(int(r), int(t)) not in hidden for r, t in zip(rels, ents)], dtype=bool)
            rels, ents = rels[keep], ents[keep]
        return rels, ents

    def outgoing_edges(self, e: int, cap: int | None = DEFAULT_DEGREE_CAP):
        if cap is not None and cap < 1:
            raise ValueError("cap must be >= 1")
        rels, ents = self.neighbors(e)
        if cap is not None:
            rels, ents = rels[:cap], ents[:cap]
        return rels, ents

    def degree(self, e: int) -> int:
        return len(self.neighbors(e)[0])

    def has_edge(self, h: int, rel_id: int, t: int) -> bool:
        rels, ents = self.neighbors(h)
        return bool(np.any((rels == rel_id) & (ents == t)))

    def mask_edges(self, forbidden) -> "MaskedGraph":
        extra = [(h, r, t) for h, s in self.forbidden.items() for r, t in s]
        return MaskedGraph(self.kg, extra + list(forbidden))


def shortest_distance(kg, a: int, b: int, horizon: int) -> int | None:
    """BFS hop count from ``a`` to ``b``; ``None`` when farther than ``horizon``."""
    kg._check_entity(a)
    kg._check_entity(b)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if a == b:
        return 0
    seen = {a}
    frontier = [a]
    for depth in range(1, horizon + 1):
        nxt = []
        for u in frontier:
            for v in kg.neighbors(u)[1].tolist():
                if v == b:
                    return depth
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        if not nxt:
            break
        frontier = nxt
    return None


def filter_eval_pairs(kg, pairs: Sequence[tuple[int, int]], max_dist: int = 5):
    """Keep pairs closer than ``max_dist`` hops; return ``(kept, removed_fraction)``."""
    if max_dist < 1:
        raise ValueError("max_dist must be >= 1")
    kept = [(h, t) for h, t in pairs if shortest_distance(kg, h, t, max_dist - 1) is not None]
    removed = 1.0 - len(kept) / len(pairs) if pairs else 0.0
    return kept, removed


# -- file formats -------------------------------------------------------------

def read_triples(path: str) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise DataError(f"{path}:{lineno}: expected head<TAB>relation<TAB>tail")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def write_triples(path: str, triples: Iterable[tuple[str, str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")


def load_triples(path: str) -> KnowledgeGraph:
    kg = KnowledgeGraph.from_triples(read_triples(path))
    if kg.duplicates:
        logger.info("%s: dropped %d duplicate triples", path, kg.duplicates)
    return kg


def write_vocab(path: str, names: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, name in enumerate(names):
            fh.write(f"{name}\t{i}\n")


def read_vocab(path: str) -> list[str]:
    names = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            name, idx = line.rstrip("\n").split("\t")
            if int(idx) != lineno:
                raise DataError(f"{path}: ids must be dense and ordered")
            names.append(name)
    return names


# -- task splits --------------------------------------------------------------

SPLITS = ("train", "valid", "test")


@dataclass
class TaskSplit:
    """Task relations per split, as entity-id pairs keyed by relation name.

    ``support_index[name]`` selects the one-shot support pair for valid/test
    relations. ``relation_ids`` maps train relations merged into the KG to
    their base relation id.
    """

    tasks: dict[str, dict[str, list[tuple[int, int]]]]
    support_index: dict[str, int] = field(default_factory=dict)
    relation_ids: dict[str, int] = field(default_factory=dict)
    merged_train: bool = True

    def relations(self, split: str) -> list[str]:
        return list(self.tasks.get(split, {}))

    def pairs(self, relation: str) -> list[tuple[int, int]]:
        for split in SPLITS:
            if relation in self.tasks.get(split, {}):
                return self.tasks[split][relation]
        raise KeyError(relation)

    def support(self, relation: str) -> tuple[int, int]:
        return self.pairs(relation)[self.support_index.get(relation, 0)]

    def queries(self, relation: str) -> list[tuple[int, int]]:
        k = self.support_index.get(relation, 0)
        return [p for i, p in enumerate(self.pairs(relation)) if i != k]

    def validate(self) -> None:
        for split, rels in self.tasks.items():
            for name, pairs in rels.items():
                if len(pairs) < 2:
                    raise DataError(f"task relation {name!r} ({split}) needs >= 2 triples")
                k = self.support_index.get(name, 0)
                if not 0 <= k < len(pairs):
                    raise DataError(f"support index {k} out of range for {name!r}")


def load_dataset(directory: str) -> tuple[KnowledgeGraph, TaskSplit]:
    """Read ``manifest.json`` and the triple files it lists."""
    manifest_path = os.path.join(directory, "manifest.json")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest: {exc}") from exc
    background = read_triples(os.path.join(directory, manifest["background"]))
    task_rows = read_triples(os.path.join(directory, manifest["tasks"]))
    merge = bool(manifest.get("merge_train", True))
    split_of = {}
    for split in SPLITS:
        for name in manifest["splits"].get(split, []):
            if name in split_of:
                raise DataError(f"relation {name!r} listed in two splits")
            split_of[name] = split
    bg_relations = {r for _, r, _ in background}
    for name, split in split_of.items():
        if split != "train" and name in bg_relations:
            raise DataError(f"eval relation {name!r} appears in background")
    by_rel: dict[str, list[tuple[str, str]]] = {}
    for h, r, t in task_rows:
        if r not in split_of:
            raise DataError(f"task triple uses unlisted relation {r!r}")
        by_rel.setdefault(r, []).append((h, t))
    triples = list(background)
    if merge:
        triples += [(h, r, t) for h, r, t in task_rows if split_of[r] == "train"]
    kg = KnowledgeGraph.from_triples(triples)
    # entities seen only in eval triples become isolated nodes
    extra = [x for h, _, t in task_rows for x in (h, t) if x not in kg.entity_index]
    if extra:
        kg = KnowledgeGraph(kg.entities + list(dict.fromkeys(extra)), kg.relations, kg.triples, kg.duplicates)
    tasks: dict[str, dict[str, list[tuple[int, int]]]] = {s: {} for s in SPLITS}
    for name, split in split_of.items():
        pairs = list(dict.fromkeys((kg.entity_index[h], kg.entity_index[t]) for h, t in by_rel.get(name, [])))
        tasks[split][name] = pairs
    relation_ids = {name: kg.relation_index[name] for name in tasks["train"] if name in kg.relation_index}
    split = TaskSplit(tasks, {k: int(v) for k, v in manifest.get("support", {}).items()}, relation_ids, merge)
    split.validate()
    return kg, split


def write_dataset(directory: str, background: Sequence[tuple[str, str, str]],
                  tasks: dict[str, dict[str, list[tuple[str, str]]]],
                  support: dict[str, int], merge_train: bool = True, extra: dict | None = None) -> None:
    os.makedirs(directory, exist_ok=True)
    write_triples(os.path.join(directory, "background.tsv"), background)
    rows = [(h, name, t) for split in SPLITS for name, pairs in tasks.get(split, {}).items() for h, t in pairs]
    write_triples(os.path.join(directory, "tasks.tsv"), rows)
    manifest = {
        "version": 1,
        "background": "background.tsv",
        "tasks": "tasks.tsv",
        "merge_train": merge_train,
        "splits": {s: list(tasks.get(s, {})) for s in SPLITS},
        "support": dict(support),
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
