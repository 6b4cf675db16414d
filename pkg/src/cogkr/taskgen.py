"""Synthetic one-shot datasets with planted composition rules.

Entities are typed. Each base relation is a total function on its domain,
given as one or more ``(domain type, range type)`` pieces; a relation has at
most one piece per domain type. A task relation is a chain of base relations
(``r4.r1`` means "follow r4, then r1"). Every task triple therefore has a
witness path and a unique answer per head.

The default schema has three head types (0, 1, 2) that each lead into a shared
middle type 3 through r0, r4 and r5, and four ways out of the middle type into
tail types 4 to 7 through r0 to r3. Relation r0 appears at both positions via
two pieces. All twelve chains are identifiable from the (head type, tail type)
pair, so the support pair carries enough information to pick the chain.

Distractor edges use relations without a piece for the source type. That way
they never create a second answer for any chain.
"""
from __future__ import annotations

import itertools
import json
import os
import tempfile
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .kg import SPLITS, DataError, KnowledgeGraph, TaskSplit, load_dataset, write_dataset

# per base relation, its (domain type, range type) pieces
DEFAULT_SCHEMA = (
    ((0, 3), (3, 4)),
    ((3, 5),),
    ((3, 6),),
    ((3, 7),),
    ((1, 3),),
    ((2, 3),),
)
DEFAULT_TYPE_SIZES = (24, 24, 24, 48, 20, 20, 20, 20)


@dataclass
class SynthSpec:
    type_sizes: tuple[int, ...] = DEFAULT_TYPE_SIZES
    schema: tuple[tuple[tuple[int, int], ...], ...] = DEFAULT_SCHEMA
    hops: int = 2
    n_train: int = 8
    n_valid: int = 2
    n_test: int = 2
    triples_per_task: int = 20
    distractors: int = 2
    noise: float = 0.0
    merge_train: bool = False
    seed: int = 0

    def __post_init__(self):
        self.type_sizes = tuple(int(x) for x in self.type_sizes)
        self.schema = tuple(tuple((int(d), int(r)) for d, r in pieces) for pieces in self.schema)

    @property
    def n_entities(self) -> int:
        return int(sum(self.type_sizes))

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["type_sizes"] = list(self.type_sizes)
        d["schema"] = [[list(p) for p in pieces] for pieces in self.schema]
        return d


@dataclass
class SynthDataset:
    spec: SynthSpec
    background: list[tuple[str, str, str]]
    tasks: dict[str, dict[str, list[tuple[str, str]]]]
    support: dict[str, int]
    witnesses: dict[str, list[list[str]]]
    chains: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def write(self, directory: str) -> None:
        write_dataset(directory, self.background, self.tasks, self.support, self.spec.merge_train,
                      extra={"generator": self.spec.to_dict()})
        with open(os.path.join(directory, "witnesses.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.witnesses, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def load(self) -> tuple[KnowledgeGraph, TaskSplit]:
        """Build the KG and split in memory, exactly as reading the written files would."""
        with tempfile.TemporaryDirectory() as tmp:
            self.write(tmp)
            return load_dataset(tmp)


def chain_name(chain) -> str:
    return ".".join(f"r{k}" for k in chain)


def _range_map(schema) -> list[dict[int, int]]:
    out = []
    for k, pieces in enumerate(schema):
        m = {}
        for d, r in pieces:
            if d in m:
                raise DataError(f"relation r{k} has two pieces for domain type {d}")
            m[d] = r
        out.append(m)
    return out


def type_path(schema, chain, start: int) -> list[int] | None:
    """Types visited when following ``chain`` from ``start``, or None if it is undefined."""
    ranges = _range_map(schema)
    path = [start]
    for k in chain:
        nxt = ranges[k].get(path[-1])
        if nxt is None:
            return None
        path.append(nxt)
    return path


def identifiable_chains(schema, hops: int, n_types: int | None = None) -> list[tuple[tuple[int, ...], int]]:
    """``(chain, start type)`` combinations whose (start type, end type) pair is unique."""
    if n_types is None:
        n_types = 1 + max(max(d, r) for pieces in schema for d, r in pieces)
    found = []
    for chain in itertools.product(range(len(schema)), repeat=hops):
        for start in range(n_types):
            path = type_path(schema, chain, start)
            if path is not None and len(set(path)) == len(path):
                found.append((chain, start, path[-1]))
    ends = Counter((s, e) for _, s, e in found)
    starts = Counter(c for c, _, _ in found)
    return [(c, s) for c, s, e in found if ends[(s, e)] == 1 and starts[c] == 1]


def _split_chains(chains, spec: SynthSpec, rng) -> dict[str, list]:
    need = spec.n_train + spec.n_valid + spec.n_test
    if len(chains) < need:
        raise DataError(f"schema yields {len(chains)} identifiable chains, need {need}")
    for _ in range(1000):
        order = [chains[i] for i in rng.permutation(len(chains))][:need]
        train = order[:spec.n_train]
        held = order[spec.n_train:]
        seen = Counter((i, k) for c, _ in train for i, k in enumerate(c))
        # every relation at every position of a held-out chain occurs in at
        # least two training chains, so it is seen in more than one context
        if all(seen[(i, k)] >= 2 for c, _ in held for i, k in enumerate(c)):
            return {"train": train, "valid": held[:spec.n_valid], "test": held[spec.n_valid:]}
    raise DataError("could not split chains so held-out ones reuse trained relations twice")


def generate(spec: SynthSpec) -> SynthDataset:
    rng = np.random.default_rng(spec.seed)
    n_types = len(spec.type_sizes)
    if any(d >= n_types or r >= n_types for pieces in spec.schema for d, r in pieces):
        raise DataError("schema references an unknown type")
    ranges = _range_map(spec.schema)
    members = []
    names = []
    start = 0
    for t, size in enumerate(spec.type_sizes):
        members.append(np.arange(start, start + size))
        names += [f"T{t}_{i:03d}" for i in range(size)]
        start += size
    type_of = np.repeat(np.arange(n_types), spec.type_sizes)

    # functional base relations: every entity of a domain type has exactly one edge
    func: list[dict[int, int]] = [{} for _ in spec.schema]
    edges = []
    for k, pieces in enumerate(spec.schema):
        for dom, rng_type in pieces:
            src = members[dom]
            targets = rng.choice(members[rng_type], size=len(src))
            if dom == rng_type and len(src) > 1:
                # no self-loops: a witness path must not revisit its own head
                loops = targets == src
                shift = rng.integers(1, len(src), size=int(loops.sum()))
                targets[loops] = src[(np.flatnonzero(loops) + shift) % len(src)]
            func[k].update(zip(src.tolist(), targets.tolist()))
            edges += [(h, k, t) for h, t in zip(src.tolist(), targets.tolist())]

    foreign = [np.array([k for k in range(len(spec.schema)) if t not in ranges[k]]) for t in range(n_types)]
    n_ent = spec.n_entities
    clean = len(edges)
    extra = [(h, spec.distractors) for h in range(n_ent)]
    n_noise = int(round(spec.noise * clean))
    if n_noise:
        extra += Counter(rng.integers(n_ent, size=n_noise).tolist()).items()
    seen = set(edges)
    for h, count in extra:
        pool = foreign[type_of[h]]
        if not len(pool):
            continue
        added = 0
        for _ in range(50 * count):
            if added == count:
                break
            e = (h, int(rng.choice(pool)), int(rng.integers(n_ent)))
            if e[2] != h and e not in seen:
                seen.add(e)
                edges.append(e)
                added += 1

    chains = identifiable_chains(spec.schema, spec.hops, n_types)
    assignment = _split_chains(chains, spec, rng)
    tasks: dict[str, dict[str, list[tuple[str, str]]]] = {s: {} for s in SPLITS}
    witnesses = {}
    support = {}
    chain_of = {}
    for split in SPLITS:
        for chain, start_type in assignment[split]:
            name = chain_name(chain)
            heads = members[start_type]
            picked = np.sort(rng.choice(heads, size=min(spec.triples_per_task, len(heads)), replace=False))
            pairs, paths = [], []
            for h in picked.tolist():
                path = [h]
                for k in chain:
                    path.append(func[k][path[-1]])
                pairs.append((names[h], names[path[-1]]))
                paths.append([names[x] for x in path])
            if len(set(pairs)) < 2:
                raise DataError(f"task {name} has fewer than 2 distinct triples")
            tasks[split][name] = pairs
            witnesses[name] = paths
            chain_of[name] = chain
            if split != "train":
                support[name] = int(rng.integers(len(pairs)))
    background = [(names[h], f"r{k}", names[t]) for h, k, t in edges]
    return SynthDataset(spec, background, tasks, support, witnesses, chain_of)


def witness_ok(background, head: str, tail: str, chain_relations: list[str]) -> bool:
    """Brute-force scan: is there a path from ``head`` to ``tail`` following the relation chain?"""
    frontier = {head}
    for rel in chain_relations:
        frontier = {t for h, r, t in background if r == rel and h in frontier}
    return tail in frontier


def write_spec(path: str, spec: SynthSpec) -> None:
    """Flat ``key=value`` spec file.

    Lists are comma separated. The schema lists relations separated by ``,``
    with pieces ``d:r`` joined by ``|`` (for example ``0:3|3:4,3:5``).
    """
    d = spec.to_dict()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in d.items():
            if key == "schema":
                value = ",".join("|".join(f"{a}:{b}" for a, b in pieces) for pieces in value)
            elif isinstance(value, list):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key}={value}\n")


def read_spec(path: str) -> SynthSpec:
    from .config import parse_kv

    raw = parse_kv(path)
    defaults = SynthSpec()
    d = {}
    for key, value in raw.items():
        if key == "schema":
            d[key] = tuple(tuple(tuple(int(x) for x in piece.split(":")) for piece in item.split("|"))
                           for item in value.split(","))
        elif key == "type_sizes":
            d[key] = tuple(int(x) for x in value.split(","))
        elif not hasattr(defaults, key):
            raise ValueError(f"unknown spec key {key!r}")
        else:
            current = getattr(defaults, key)
            if isinstance(current, bool):
                d[key] = value.lower() in ("1", "true", "yes")
            else:
                d[key] = type(current)(value)
    return SynthSpec(**d)
