import filecmp
import json

import numpy as np
import pytest

from cogkr.kg import DataError, load_dataset
from cogkr.nn import Tape
from cogkr.reasoner import RolloutConfig, rollout
from cogkr.summary import summarize_pair
from cogkr.taskgen import (DEFAULT_SCHEMA, SynthSpec, chain_name, generate, identifiable_chains, read_spec,
                           type_path, witness_ok, write_spec)

from conftest import make_store


@pytest.fixture(scope="module")
def default_data():
    return generate(SynthSpec())


class TestSchema:
    def test_type_path(self):
        assert type_path(DEFAULT_SCHEMA, (0, 0), 0) == [0, 3, 4]
        assert type_path(DEFAULT_SCHEMA, (4, 2), 1) == [1, 3, 6]
        assert type_path(DEFAULT_SCHEMA, (1, 0), 0) is None

    def test_twelve_identifiable_chains(self):
        chains = identifiable_chains(DEFAULT_SCHEMA, 2)
        assert len(chains) == 12
        ends = [(s, type_path(DEFAULT_SCHEMA, c, s)[-1]) for c, s in chains]
        assert len(set(ends)) == 12

    def test_ambiguous_end_types_dropped(self):
        # two relations with the same pieces lead to the same (start, end) types
        schema = (((0, 1),), ((0, 1),), ((1, 2),))
        assert identifiable_chains(schema, 2) == []

    def test_two_pieces_same_domain_rejected(self):
        with pytest.raises(DataError):
            type_path((((0, 1), (0, 2)),), (0,), 0)

    def test_chain_name(self):
        assert chain_name((4, 1)) == "r4.r1"


class TestGenerate:
    def test_sizes_and_splits(self, default_data):
        spec = default_data.spec
        assert spec.n_entities == 200
        assert [len(default_data.tasks[s]) for s in ("train", "valid", "test")] == [8, 2, 2]
        assert {r for _, r, _ in default_data.background} == {f"r{k}" for k in range(6)}
        assert all(len(p) == spec.triples_per_task for split in default_data.tasks.values() for p in split.values())

    def test_same_seed_same_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate(SynthSpec(seed=4)).write(str(a))
        generate(SynthSpec(seed=4)).write(str(b))
        cmp = filecmp.dircmp(a, b)
        assert cmp.left_list == cmp.right_list
        assert filecmp.cmpfiles(a, b, cmp.left_list, shallow=False)[0] == cmp.left_list

    def test_different_seed_differs(self):
        assert generate(SynthSpec(seed=1)).background != generate(SynthSpec(seed=2)).background

    def test_witnesses_brute_force(self, default_data):
        for split in default_data.tasks.values():
            for name, pairs in split.items():
                rels = name.split(".")
                for (h, t), path in zip(pairs, default_data.witnesses[name]):
                    assert witness_ok(default_data.background, h, t, rels)
                    assert path[0] == h and path[-1] == t and len(path) == len(rels) + 1

    def test_unique_answer_per_head(self, default_data):
        for split in default_data.tasks.values():
            for name, pairs in split.items():
                rels = name.split(".")
                for h, t in pairs:
                    frontier = {h}
                    for rel in rels:
                        frontier = {b for a, r, b in default_data.background if r == rel and a in frontier}
                    assert frontier == {t}

    def test_task_relations_not_in_background(self, default_data):
        names = {n for split in default_data.tasks.values() for n in split}
        assert not names & {r for _, r, _ in default_data.background}

    def test_heldout_relations_seen_twice_in_training(self, default_data):
        train = [n.split(".") for n in default_data.tasks["train"]]
        for split in ("valid", "test"):
            for name in default_data.tasks[split]:
                for pos, rel in enumerate(name.split(".")):
                    assert sum(c[pos] == rel for c in train) >= 2

    def test_distractors_per_entity(self):
        data = generate(SynthSpec(distractors=3, seed=5))
        out = {}
        for h, _, _ in data.background:
            out[h] = out.get(h, 0) + 1
        assert min(out.values()) >= 3

    def test_noise_adds_edges(self):
        clean = generate(SynthSpec(seed=6))
        noisy = generate(SynthSpec(seed=6, noise=0.2))
        assert len(noisy.background) > len(clean.background)

    def test_too_few_chains(self):
        with pytest.raises(DataError):
            generate(SynthSpec(n_train=11))

    def test_unknown_type(self):
        with pytest.raises(DataError):
            generate(SynthSpec(schema=(((0, 9),),)))


class TestRoundTrip:
    def test_reload(self, default_data, tmp_path):
        default_data.write(str(tmp_path))
        kg, split = load_dataset(str(tmp_path))
        assert kg.triple_count == len(set(default_data.background))
        assert not split.merged_train
        for name, pairs in default_data.tasks["test"].items():
            ids = [(kg.entity_id(h), kg.entity_id(t)) for h, t in pairs]
            assert split.pairs(name) == ids
            assert split.support(name) == ids[default_data.support[name]]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["generator"]["seed"] == 0
        assert json.loads((tmp_path / "witnesses.json").read_text()) == default_data.witnesses

    def test_spec_file(self, tmp_path):
        spec = SynthSpec(type_sizes=(3, 4, 5, 6, 7, 8, 9, 10), noise=0.25, merge_train=True, seed=9)
        path = tmp_path / "spec.txt"
        write_spec(str(path), spec)
        assert read_spec(str(path)) == spec

    def test_spec_file_unknown_key(self, tmp_path):
        path = tmp_path / "spec.txt"
        path.write_text("colour=blue\n")
        with pytest.raises(ValueError):
            read_spec(str(path))


def forced_path(kg, path_ids, rel_ids, budget):
    """Per-expansion draw counts that follow ``path_ids`` and then stop."""
    forced = []
    for i, e in enumerate(path_ids):
        rels, ents = kg.outgoing_edges(e)
        c = np.zeros(len(rels) + 1, dtype=int)
        if i < len(rel_ids):
            hit = np.flatnonzero((rels == rel_ids[i]) & (ents == path_ids[i + 1]))
            c[hit[0]] = budget
        else:
            c[-1] = budget
        forced.append(c)
    return forced


class TestReachability:
    def test_forced_rollout_reaches_every_answer(self, default_data):
        kg, split = default_data.load()
        store = make_store(kg)
        t = Tape(store, record=False)
        n = 2
        cfg = RolloutConfig(max_nodes=1 + n + n * n, action_budget=n)
        for section in ("train", "valid", "test"):
            for name in split.relations(section):
                rel_ids = [kg.relation_id(r) for r in name.split(".")]
                summ = summarize_pair(kg, *split.support(name), t)
                for (h, tail), path in zip(split.pairs(name), default_data.witnesses[name]):
                    ids = [kg.entity_id(x) for x in path]
                    res = rollout(kg, h, summ, t, None, cfg, forced=forced_path(kg, ids, rel_ids, n))
                    assert tail in res.graph
                    assert res.graph.size == len(ids)
