import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cogkr.kg import KnowledgeGraph
from cogkr.nn import Tape
from cogkr.reasoner import (RolloutConfig, apply_actions, init_graph, predict, rollout, sample_actions,
                            score_actions, update_hidden)
from cogkr.summary import summarize_pair

import oracle
from conftest import dense_kg, make_store


def fresh(kg, seed=0, **kw):
    s = make_store(kg, seed=seed, **kw)
    t = Tape(s, record=False)
    return s, t


class TestInitAndHidden:
    def test_init_graph(self, toy_kg):
        s, t = fresh(toy_kg)
        g = init_graph(2, t)
        assert g.nodes == [2] and g.edges == [] and list(g.frontier) == [2]
        np.testing.assert_allclose(g.hidden[2].value, oracle.hidden(s, 2, [], {}), rtol=1e-12)

    def test_zero_weights_give_half(self, toy_kg):
        s, t = fresh(toy_kg)
        s["W_4"][:] = 0
        g = init_graph(0, t)
        assert np.all(g.hidden[0].value == 0.5)

    def test_one_ingoing_edge(self, toy_kg):
        s, t = fresh(toy_kg, seed=1)
        g = init_graph(0, t)
        apply_actions(g, 0, [(0, 1)], t, 10)
        X0 = g.hidden[0].value
        expected = oracle.sig(s["W_4"] @ s["entity_emb"][1] + s["b_4"]
                              + s["W_3"] @ np.concatenate([s["relation_emb"][0], X0]))
        np.testing.assert_allclose(g.hidden[1].value, expected, rtol=1e-12)

    def test_duplicate_ingoing_same_as_one(self, toy_kg):
        s, t = fresh(toy_kg, seed=2)
        g = init_graph(0, t)
        apply_actions(g, 0, [(0, 1)], t, 10)
        once = g.hidden[1].value.copy()
        g.ingoing[1].append(g.ingoing[1][0])
        np.testing.assert_array_equal(update_hidden(g, 1, t).value, once)


class TestScoreActions:
    def test_no_edges_only_no_action(self):
        kg = KnowledgeGraph.from_ids(3, 1, [(1, 0, 2)])
        s, t = fresh(kg)
        g = init_graph(0, t)
        summ = summarize_pair(kg, 1, 2, t)
        rels, ents, lp = score_actions(g, 0, summ, kg, t)
        assert len(ents) == 0
        assert np.exp(lp.value).tolist() == [1.0]

    def test_matches_scripted_oracle(self):
        kg = KnowledgeGraph.from_ids(3, 2, [(0, 0, 1), (0, 1, 2)])
        s, t = fresh(kg, seed=3)
        summ = summarize_pair(kg, 1, 2, t)
        g = init_graph(0, t)
        rels, ents, lp = score_actions(g, 0, summ, kg, t)
        om = oracle.omega(kg, s, 1, 2, 256)
        _, _, p = oracle.action_probs(kg, s, 0, {0: g.hidden[0].value}, om, 256)
        np.testing.assert_allclose(np.exp(lp.value), p, rtol=1e-12)
        np.testing.assert_allclose(summ.vector.value, om, rtol=1e-12)

    def test_distribution(self, toy_kg):
        s, t = fresh(toy_kg, seed=4)
        summ = summarize_pair(toy_kg, 0, 3, t)
        g = init_graph(0, t)
        _, ents, lp = score_actions(g, 0, summ, toy_kg, t)
        p = np.exp(lp.value)
        assert len(p) == len(ents) + 1
        assert np.all(p > 0) and abs(p.sum() - 1) <= 1e-12

    def test_explored_node_rejected(self, toy_kg):
        s, t = fresh(toy_kg)
        summ = summarize_pair(toy_kg, 0, 3, t)
        g = init_graph(0, t)
        apply_actions(g, 0, [], t, 10)
        with pytest.raises(ValueError):
            score_actions(g, 0, summ, toy_kg, t)


class TestSampleActions:
    def test_no_action_only(self):
        counts = sample_actions(np.array([1.0]), 5, np.random.default_rng(0))
        assert counts.tolist() == [5]

    def test_frequencies_within_four_se(self):
        p = np.array([0.5, 0.3, 0.15, 0.05])
        n = 100_000
        counts = sample_actions(p, n, np.random.default_rng(1))
        freq = counts / n
        se = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(freq - p) <= 4 * se)

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_actions(np.array([1.0]), 0, np.random.default_rng(0))


class TestApplyActions:
    def test_empty_choice_marks_explored(self, toy_kg):
        s, t = fresh(toy_kg)
        g = init_graph(0, t)
        apply_actions(g, 0, [], t, 10)
        assert g.nodes == [0] and g.edges == [] and 0 in g.explored

    def test_cap_applies_to_nodes_only(self):
        kg = KnowledgeGraph.from_ids(3, 1, [(0, 0, 1), (1, 0, 0), (1, 0, 2)])
        s, t = fresh(kg)
        g = init_graph(0, t)
        apply_actions(g, 0, [(0, 1)], t, 2)
        g.frontier.popleft()
        apply_actions(g, 1, [(0, 0), (0, 2)], t, 2)
        assert g.nodes == [0, 1]
        assert (1, 0, 0) in g.edges and all(e[2] != 2 for e in g.edges)

    def test_chain_trace(self, chain_kg):
        s, t = fresh(chain_kg, seed=5)
        summ = summarize_pair(chain_kg, 0, 2, t)
        fwd = chain_kg.relation_id("r")
        # force the forward edge at a and b, then nothing at c
        forced = []
        for e in (0, 1, 2):
            rels, _ = chain_kg.outgoing_edges(e)
            c = np.zeros(len(rels) + 1, dtype=int)
            hit = np.flatnonzero(rels == fwd)
            c[hit[0] if len(hit) else -1] = 1
            forced.append(c)
        r = rollout(chain_kg, 0, summ, t, None, RolloutConfig(action_budget=1), forced=forced)
        assert r.graph.nodes == [0, 1, 2]
        assert r.graph.edges == [(0, fwd, 1), (1, fwd, 2)]


class TestRollout:
    def test_isolated_head(self):
        kg = KnowledgeGraph.from_ids(3, 1, [(1, 0, 2)])
        s, t = fresh(kg)
        r = rollout(kg, 0, summarize_pair(kg, 1, 2, t), t, np.random.default_rng(0))
        assert r.graph.nodes == [0] and r.graph.edges == []
        assert r.prediction.answer == 0 and r.prediction.q.tolist() == [1.0]

    def test_deterministic(self):
        kg = dense_kg()
        s, _ = fresh(kg, seed=7)
        cfg = RolloutConfig(16, 12, 3)

        def run():
            t = Tape(s, record=False)
            r = rollout(kg, 0, summarize_pair(kg, 1, 2, t), t, np.random.default_rng(11), cfg)
            return r.graph.nodes, r.graph.edges, r.prediction.scores.value.tobytes()

        assert run() == run()

    def test_forced_replay(self):
        kg = dense_kg(seed=1)
        s, t = fresh(kg, seed=8)
        summ = summarize_pair(kg, 1, 2, t)
        cfg = RolloutConfig(16, 12, 3)
        a = rollout(kg, 0, summ, t, np.random.default_rng(2), cfg)
        b = rollout(kg, 0, summ, t, None, cfg, forced=a.action_log)
        assert a.graph.edges == b.graph.edges
        assert a.log_pi_value() == b.log_pi_value()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 20), st.integers(1, 30))
    def test_invariants(self, seed, n, lam, eta):
        kg = dense_kg(30, 300, 4, seed % 5)
        s, t = fresh(kg, seed=seed % 3)
        head = seed % kg.n_entities
        r = rollout(kg, head, summarize_pair(kg, 1, 2, t), t, np.random.default_rng(seed), RolloutConfig(eta, lam, n))
        g = r.graph
        assert g.size <= lam
        assert len(set(g.nodes)) == g.size
        assert all(kg.has_edge(*e) for e in g.edges)
        assert len(r.steps) == g.size and [st_.node for st_ in r.steps] == g.nodes
        assert len(g.edges) <= n * g.size
        assert all(abs(st_.probs.sum() - 1) <= 1e-9 for st_ in r.steps)
        assert r.log_pi_value() <= 0
        assert r.n_scored <= (eta + 1) * lam
        assert not g.frontier and g.explored == set(g.nodes)

    def test_single_draw_reach_probability_matches_enumeration(self):
        # 5 entities, one draw per node: exact tree enumeration vs Monte Carlo
        kg = KnowledgeGraph.from_ids(5, 2, [(0, 0, 1), (0, 1, 2), (1, 0, 3), (2, 1, 3), (3, 0, 4), (1, 1, 4)])
        s, _ = fresh(kg, seed=12)
        cfg = RolloutConfig(256, 4, 1)
        exact = oracle.reach_probability(kg, s, 0, 4, oracle.omega(kg, s, 1, 3, 256), 256, 4)
        outcomes = oracle.enumerate_single_draw(kg, s, 0, oracle.omega(kg, s, 1, 3, 256), 256, 4)
        assert abs(sum(p for p, _ in outcomes) - 1) <= 1e-12
        t = Tape(s, record=False)
        summ = summarize_pair(kg, 1, 3, t)
        rng = np.random.default_rng(0)
        n = 20_000
        hits = sum(4 in rollout(kg, 0, summ, t, rng, cfg).graph for _ in range(n))
        se = np.sqrt(exact * (1 - exact) / n)
        assert 0 < exact < 1
        assert abs(hits / n - exact) <= 3 * se


class TestPredict:
    def test_single_node(self, toy_kg):
        s, t = fresh(toy_kg)
        g = init_graph(0, t)
        pred = predict(g, summarize_pair(toy_kg, 1, 2, t), t)
        assert pred.q.tolist() == [1.0] and pred.answer == 0

    def test_three_node_oracle(self, toy_kg):
        s, t = fresh(toy_kg, seed=9)
        summ = summarize_pair(toy_kg, 0, 3, t)
        g = init_graph(0, t)
        apply_actions(g, 0, [(0, 1), (2, 2)], t, 10)
        pred = predict(g, summ, t)
        f = np.array([s["W_p"] @ np.concatenate([g.hidden[e].value, summ.vector.value]) for e in g.nodes])
        np.testing.assert_allclose(pred.scores.value, f, rtol=1e-12)
        np.testing.assert_allclose(pred.q, oracle.softmax(f), rtol=1e-12)
        assert abs(pred.q.sum() - 1) <= 1e-9

    def test_ties_go_to_smallest_id(self, toy_kg):
        s, t = fresh(toy_kg)
        s["W_p"][:] = 0
        g = init_graph(3, t)
        apply_actions(g, 3, [(2, 4), (1, 0)], t, 10)
        assert predict(g, summarize_pair(toy_kg, 0, 1, t), t).answer == 0
