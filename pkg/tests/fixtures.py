"""Hand-built models and rollouts whose outcomes are known in advance."""
import numpy as np

from cogkr.kg import KnowledgeGraph, TaskSplit
from cogkr.model import ModelDims, init_params
from cogkr.nn import Var
from cogkr.reasoner import CognitiveGraph, Prediction, Rollout


def scripted_rollout(head, nodes, scores):
    """A finished rollout over ``nodes`` with fixed answer scores."""
    scores = np.asarray(scores, dtype=float)
    q = np.exp(scores - scores.max())
    q /= q.sum()
    order = sorted(range(len(nodes)), key=lambda i: (-scores[i], nodes[i]))
    return Rollout(head, CognitiveGraph(list(nodes)), [], None, Prediction(Var(scores), q, nodes[order[0]]))


def four_query_fixture():
    """Four queries whose answers land at ranks 1, 2, absent and 5.

    Returns ``(kg, split, rollouts)`` where ``rollouts[i]`` is the scripted
    outcome of the i-th query in evaluation order.
    """
    kg = KnowledgeGraph.from_ids(14, 1, [(0, 0, 1)])
    pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
    split = TaskSplit({"train": {}, "valid": {}, "test": {"q": pairs}}, {"q": 0}, {}, False)
    rollouts = [
        scripted_rollout(2, [2, 3, 10], [0.1, 0.9, 0.5]),              # rank 1
        scripted_rollout(4, [4, 5, 10], [0.1, 0.5, 0.9]),              # rank 2
        scripted_rollout(6, [6, 10, 11], [0.3, 0.2, 0.1]),             # absent
        scripted_rollout(8, [8, 9, 10, 11, 1, 13], [5, 1, 4, 3, 2, 1]),  # rank 5; the tie with 13 goes to 9
    ]
    return kg, split, rollouts


def rank_one_model(kg, heads, tails, hidden_dim=8):
    """Parameters under which a rollout from any ``heads`` entity reaches its
    single neighbour in ``tails`` and ranks it first.

    Heads get negative embeddings and tails positive ones; the hidden update
    reads only the entity embedding, so tails score high and heads low, and
    the edge key to a tail dominates the no-action key.
    """
    de, d = 2, hidden_dim
    s = init_params(ModelDims(kg.n_entities, kg.n_relation_ids, de, d), np.random.default_rng(0))
    for e in heads:
        s["entity_emb"][e] = -1.0
    for e in tails:
        s["entity_emb"][e] = 1.0
    s["relation_emb"][:] = 0.0
    s["W_4"][:] = 10.0
    s["b_4"][:] = 0.0
    s["W_3"][:] = 0.0
    s["W_1"][:] = 0.0
    s["W_1"][:de] = 10.0
    s["no_action"][:] = -1.0
    s["W_2"][:] = 10.0
    s["W_p"][:] = 0.0
    s["W_p"][:d] = 1.0
    return s
