"""
Building one cognitive graph by hand
====================================

A small family-style knowledge graph, one support pair and one query. We
summarize the support pair, build the graph for the query head with a fixed
seed, and look at what was sampled at each expansion and how the nodes were
scored.
"""

import numpy as np

from cogkr.explain import path_nodes, to_dot
from cogkr.kg import KnowledgeGraph
from cogkr.model import ModelDims, init_params
from cogkr.nn import Tape
from cogkr.reasoner import RolloutConfig, ranked_nodes, rollout
from cogkr.summary import summarize_pair

# a few facts; every triple also gets an inverse edge ("parent_of_inv")
kg = KnowledgeGraph.from_triples([
    ("ann", "parent_of", "bob"), ("bob", "parent_of", "cal"),
    ("dee", "parent_of", "eve"), ("eve", "parent_of", "fay"),
    ("ann", "lives_in", "oslo"), ("dee", "lives_in", "rome"),
    ("bob", "works_at", "acme"), ("eve", "works_at", "acme"),
])
print(kg)
print("relations:", [kg.relation_name(r) for r in range(kg.n_relation_ids)])

# untrained parameters: the point here is the mechanics, not the answer
store = init_params(ModelDims(kg.n_entities, kg.n_relation_ids, emb_dim=8, hidden_dim=8),
                    np.random.default_rng(0), emb_scale=0.5)
tape = Tape(store, record=False)

# the support pair says "grandparent_of(ann, cal)"; the query asks about dee
summary = summarize_pair(kg, kg.entity_id("ann"), kg.entity_id("cal"), tape)
print("relation summary (first 4 dims):", np.round(summary.vector.value[:4], 3))

config = RolloutConfig(degree_cap=16, max_nodes=6, action_budget=2)
result = rollout(kg, kg.entity_id("dee"), summary, tape, np.random.default_rng(7), config)

# each expansion pops one node, scores its outgoing edges plus "no action",
# and draws action_budget times from that distribution
for step in result.steps:
    names = [f"{kg.relation_name(r)}->{kg.entities[e]}" for r, e in zip(step.relations, step.entities)]
    names.append("<no action>")
    print(f"\nexpand {kg.entities[step.node]}")
    for name, p, c in zip(names, step.probs, step.counts):
        print(f"  {p:6.3f}  x{c}  {name}")

print("\nnodes by score:")
for e, s in ranked_nodes(result):
    print(f"  {s:+.4f}  {kg.entities[e]}")

answer = result.prediction.answer
print("\npredicted answer:", kg.entities[answer])
print("nodes on paths to it:", [kg.entities[e] for e in path_nodes(result, answer)])
print()
print(to_dot(result, kg))
