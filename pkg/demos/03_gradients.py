"""
Checking the gradients
======================

Training combines two kinds of gradient. The answer scorer and the log
probability of the target get exact derivatives from the tape once the
rollout is fixed. The sampling decisions get a score-function (REINFORCE)
estimate instead. This script checks the first against central differences
on a frozen rollout, then watches the second settle as the number of
rollouts grows.
"""

import numpy as np

from cogkr.episode import Episode, derive_rng, run_episode
from cogkr.kg import KnowledgeGraph
from cogkr.model import ModelDims, init_params
from cogkr.nn import Tape, grad_check
from cogkr.reasoner import RolloutConfig, rollout
from cogkr.summary import summarize_pair
from cogkr.trainer import episode_loss

# a random graph with 30 entities and 4 relations
rng = np.random.default_rng(3)
triples = np.stack([rng.integers(30, size=240), rng.integers(4, size=240), rng.integers(30, size=240)], 1)
kg = KnowledgeGraph.from_ids(30, 4, triples)
store = init_params(ModelDims(kg.n_entities, kg.n_relation_ids, 4, 5), np.random.default_rng(2))
config = RolloutConfig(degree_cap=12, max_nodes=10, action_budget=3)

# find an episode whose rollout reaches its target, and record its draws
for k in range(200):
    h, t, sh, st = (int(x) for x in derive_rng(0, "demo3", k).integers(kg.n_entities, size=4))
    episode = Episode("q", (sh, st), (h, t))
    found = run_episode(kg, episode, Tape(store, record=False), derive_rng(0, "demo3-roll", k), config)
    if t in found.graph and t != h and found.graph.size >= 5:
        break
print(f"episode {k}: head {h}, target {t}, {found.graph.size} nodes")
forced = found.action_log


# replaying the recorded draws freezes the discrete choices, so the loss is
# a smooth function of the parameters
def loss(tape):
    res = run_episode(kg, episode, tape, None, config, forced=forced)
    return episode_loss(res, episode.target, tape, advantage=0.7)


def value(st):
    return float(loss(Tape(st, record=False)).value)


def gradient(st):
    tape = Tape(st)
    return tape.backward(loss(tape))


err = grad_check(value, gradient, store, n_coords=10, rng=np.random.default_rng(1))
print(f"largest relative error against central differences: {err:.2e}")

# the score-function estimate of d E[reward] / d no_action for a tiny graph;
# its mean should stop drifting once the standard error is small
tiny = KnowledgeGraph.from_ids(4, 2, [(0, 0, 1), (0, 1, 2), (1, 0, 3), (2, 1, 3), (1, 1, 2)])
small = init_params(ModelDims(4, tiny.n_relation_ids, 3, 4), np.random.default_rng(5))
head, target, support = 0, 3, (1, 3)
cfg = RolloutConfig(degree_cap=256, max_nodes=3, action_budget=1)
draws = derive_rng(0, "demo3-pg")
samples, hits = [], 0
for i in range(1, 20_001):
    tape = Tape(small)
    res = rollout(tiny, head, summarize_pair(tiny, *support, tape), tape, draws, cfg)
    reached = target in res.graph
    hits += reached
    samples.append(tape.backward(res.log_pi(tape)).dense["no_action"][4] if reached else 0.0)
    if i in (1_000, 5_000, 20_000):
        s = np.array(samples)
        print(f"{i:6d} rollouts: P(reach) {hits / i:.3f}, "
              f"d/d no_action[4] {s.mean():+.4f} +- {s.std(ddof=1) / np.sqrt(i):.4f}")
