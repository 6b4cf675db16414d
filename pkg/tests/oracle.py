"""Plain-numpy re-statement of graph building, used as an independent oracle.

Written directly from the model equations without the tape, and only for a
single draw per expansion, where the outcome tree can be enumerated.
"""
from collections import deque

import numpy as np


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def omega(kg, store, h, t, cap):
    E, R = store["entity_emb"], store["relation_emb"]

    def enc(e):
        rels, ents = kg.outgoing_edges(e, cap)
        z = store["W_s"] @ E[e] + store["b_s"]
        if len(rels):
            z = z + store["W_c"] @ np.mean([np.concatenate([R[r], E[x]]) for r, x in zip(rels, ents)], axis=0)
        return sig(z)

    return sig(store["W_o"] @ np.concatenate([enc(h), enc(t)]) + store["b_o"])


def hidden(store, e, ingoing, X):
    z = store["W_4"] @ store["entity_emb"][e] + store["b_4"]
    if ingoing:
        msgs = [np.concatenate([store["relation_emb"][r], X[s]]) for r, s in ingoing]
        z = z + store["W_3"] @ np.mean(msgs, axis=0)
    return sig(z)


def action_probs(kg, store, e, X, om, cap):
    rels, ents = kg.outgoing_edges(e, cap)
    d = store["b_4"].shape[0]
    rows = [np.concatenate([store["entity_emb"][x], store["relation_emb"][r], X.get(int(x), np.zeros(d))])
            for r, x in zip(rels, ents)]
    rows.append(store["no_action"])
    keys = sig(np.array(rows) @ store["W_1"])
    query = sig(store["W_2"] @ np.concatenate([X[e], om]))
    return rels, ents, softmax(keys @ query)


def enumerate_single_draw(kg, store, head, om, cap, max_nodes):
    """Every complete outcome of a one-draw-per-node build: list of ``(prob, nodes)``."""
    out = []

    def walk(prob, nodes, ingoing, X, frontier, explored):
        if not frontier:
            out.append((prob, tuple(nodes)))
            return
        frontier = deque(frontier)
        e = frontier.popleft()
        rels, ents, p = action_probs(kg, store, e, X, om, cap)
        for k in range(len(p)):
            nodes2, ingoing2, X2, front2 = list(nodes), {a: list(b) for a, b in ingoing.items()}, dict(X), deque(frontier)
            if k < len(ents):
                r, x = int(rels[k]), int(ents[k])
                if x not in nodes2:
                    if len(nodes2) >= max_nodes:
                        walk(prob * p[k], nodes2, ingoing2, X2, front2, explored | {e})
                        continue
                    nodes2.append(x)
                    front2.append(x)
                ingoing2.setdefault(x, []).append((r, e))
                X2[x] = hidden(store, x, ingoing2[x], X2)
            walk(prob * p[k], nodes2, ingoing2, X2, front2, explored | {e})

    X0 = {head: hidden(store, head, [], {})}
    walk(1.0, [head], {head: []}, X0, [head], frozenset())
    return out


def reach_probability(kg, store, head, target, om, cap, max_nodes):
    return sum(p for p, nodes in enumerate_single_draw(kg, store, head, om, cap, max_nodes) if target in nodes)


def bfs_all_pairs(kg):
    """Hop distances between every pair, by BFS over plain adjacency sets built
    from the raw triples (edges are followed in both directions)."""
    adj = {e: set() for e in range(kg.n_entities)}
    for h, _, t in kg.triples.tolist():
        adj[h].add(t)
        adj[t].add(h)
    dist = {}
    for s in range(kg.n_entities):
        d = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in d:
                    d[v] = d[u] + 1
                    q.append(v)
        dist[s] = d
    return dist
