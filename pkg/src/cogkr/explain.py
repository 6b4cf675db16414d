"""Graphviz DOT export of a built cognitive graph."""
from __future__ import annotations

from .reasoner import Rollout, ranked_nodes


def _quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def path_nodes(rollout: Rollout, answer: int) -> list[int]:
    """Graph nodes lying on some directed path from the query head to ``answer``.

    A node qualifies when it is reachable from the head and ``answer`` is
    reachable from it, both along graph edges. Order follows insertion order.
    """
    graph = rollout.graph
    if answer not in graph:
        return [rollout.head]
    succ: dict[int, set[int]] = {}
    pred: dict[int, set[int]] = {}
    for s, _, t in graph.edges:
        succ.setdefault(s, set()).add(t)
        pred.setdefault(t, set()).add(s)

    def closure(start, nbrs):
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in nbrs.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    keep = closure(rollout.head, succ) & closure(answer, pred)
    return [e for e in graph.nodes if e in keep] or [rollout.head]


def to_dot(rollout: Rollout, kg, nodes=None, name: str = "cognitive_graph") -> str:
    """Render the graph (or the sub-graph induced by ``nodes``) as DOT text.

    The query head is drawn as a box and the predicted answer double-circled.
    Nodes are emitted in insertion order and edges in the order they were added.
    """
    graph = rollout.graph
    keep = list(graph.nodes) if nodes is None else [e for e in graph.nodes if e in set(nodes)]
    kept = set(keep)
    answer = rollout.prediction.answer if rollout.prediction is not None else None
    scores = rollout.prediction.score_of(graph) if rollout.prediction is not None else {}
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;"]
    for e in keep:
        attrs = [f"label={_quote(kg.entities[e])}"]
        if e in scores:
            attrs.append(f"tooltip={_quote(f'{scores[e]:.6g}')}")
        if e == rollout.head:
            attrs += ["shape=box", "style=filled", 'fillcolor="lightblue"']
        elif e == answer:
            attrs += ["shape=doublecircle", "style=filled", 'fillcolor="gold"']
        lines.append(f"  n{e} [{', '.join(attrs)}];")
    for s, r, t in graph.edges:
        if s in kept and t in kept:
            lines.append(f"  n{s} -> n{t} [label={_quote(kg.relation_name(r))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def top_entities(rollout: Rollout, kg, k: int = 10) -> list[tuple[str, float]]:
    return [(kg.entities[e], s) for e, s in ranked_nodes(rollout)[:k]]
