"""Encode a support entity pair into a relation vector."""
from __future__ import annotations

from dataclasses import dataclass

from .kg import DEFAULT_DEGREE_CAP
from .nn import Tape, Var


@dataclass
class RelationSummary:
    vector: Var
    source_pair: tuple[int, int]


def encode_entity(kg, e: int, tape: Tape, cap: int | None = DEFAULT_DEGREE_CAP) -> Var:
    """sigmoid(W_s v_e + b_s + W_c mean_k [v_{r_k}, v_{e_k}]) over (capped) outgoing edges.

    The neighbour term is dropped when ``e`` has no outgoing edges.
    """
    rels, ents = kg.outgoing_edges(e, cap)
    terms = [tape.matvec(tape.param("W_s"), tape.rows("entity_emb", e)), tape.param("b_s")]
    if len(rels):
        pairs = tape.concat([tape.rows("relation_emb", rels), tape.rows("entity_emb", ents)])
        terms.append(tape.matvec(tape.param("W_c"), tape.mean_rows(pairs)))
    return tape.sigmoid(tape.add(*terms))


def summarize_pair(kg, h: int, t: int, tape: Tape, cap: int | None = DEFAULT_DEGREE_CAP) -> RelationSummary:
    """Relation vector for ``(h, t)``; order matters.

    Pass a view with the support edge masked, otherwise the encoder sees the label.
    """
    both = tape.concat([encode_entity(kg, h, tape, cap), encode_entity(kg, t, tape, cap)])
    vec = tape.sigmoid(tape.add(tape.matvec(tape.param("W_o"), both), tape.param("b_o")))
    return RelationSummary(vec, (h, t))
