"""Model dimensions and parameter initialization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import EMBEDDING, OTHER, ParameterStore

# relation rows reserved after the KG's own ids, for an optional support edge and its inverse
RESERVED_RELATIONS = 2


@dataclass(frozen=True)
class ModelDims:
    n_entities: int
    n_relation_ids: int
    emb_dim: int = 100
    hidden_dim: int = 100

    @property
    def candidate_dim(self) -> int:
        return 2 * self.emb_dim + self.hidden_dim


def param_shapes(dims: ModelDims) -> dict[str, tuple[tuple[int, ...], str]]:
    de, d = dims.emb_dim, dims.hidden_dim
    return {
        "entity_emb": ((dims.n_entities, de), EMBEDDING),
        "relation_emb": ((dims.n_relation_ids + RESERVED_RELATIONS, de), EMBEDDING),
        # summary: entity encoder and pair combiner
        "W_s": ((d, de), OTHER),
        "b_s": ((d,), OTHER),
        "W_c": ((d, 2 * de), OTHER),
        "W_o": ((d, 2 * d), OTHER),
        "b_o": ((d,), OTHER),
        # action scoring
        "W_1": ((dims.candidate_dim, d), OTHER),
        "W_2": ((d, 2 * d), OTHER),
        "no_action": ((dims.candidate_dim,), OTHER),
        # hidden update
        "W_3": ((d, de + d), OTHER),
        "W_4": ((d, de), OTHER),
        "b_4": ((d,), OTHER),
        # answer scoring, a single 2d -> 1 map
        "W_p": ((2 * d,), OTHER),
    }


def init_params(dims: ModelDims, rng: np.random.Generator, dtype=np.float64,
                embeddings: dict[str, np.ndarray] | None = None, emb_scale: float = 0.1) -> ParameterStore:
    """Uniform(-0.1, 0.1) embeddings, Glorot-uniform matrices, zero biases.

    ``embeddings`` may provide pretrained ``entity_emb`` / ``relation_emb``
    tables; missing relation rows stay randomly initialized.
    """
    store = ParameterStore(dtype)
    for name, (shape, group) in param_shapes(dims).items():
        if group == EMBEDDING:
            value = rng.uniform(-emb_scale, emb_scale, size=shape)
            if embeddings and name in embeddings:
                pre = np.asarray(embeddings[name])
                if pre.shape[1] != shape[1] or pre.shape[0] > shape[0]:
                    raise ValueError(f"pretrained {name} has shape {pre.shape}, expected {shape}")
                value[: pre.shape[0]] = pre
        elif name.startswith("b_"):
            value = np.zeros(shape)
        elif len(shape) == 1:
            limit = np.sqrt(3.0 / shape[0])
            value = rng.uniform(-limit, limit, size=shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            value = rng.uniform(-limit, limit, size=shape)
        store.add(name, value, group)
    return store


def dims_from_store(store: ParameterStore) -> ModelDims:
    de = store["entity_emb"].shape[1]
    return ModelDims(
        n_entities=store["entity_emb"].shape[0],
        n_relation_ids=store["relation_emb"].shape[0] - RESERVED_RELATIONS,
        emb_dim=de,
        hidden_dim=store["b_s"].shape[0],
    )
