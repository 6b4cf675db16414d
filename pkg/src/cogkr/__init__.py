"""One-shot knowledge-graph reasoning with cognitive graphs."""
from .kg import KnowledgeGraph, TaskSplit, filter_eval_pairs, load_dataset, load_triples, shortest_distance
from .nn import ParameterStore, Tape, adam_step, grad_check
from .reasoner import RolloutConfig, rollout
from .summary import summarize_pair
from .trainer import TrainConfig, train
from .evaluate import MetricsReport, evaluate

__version__ = "0.1.0"

__all__ = [
    "KnowledgeGraph", "TaskSplit", "filter_eval_pairs", "load_dataset", "load_triples", "shortest_distance",
    "ParameterStore", "Tape", "adam_step", "grad_check", "RolloutConfig", "rollout", "summarize_pair",
    "TrainConfig", "train", "MetricsReport", "evaluate",
]
