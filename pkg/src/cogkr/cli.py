"""Command-line entry point: ``cogkr {generate,pretrain,train,evaluate,explain}``.

Every subcommand writes its fully resolved configuration to ``<out>/config.txt``
before doing any work, so a run can be replayed from its output directory.
Settings come from ``--config FILE`` (flat ``key=value``), ``COGKR_<KEY>``
environment variables and command-line flags, with flags winning.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

from . import config as cfgmod
from .episode import Episode, derive_rng, leakage_mask, run_episode
from .evaluate import evaluate
from .explain import path_nodes, to_dot, top_entities
from .kg import DataError, KnowledgeGraph, TaskSplit, load_dataset
from .nn import EMBEDDING, NumericError, ParameterStore, Tape, load_params, save_params
from .reasoner import RolloutConfig
from .taskgen import generate, read_spec, write_spec
from .trainer import TrainConfig, initial_params, pretrain_distmult, train

logger = logging.getLogger("cogkr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CONFIG_FILE = "config.txt"
PARAMS_FILE = "params.bin"
VOCAB_FILE = "vocab.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class PretrainConfig:
    emb_dim: int = 100
    epochs: int = 10
    negatives: int = 4
    lr: float = 0.01
    batch_size: int = 512
    seed: int = 0


@dataclass
class EvalConfig:
    """Evaluation settings; zero or empty rollout fields mean "as in the checkpoint"."""

    split: str = "test"
    seed: int = 0
    threads: int = 1
    filtered: bool = False
    support_edge: bool = False
    max_queries: int = 0
    degree_cap: int = 0
    max_nodes: int = 0
    action_budget: int = 0
    frontier: str = ""


# -- checkpoints --------------------------------------------------------------

def write_checkpoint(directory: str, store: ParameterStore, config: TrainConfig, kg: KnowledgeGraph) -> None:
    os.makedirs(directory, exist_ok=True)
    save_params(store, os.path.join(directory, PARAMS_FILE))
    cfgmod.dump(config, os.path.join(directory, CONFIG_FILE))
    with open(os.path.join(directory, VOCAB_FILE), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(kg.vocab_hashes(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_checkpoint(directory: str, kg: KnowledgeGraph) -> tuple[ParameterStore, TrainConfig]:
    """Load a checkpoint, refusing one built for a different vocabulary."""
    try:
        with open(os.path.join(directory, VOCAB_FILE), encoding="utf-8") as fh:
            hashes = json.load(fh)
        store = load_params(os.path.join(directory, PARAMS_FILE))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint {directory}: {exc}") from exc
    if hashes != kg.vocab_hashes():
        raise DataError("checkpoint vocabulary hashes do not match the dataset")
    config = cfgmod.resolve(TrainConfig, os.path.join(directory, CONFIG_FILE), env={})
    return store, config


def _rollout_config(ev: EvalConfig, base: TrainConfig) -> RolloutConfig:
    return RolloutConfig(ev.degree_cap or base.degree_cap, ev.max_nodes or base.max_nodes,
                         ev.action_budget or base.action_budget, ev.frontier or base.frontier)


def _settings(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _flag_overrides(overrides: dict, **flags) -> None:
    """Dedicated flags beat ``--set``; flags left unset keep the ``--set`` value."""
    overrides.update({k: v for k, v in flags.items() if v is not None})


def _prepare_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _load(path: str) -> tuple[KnowledgeGraph, TaskSplit]:
    try:
        return load_dataset(path)
    except OSError as exc:
        raise DataError(str(exc)) from exc


# -- subcommands --------------------------------------------------------------

def cmd_generate(args) -> int:
    spec = read_spec(args.spec) if args.spec else None
    if spec is None:
        from .taskgen import SynthSpec
        spec = SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    out = _prepare_out(args.out)
    write_spec(os.path.join(out, CONFIG_FILE), spec)
    dataset = generate(spec)
    dataset.write(out)
    n_tasks = sum(len(v) for v in dataset.tasks.values())
    print(f"wrote {len(dataset.background)} background triples and {n_tasks} task relations to {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    overrides = _settings(args.set)
    _flag_overrides(overrides, seed=args.seed)
    cfg = cfgmod.resolve(PretrainConfig, args.config, overrides)
    out = _prepare_out(args.out)
    cfgmod.dump(cfg, os.path.join(out, CONFIG_FILE))
    kg, _ = _load(args.data)
    tables = pretrain_distmult(kg, cfg.emb_dim, cfg.epochs, cfg.negatives, derive_rng(cfg.seed, "distmult"),
                               lr=cfg.lr, batch_size=cfg.batch_size)
    store = ParameterStore()
    for name, value in tables.items():
        store.add(name, value, EMBEDDING)
    save_params(store, os.path.join(out, "embeddings.bin"))
    print(f"wrote embeddings for {kg.n_entities} entities to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = _settings(args.set)
    _flag_overrides(overrides, seed=args.seed, threads=args.threads, steps=args.steps)
    cfg = cfgmod.resolve(TrainConfig, args.config, overrides)
    out = _prepare_out(args.out)
    cfgmod.dump(cfg, os.path.join(out, CONFIG_FILE))
    kg, split = _load(args.data)
    embeddings = None
    if args.embeddings:
        pre = load_params(args.embeddings)
        embeddings = {name: pre[name] for name in pre}
    store = initial_params(kg, cfg, embeddings)
    log_path = os.path.join(out, "train_log.ndjson")
    with open(log_path, "w", encoding="utf-8"):
        pass

    def on_record(rec):
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    try:
        result = train(kg, split, cfg, store=store, on_record=on_record)
    finally:
        write_checkpoint(os.path.join(out, "final"), store, cfg, kg)
    write_checkpoint(os.path.join(out, "best"), result.best, cfg, kg)
    print(f"trained {result.steps} steps; best validation MRR {max(result.best_mrr, 0.0):.4f}")
    return EXIT_OK


def _eval_config(args) -> EvalConfig:
    overrides = _settings(args.set)
    _flag_overrides(overrides, seed=args.seed, threads=args.threads)
    if getattr(args, "split", None):
        overrides["split"] = args.split
    if getattr(args, "filtered", False):
        overrides["filtered"] = True
    if getattr(args, "support_edge", False):
        overrides["support_edge"] = True
    return cfgmod.resolve(EvalConfig, args.config, overrides)


def cmd_evaluate(args) -> int:
    ev = _eval_config(args)
    if ev.split not in ("train", "valid", "test"):
        raise UsageError(f"unknown split {ev.split!r}")
    out = _prepare_out(args.out)
    kg, split = _load(args.data)
    store, base = read_checkpoint(args.checkpoint, kg)
    rcfg = _rollout_config(ev, base)
    resolved = EvalConfig(ev.split, ev.seed, ev.threads, ev.filtered, ev.support_edge, ev.max_queries,
                          rcfg.degree_cap, rcfg.max_nodes, rcfg.action_budget, rcfg.frontier)
    cfgmod.dump(resolved, os.path.join(out, CONFIG_FILE))
    report = evaluate(kg, split, ev.split, store, rcfg, seed=ev.seed, filtered=ev.filtered,
                      add_support_edge=ev.support_edge, threads=ev.threads,
                      max_queries=ev.max_queries or None)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    text = report.to_text()
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    report.write_csv(os.path.join(out, "per_query.csv"))
    print(text, end="")
    return EXIT_OK


def cmd_explain(args) -> int:
    ev = _eval_config(args)
    out = _prepare_out(args.out)
    kg, split = _load(args.data)
    store, base = read_checkpoint(args.checkpoint, kg)
    rcfg = _rollout_config(ev, base)
    cfgmod.dump(EvalConfig(ev.split, ev.seed, 1, False, ev.support_edge, 0, rcfg.degree_cap, rcfg.max_nodes,
                           rcfg.action_budget, rcfg.frontier), os.path.join(out, CONFIG_FILE))
    try:
        h, t = kg.entity_id(args.support[0]), kg.entity_id(args.support[1])
        head = kg.entity_id(args.head)
    except KeyError as exc:
        raise DataError(f"unknown entity {exc}") from exc
    known = {n for s in ("train", "valid", "test") for n in split.relations(s)} | set(kg.relations)
    if args.relation not in known:
        raise DataError(f"unknown relation {args.relation!r}")
    graph = kg.with_support_edge(h, t) if ev.support_edge else kg
    # the query tail is unknown here, so only the support edge is held out
    episode = Episode(args.relation, (h, t), (head, head), leakage_mask(graph, split, args.relation, (h, t), (h, t)))
    result = run_episode(graph, episode, Tape(store, record=False), derive_rng(ev.seed, "explain"), rcfg)
    with open(os.path.join(out, "graph.dot"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_dot(result, graph))
    pruned = path_nodes(result, result.prediction.answer)
    with open(os.path.join(out, "graph_pruned.dot"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_dot(result, graph, nodes=pruned, name="reasoning_paths"))
    for rank, (name, score) in enumerate(top_entities(result, graph, 10), 1):
        print(f"{rank:>2}  {score:+.6f}  {name}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cogkr", description="One-shot knowledge-graph reasoning with cognitive graphs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic planted-rule dataset")
    g.add_argument("--spec", help="key=value generator spec file")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    def common(sp, checkpoint=False):
        sp.add_argument("--data", required=True, help="dataset directory with manifest.json")
        sp.add_argument("--out", required=True)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        if checkpoint:
            sp.add_argument("--checkpoint", required=True, help="checkpoint directory")
            sp.add_argument("--support-edge", action="store_true",
                            help="add the support triple to the graph under a reserved relation")

    pt = sub.add_parser("pretrain", help="DistMult embedding pretraining")
    common(pt)
    pt.set_defaults(func=cmd_pretrain)

    t = sub.add_parser("train", help="train the reasoner")
    common(t)
    t.add_argument("--steps", type=int)
    t.add_argument("--embeddings", help="pretrained embeddings.bin")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="Hits@k / MRR on a split")
    common(e, checkpoint=True)
    e.add_argument("--split", choices=["train", "valid", "test"])
    e.add_argument("--filtered", action="store_true", help="ignore other known answers when ranking")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("explain", help="export the reasoning graph of one query")
    common(x, checkpoint=True)
    x.add_argument("--relation", required=True)
    x.add_argument("--support", nargs=2, required=True, metavar=("HEAD", "TAIL"))
    x.add_argument("--head", required=True)
    x.set_defaults(func=cmd_explain)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"cogkr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cogkr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"cogkr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"cogkr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"cogkr: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cogkr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
