"""Command-line orchestrator for the augmentation pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datasets import (DATASETS, DatasetError, SBMConfig, dataset_context,
                       prepare_dataset)
from .experiment import (ABLATION_SUITES, ExperimentConfigError,
                         ExperimentRunError, load_experiment_config,
                         run_ablation, run_experiment)
from .gateway import (FixtureMissingError, GatewayConfig, GatewayConfigError,
                      GatewayError, LLMGateway)
from .graphs import GraphError, load_graph, save_graph
from .kg import KGError, generate_kg, load_kg, prune_via_ift, save_kg
from .merge import EpochMerger, MergeConfig, MergeError
from .nn.train import DivergenceError, TrainSetupError
from .prompts import PromptError, parse_granularity

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3

_CONFIG_ERRORS = (ExperimentConfigError, DatasetError, GraphError, KGError,
                  MergeError, TrainSetupError, PromptError,
                  GatewayConfigError, FixtureMissingError,
                  FileNotFoundError, ValueError)
_RUN_ERRORS = (DivergenceError, ExperimentRunError, GatewayError, OSError)


def _gateway_from_args(args) -> LLMGateway:
    overrides = {}
    if getattr(args, "replay_dir", None):
        overrides["replay_dir"] = Path(args.replay_dir)
    if getattr(args, "model", None):
        overrides["model_name"] = args.model
    return LLMGateway(GatewayConfig.from_env(**overrides))


def cmd_prepare(args) -> int:
    graph = prepare_dataset(args.dataset, args.out, raw_dir=args.raw_dir,
                            sbm=SBMConfig(seed=args.seed))
    print(f"{args.dataset}: {graph.num_nodes} nodes, {graph.num_edges} "
          f"edges, {graph.feature_dim} features, {graph.num_classes} "
          f"classes -> {args.out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    ctx = dataset_context(args.dataset, target_triple_count=args.target_triples)
    levels = parse_granularity(args.granularity)
    gateway = _gateway_from_args(args)
    kg = generate_kg(ctx, levels, gateway, variant=args.variant,
                     ift_keep=args.ift_keep, ift_rounds=args.ift_rounds,
                     model_name=args.model, cache_dir=args.cache_dir,
                     audit_dir=args.audit_dir, template_dir=args.template_dir)
    save_kg(kg, args.out)
    skipped = kg.provenance.get("skipped_lines", 0)
    print(f"generated KG: {kg.num_concepts} concepts, {kg.num_edges} edges "
          f"({skipped} unparseable lines skipped) -> {args.out}")
    return EXIT_OK


def cmd_prune(args) -> int:
    kg = load_kg(args.kg)
    gateway = _gateway_from_args(args)
    pruned = prune_via_ift(kg, args.keep, args.rounds, gateway,
                           task_description=args.task,
                           model_name=args.model, cache_dir=args.cache_dir,
                           audit_dir=args.audit_dir)
    save_kg(pruned, args.out)
    print(f"pruned KG: {kg.num_edges} -> {pruned.num_edges} edges "
          f"({pruned.num_concepts} concepts) -> {args.out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    graph = load_graph(args.graph)
    kgs = [load_kg(p) for p in args.kg]
    cfg = MergeConfig(n_c=args.n_c, K=max(len(kgs), 1), mode=args.mode,
                      seed=args.seed)
    merger = EpochMerger(graph, kgs, cfg)
    aug = merger.view(args.epoch)
    save_graph(aug.graph, args.out)
    print(f"augmented graph: {aug.num_original} original + "
          f"{aug.num_concepts} concept nodes, "
          f"{aug.graph.num_edges} directed edges "
          f"({aug.conn_edges.shape[0]} connection) -> {args.out}")
    return EXIT_OK


def _flag_overrides(args) -> list[str]:
    ov = list(args.set or [])

    def push(key: str, value) -> None:
        ov.append(f"{key}={json.dumps(value)}")

    if args.graph is not None:
        push("dataset_path", str(args.graph))
    if args.kg:
        push("kg_paths", [str(p) for p in args.kg])
    if args.arch is not None:
        push("architecture", args.arch)
    if args.folds is not None:
        push("folds", args.folds)
    if args.out_dir is not None:
        push("output_dir", str(args.out_dir))
    if args.label is not None:
        push("label", args.label)
    if args.refold:
        push("refold", True)
    for flag, key in (("seed", "train.seed"), ("epochs", "train.max_epochs"),
                      ("lr", "train.learning_rate"),
                      ("weight_decay", "train.weight_decay"),
                      ("dropout", "train.dropout"),
                      ("hidden", "train.hidden_dim"),
                      ("layers", "train.layers"), ("heads", "train.heads"),
                      ("patience", "train.patience"),
                      ("precision", "train.precision"),
                      ("anneal_form", "train.anneal_form"),
                      ("n_c", "merge.n_c"), ("merge_mode", "merge.mode")):
        value = getattr(args, flag)
        if value is not None:
            push(key, value)
    if args.seed is not None:
        push("merge.seed", args.seed)
    return ov


def cmd_train(args) -> int:
    cfg = load_experiment_config(args.config, _flag_overrides(args))
    if not cfg.dataset_path:
        raise ExperimentConfigError("no dataset: pass --graph or a config")
    report = run_experiment(cfg)
    std = ("" if report.std_accuracy is None
           else f" (std {report.std_accuracy:.4f})")
    print(f"{report.label}: mean accuracy {report.mean_accuracy:.4f}{std} "
          f"over {len(report.runs)} run(s); micro-F1 "
          f"{report.mean_micro_f1:.4f}")
    for failure in report.failures:
        print(f"  run {failure['run']} (seed {failure['seed']}) failed: "
              f"{failure['error']}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    base = load_experiment_config(args.config, list(args.set or []))
    reports = run_ablation(args.suite, base, kg_dir=args.kg_dir,
                           foreign_kg=args.foreign_kg)
    for r in reports:
        std = "" if r.std_accuracy is None else f" (std {r.std_accuracy:.4f})"
        print(f"{r.label}: mean accuracy {r.mean_accuracy:.4f}{std}")
    out_dir = Path(base.output_dir)
    print(f"comparison written to {out_dir / f'ablation_{args.suite}.csv'} "
          f"and {out_dir / f'ablation_{args.suite}.md'}")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        doc = json.loads(Path(path).read_text())
        rows.append((doc.get("label", Path(path).stem),
                     len(doc.get("runs", [])),
                     doc.get("mean_accuracy"),
                     doc.get("std_accuracy"),
                     doc.get("mean_micro_f1")))
    lines = ["| experiment | runs | mean acc | std | mean micro-F1 |",
             "|---|---|---|---|---|"]
    for label, n, acc, std, f1 in rows:
        std_s = "-" if std is None else f"{std:.4f}"
        lines.append(f"| {label} | {n} | {acc:.4f} | {std_s} | {f1:.4f} |")
    table = "\n".join(lines)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demograph",
        description="Graph data augmentation with LLM-generated knowledge "
                    "graphs: dataset prep, KG generation and pruning, "
                    "stochastic merging, GNN training, ablations.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a dataset's graph JSON")
    p.add_argument("--dataset", required=True, choices=DATASETS)
    p.add_argument("--raw-dir", default=None,
                   help="directory with the public raw files (citation sets)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7,
                   help="generator seed (synthetic datasets)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("generate", help="generate a KG via the LLM gateway")
    p.add_argument("--dataset", required=True, choices=DATASETS)
    p.add_argument("--granularity", default="s0",
                   help="s0, s1, s2, or combos like s0+s1")
    p.add_argument("--target-triples", type=int, default=100)
    p.add_argument("--variant", choices=("triples", "concepts"),
                   default="triples", help="what IFT pruning operates on")
    p.add_argument("--ift-keep", type=int, default=None,
                   help="keep-count for IFT pruning (omit to skip pruning)")
    p.add_argument("--ift-rounds", type=int, default=1)
    p.add_argument("--model", default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--audit-dir", default=None)
    p.add_argument("--template-dir", default=None,
                   help="directory overriding packaged prompt templates")
    p.add_argument("--replay-dir", default=None,
                   help="serve responses from recorded fixtures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("prune", help="IFT-prune an existing KG")
    p.add_argument("--kg", required=True)
    p.add_argument("--keep", type=int, required=True)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--task", default="node classification task")
    p.add_argument("--model", default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--audit-dir", default=None)
    p.add_argument("--replay-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("augment", help="merge KGs into a graph for one epoch")
    p.add_argument("--graph", required=True)
    p.add_argument("--kg", action="append", default=[], required=True)
    p.add_argument("--n-c", type=int, default=3)
    p.add_argument("--mode", choices=("dynamic", "static"), default="dynamic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="run the training experiment")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted config override, e.g. merge.n_c=3")
    p.add_argument("--graph", default=None)
    p.add_argument("--kg", action="append", default=None)
    p.add_argument("--arch", choices=("gcn", "gat"), default=None)
    p.add_argument("--folds", type=int, default=None,
                   help="repeated seeds (default 5 from config)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--precision", choices=("float64", "float32"), default=None)
    p.add_argument("--anneal-form", choices=("decreasing", "literal"),
                   default=None)
    p.add_argument("--n-c", type=int, default=None)
    p.add_argument("--merge-mode", choices=("dynamic", "static"), default=None)
    p.add_argument("--refold", action="store_true",
                   help="draw fresh same-size splits per run")
    p.add_argument("--label", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="run one ablation suite")
    p.add_argument("--suite", required=True, choices=ABLATION_SUITES)
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--kg-dir", default=None,
                   help="per-variant KG files (granularity_ift)")
    p.add_argument("--foreign-kg", default=None,
                   help="KG from a different dataset (biased_kg)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="summarize report JSON files")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", default=None, help="write the table here too")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except _RUN_ERRORS as exc:
        logger.error("%s", exc)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
