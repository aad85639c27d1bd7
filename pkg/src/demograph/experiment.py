"""Experiment orchestration: repeated-seed runs, reports, ablation suites."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graphs import Graph, Splits, load_graph
from .kg import KnowledgeGraph, load_kg
from .merge import MergeConfig
from .metrics import compute_metrics
from .nn.train import DivergenceError, TrainConfig, train

logger = logging.getLogger(__name__)

ABLATION_SUITES = ("edges_per_concept", "merging_mode", "granularity_ift",
                   "biased_kg", "with_without_kg")

# Flat config keys each suite is allowed to vary; anything else differing
# across a suite is a bug (asserted by _config_diff).
_SUITE_FACTORS = {
    "edges_per_concept": {"label", "merge.n_c"},
    "merging_mode": {"label", "merge.mode"},
    "granularity_ift": {"label", "granularity", "ift", "kg_paths"},
    "biased_kg": {"label", "kg_paths"},
    "with_without_kg": {"label", "kg_paths"},
}


class ExperimentConfigError(ValueError):
    """Bad experiment configuration (maps to CLI exit code 2)."""


class ExperimentRunError(RuntimeError):
    """All runs failed (maps to CLI exit code 3)."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str
    architecture: str = "gcn"
    merge: MergeConfig = field(default_factory=MergeConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    granularity: str = "s0"
    ift: bool = False
    kg_paths: tuple[str, ...] = ()
    folds: int = 5
    refold: bool = False
    output_dir: str = "runs"
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kg_paths", tuple(self.kg_paths))
        if self.folds < 1:
            raise ExperimentConfigError("folds must be >= 1")
        if self.architecture != self.train.architecture:
            object.__setattr__(self, "train",
                               replace(self.train,
                                       architecture=self.architecture))

    def check_files(self) -> None:
        if not Path(self.dataset_path).exists():
            raise ExperimentConfigError(
                f"dataset file not found: {self.dataset_path}")
        for p in self.kg_paths:
            if not Path(p).exists():
                raise ExperimentConfigError(f"KG file not found: {p}")


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v if not isinstance(v, list) else tuple(v)
    return flat


def config_as_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def _config_diff(a: ExperimentConfig, b: ExperimentConfig) -> set[str]:
    fa = _flatten(config_as_dict(a))
    fb = _flatten(config_as_dict(b))
    return {k for k in set(fa) | set(fb) if fa.get(k) != fb.get(k)}


@dataclass
class Report:
    label: str
    config: dict
    seeds: list[int]
    runs: list[dict]
    failures: list[dict]
    mean_accuracy: float | None
    std_accuracy: float | None
    mean_micro_f1: float | None
    kg_provenance: list[dict]
    created_at: str

    def as_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        if self.std_accuracy is None:
            # std over <2 runs is omitted, not reported as 0
            doc.pop("std_accuracy")
        return doc


def _refold_splits(graph: Graph, seed: int) -> Graph:
    """Permute labeled nodes into fresh splits of the same sizes."""
    sizes = (graph.splits.train.size, graph.splits.val.size,
             graph.splits.test.size)
    labeled = np.flatnonzero(graph.labels >= 0)
    rng = np.random.default_rng([seed, 202])
    perm = rng.permutation(labeled)
    train = np.sort(perm[:sizes[0]])
    val = np.sort(perm[sizes[0]:sizes[0] + sizes[1]])
    test = np.sort(perm[sizes[0] + sizes[1]:sizes[0] + sizes[1] + sizes[2]])
    return Graph(features=graph.features, labels=graph.labels,
                 edges=graph.edges, splits=Splits(train, val, test),
                 origin=graph.origin)


def run_experiment(cfg: ExperimentConfig, write_outputs: bool = True) -> Report:
    """Execute folds/repeats with seeds base+i and aggregate a Report.

    Divergent runs are recorded as failures; the report is still emitted
    for the completed ones. Input files are never mutated.
    """
    cfg.check_files()
    base = load_graph(cfg.dataset_path)
    kgs = [load_kg(p) for p in cfg.kg_paths]
    out_dir = Path(cfg.output_dir)
    label = cfg.label or "experiment"

    runs: list[dict] = []
    failures: list[dict] = []
    seeds: list[int] = []
    for i in range(cfg.folds):
        seed = cfg.train.seed + i
        seeds.append(seed)
        graph = _refold_splits(base, seed) if cfg.refold else base
        merge_cfg = replace(cfg.merge, seed=seed)
        train_cfg = replace(cfg.train, seed=seed)
        metrics_path = (out_dir / f"{label}_run{i}_metrics.csv"
                        if write_outputs else None)
        checkpoint_path = (out_dir / f"{label}_run{i}_checkpoint.npz"
                           if write_outputs else None)
        try:
            result = train(graph, kgs, merge_cfg, train_cfg,
                           metrics_path=metrics_path,
                           checkpoint_path=checkpoint_path)
        except DivergenceError as exc:
            logger.error("run %d (seed %d) diverged: %s", i, seed, exc)
            failures.append({"run": i, "seed": seed, "error": str(exc)})
            continue
        test_mask = graph.splits.test if graph.splits.test.size else graph.splits.val
        labels = np.concatenate([
            graph.labels,
            np.full(result.predictions.size - graph.num_nodes, -1,
                    dtype=np.int64)])
        scores = compute_metrics(result.predictions, labels, test_mask)
        runs.append({
            "run": i,
            "seed": seed,
            "accuracy": scores["accuracy"],
            "micro_f1": scores["micro_f1"],
            "best_val_acc": result.best_val_acc,
            "best_epoch": result.best_epoch,
            "epochs_run": result.epochs_run,
            "metrics_csv": str(metrics_path) if metrics_path else None,
        })
    if not runs:
        raise ExperimentRunError(
            f"all {cfg.folds} runs failed: {[f['error'] for f in failures]}")

    accs = np.array([r["accuracy"] for r in runs])
    f1s = np.array([r["micro_f1"] for r in runs])
    report = Report(
        label=label,
        config=config_as_dict(cfg),
        seeds=seeds,
        runs=runs,
        failures=failures,
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std(ddof=1)) if len(runs) >= 2 else None,
        mean_micro_f1=float(f1s.mean()),
        kg_provenance=[kg.provenance for kg in kgs],
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    )
    if write_outputs:
        out_dir.mkdir(parents=True, exist_ok=True)
        report_path = out_dir / f"{label}_report.json"
        report_path.write_text(
            json.dumps(report.as_dict(), indent=2, sort_keys=True))
        logger.info("report written to %s", report_path)
    return report


def _suite_variants(suite: str, base: ExperimentConfig,
                    kg_dir: str | Path | None = None,
                    foreign_kg: str | None = None) -> list[ExperimentConfig]:
    if suite == "edges_per_concept":
        return [replace(base, label=f"nc{n}", merge=replace(base.merge, n_c=n))
                for n in (0, 3, 30, 100)]
    if suite == "merging_mode":
        return [replace(base, label=mode,
                        merge=replace(base.merge, mode=mode))
                for mode in ("static", "dynamic")]
    if suite == "granularity_ift":
        if kg_dir is None:
            raise ExperimentConfigError(
                "granularity_ift needs --kg-dir with per-variant KG files "
                "named kg_<granularity>_<ift|noift>.jsonl")
        variants = []
        for gran in ("s0", "s1", "s0+s1"):
            for ift in (False, True):
                tag = "ift" if ift else "noift"
                fname = f"kg_{gran.replace('+', '')}_{tag}.jsonl"
                path = Path(kg_dir) / fname
                if not path.exists():
                    raise ExperimentConfigError(
                        f"granularity_ift variant file missing: {path}")
                variants.append(replace(
                    base, label=f"{gran}_{tag}", granularity=gran, ift=ift,
                    kg_paths=(str(path),)))
        return variants
    if suite == "biased_kg":
        if not base.kg_paths:
            raise ExperimentConfigError(
                "biased_kg needs the base config to reference the native KG")
        if foreign_kg is None or not Path(foreign_kg).exists():
            raise ExperimentConfigError(
                "biased_kg needs --foreign-kg pointing at a KG generated "
                "for a different dataset")
        return [replace(base, label="native_kg"),
                replace(base, label="biased_kg", kg_paths=(str(foreign_kg),))]
    if suite == "with_without_kg":
        if not base.kg_paths:
            raise ExperimentConfigError(
                "with_without_kg needs the base config to reference a KG")
        return [replace(base, label="with_kg"),
                replace(base, label="without_kg", kg_paths=())]
    raise ExperimentConfigError(
        f"unknown suite {suite!r}; pick from {ABLATION_SUITES}")


def run_ablation(suite: str, base: ExperimentConfig,
                 kg_dir: str | Path | None = None,
                 foreign_kg: str | None = None,
                 write_outputs: bool = True) -> list[Report]:
    """Grid of run_experiment calls varying exactly one factor."""
    variants = _suite_variants(suite, base, kg_dir, foreign_kg)
    allowed = _SUITE_FACTORS[suite]
    for v in variants:
        diff = _config_diff(variants[0], v)
        stray = diff - allowed
        if stray:
            raise ExperimentConfigError(
                f"suite {suite} would vary unexpected fields: {sorted(stray)}")
    reports = [run_experiment(v, write_outputs=write_outputs)
               for v in variants]
    if write_outputs:
        write_comparison(suite, reports, Path(base.output_dir))
    return reports


def comparison_rows(reports: list[Report]) -> list[dict]:
    rows = []
    for r in reports:
        rows.append({
            "label": r.label,
            "runs": len(r.runs),
            "mean_accuracy": r.mean_accuracy,
            "std_accuracy": r.std_accuracy,
            "mean_micro_f1": r.mean_micro_f1,
        })
    return rows


def write_comparison(name: str, reports: list[Report], out_dir: Path) -> None:
    """Consolidated cross-variant table as CSV and markdown."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = comparison_rows(reports)
    csv_path = out_dir / f"ablation_{name}.csv"
    with csv_path.open("w") as fh:
        fh.write("label,runs,mean_accuracy,std_accuracy,mean_micro_f1\n")
        for row in rows:
            std = "" if row["std_accuracy"] is None else repr(row["std_accuracy"])
            fh.write(f"{row['label']},{row['runs']},"
                     f"{row['mean_accuracy']!r},{std},"
                     f"{row['mean_micro_f1']!r}\n")
    md_path = out_dir / f"ablation_{name}.md"
    lines = ["| variant | runs | mean acc | std | mean micro-F1 |",
             "|---|---|---|---|---|"]
    for row in rows:
        std = "-" if row["std_accuracy"] is None else f"{row['std_accuracy']:.4f}"
        lines.append(
            f"| {row['label']} | {row['runs']} | {row['mean_accuracy']:.4f} "
            f"| {std} | {row['mean_micro_f1']:.4f} |")
    md_path.write_text("\n".join(lines) + "\n")


def _coerce_override(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _set_nested(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ExperimentConfigError(
                f"cannot override {dotted!r}: {k!r} is not a section")
    node[keys[-1]] = value


def load_experiment_config(path: str | Path | None = None,
                           overrides: list[str] = ()) -> ExperimentConfig:
    """Config = JSON document + dotted key=value overrides (--set)."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ExperimentConfigError(f"cannot read config {path}: {exc}")
        if not isinstance(doc, dict):
            raise ExperimentConfigError(f"config {path} must be a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ExperimentConfigError(
                f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        _set_nested(doc, key.strip(), _coerce_override(value.strip()))
    try:
        merge_doc = doc.pop("merge", {})
        train_doc = doc.pop("train", {})
        return ExperimentConfig(
            merge=MergeConfig(**merge_doc),
            train=TrainConfig(**train_doc),
            **doc,
        )
    except (TypeError, ValueError) as exc:
        raise ExperimentConfigError(f"invalid experiment config: {exc}")
