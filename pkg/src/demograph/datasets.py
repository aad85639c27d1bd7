"""Dataset preparation: citation benchmarks from raw files, synthetic SBM."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import Graph, GraphError, Splits, save_graph
from .prompts import DatasetContext

logger = logging.getLogger(__name__)

DATASETS = ("cora", "citeseer", "sbm-synthetic")

# Raw LINQS file pairs: one row per paper in .content
# (<id> <tab-separated 0/1 word vector> <class>), one citation pair per line
# in .cites.
RAW_FILES = {
    "cora": ("cora.content", "cora.cites"),
    "citeseer": ("citeseer.content", "citeseer.cites"),
}

SPLIT_SIZES = {
    "cora": (20, 500, 1000),      # per-class train, val, test
    "citeseer": (20, 500, 1000),
}

CLASS_DISPLAY_NAMES = {
    "cora": {
        "Case_Based": "Case Based",
        "Genetic_Algorithms": "Genetic Algorithms",
        "Neural_Networks": "Neural Networks",
        "Probabilistic_Methods": "Probabilistic Methods",
        "Reinforcement_Learning": "Reinforcement Learning",
        "Rule_Learning": "Rule Learning",
        "Theory": "Theory",
    },
    "citeseer": {
        "Agents": "Agents",
        "AI": "Artificial Intelligence",
        "DB": "Databases",
        "IR": "Information Retrieval",
        "ML": "Machine Learning",
        "HCI": "Human Computer Interaction",
    },
}

DATASET_SUMMARIES = {
    "cora": (
        "The Cora dataset consists of 2708 scientific publications "
        "classified into one of seven classes. The citation network "
        "consists of 5429 links. Each publication in the dataset is "
        "described by a 0/1-valued word vector indicating the "
        "absence/presence of the corresponding word from the dictionary. "
        "The dictionary consists of 1433 unique words."
    ),
    "citeseer": (
        "The Citeseer dataset consists of 3312 scientific publications "
        "classified into one of six classes. The citation network consists "
        "of 4732 links. Each publication in the dataset is described by a "
        "0/1-valued word vector indicating the absence/presence of the "
        "corresponding word from the dictionary. The dictionary consists "
        "of 3703 unique words."
    ),
    "sbm-synthetic": (
        "A synthetic two-community stochastic block model graph with 200 "
        "nodes, dense intra-community and sparse inter-community links. "
        "Node features are the one-hot community indicator plus Gaussian "
        "noise."
    ),
}


class DatasetError(GraphError):
    """Dataset preparation failed (missing or malformed raw files)."""


@dataclass(frozen=True)
class SBMConfig:
    num_nodes: int = 200
    num_blocks: int = 2
    p_in: float = 0.1
    p_out: float = 0.01
    feature_noise: float = 1.0
    train_per_block: int = 10
    val_per_block: int = 20
    test_per_block: int = 70
    seed: int = 7


def generate_sbm(cfg: SBMConfig = SBMConfig()) -> Graph:
    """Deterministic two-block SBM; regenerable bit-exactly from the seed."""
    rng = np.random.default_rng([cfg.seed, 101])
    n = cfg.num_nodes
    blocks = np.arange(n) * cfg.num_blocks // n
    draw = rng.random((n, n))
    prob = np.where(blocks[:, None] == blocks[None, :], cfg.p_in, cfg.p_out)
    upper = np.triu(draw < prob, k=1)
    src, dst = np.nonzero(upper)
    edges = np.stack([src, dst], axis=1)

    features = np.zeros((n, cfg.num_blocks))
    features[np.arange(n), blocks] = 1.0
    features += rng.normal(0.0, cfg.feature_noise, size=features.shape)

    train, val, test = [], [], []
    for b in range(cfg.num_blocks):
        members = rng.permutation(np.flatnonzero(blocks == b))
        need = cfg.train_per_block + cfg.val_per_block + cfg.test_per_block
        if members.size < need:
            raise DatasetError(
                f"block {b} has {members.size} nodes, need {need} for splits")
        train.extend(members[:cfg.train_per_block])
        val.extend(members[cfg.train_per_block:
                           cfg.train_per_block + cfg.val_per_block])
        test.extend(members[cfg.train_per_block + cfg.val_per_block:need])
    return Graph(features=features, labels=blocks.astype(np.int64),
                 edges=edges,
                 splits=Splits(sorted(train), sorted(val), sorted(test)))


def _missing_raw_error(name: str, raw_dir: Path) -> DatasetError:
    content, cites = RAW_FILES[name]
    return DatasetError(
        f"raw {name} files not found under {raw_dir}: expected "
        f"{content!r} and {cites!r} (the public LINQS release; see README "
        f"for fetch instructions)")


def load_citation_dir(name: str, raw_dir: str | Path) -> Graph:
    """Parse the LINQS .content/.cites pair into a Graph with standard-size
    splits (per-class train, then val, then trailing test in file order)."""
    raw_dir = Path(raw_dir)
    content_name, cites_name = RAW_FILES[name]
    content_path = raw_dir / content_name
    cites_path = raw_dir / cites_name
    if not content_path.exists() or not cites_path.exists():
        raise _missing_raw_error(name, raw_dir)

    ids: dict[str, int] = {}
    rows: list[np.ndarray] = []
    label_strings: list[str] = []
    for lineno, line in enumerate(
            content_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 3:
            raise DatasetError(
                f"{content_path}:{lineno}: expected id, features, class")
        node_id, vec, cls = parts[0], parts[1:-1], parts[-1]
        if node_id in ids:
            raise DatasetError(
                f"{content_path}:{lineno}: duplicate node id {node_id!r}")
        ids[node_id] = len(rows)
        try:
            rows.append(np.array([float(x) for x in vec]))
        except ValueError as exc:
            raise DatasetError(
                f"{content_path}:{lineno}: bad feature value: {exc}") from exc
        label_strings.append(cls)
    if not rows:
        raise DatasetError(f"{content_path}: no content rows")
    dims = {r.size for r in rows}
    if len(dims) != 1:
        raise DatasetError(
            f"{content_path}: inconsistent feature dims {sorted(dims)}")
    features = np.stack(rows)
    classes = sorted(set(label_strings))
    class_index = {c: i for i, c in enumerate(classes)}
    labels = np.array([class_index[c] for c in label_strings], dtype=np.int64)

    edges = []
    dangling = 0
    for lineno, line in enumerate(
            cites_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError(
                f"{cites_path}:{lineno}: expected 'cited citing' pair")
        cited, citing = parts
        if cited not in ids or citing not in ids:
            dangling += 1
            continue
        edges.append((ids[citing], ids[cited]))
    if dangling:
        logger.warning("%s: skipped %d citation rows referencing unknown ids",
                       cites_path, dangling)

    per_class, val_count, test_count = SPLIT_SIZES[name]
    taken = np.zeros(len(rows), dtype=bool)
    train = []
    fill = {c: 0 for c in range(len(classes))}
    for i, y in enumerate(labels):
        if fill[int(y)] < per_class:
            fill[int(y)] += 1
            train.append(i)
            taken[i] = True
    val = [i for i in range(len(rows)) if not taken[i]][:val_count]
    taken[val] = True
    test = [i for i in range(len(rows) - 1, -1, -1) if not taken[i]]
    test = sorted(test[:test_count])
    return Graph(features=features, labels=labels,
                 edges=np.array(edges, dtype=np.int64),
                 splits=Splits(train, val, test))


def prepare_dataset(name: str, out_path: str | Path,
                    raw_dir: str | Path | None = None,
                    sbm: SBMConfig = SBMConfig()) -> Graph:
    """Build the named dataset and write its Graph JSON to out_path."""
    if name not in DATASETS:
        raise DatasetError(f"unknown dataset {name!r}; pick from {DATASETS}")
    if name == "sbm-synthetic":
        graph = generate_sbm(sbm)
    else:
        if raw_dir is None:
            raise DatasetError(
                f"dataset {name!r} needs --raw-dir pointing at the public "
                f"LINQS files {RAW_FILES[name]}")
        graph = load_citation_dir(name, raw_dir)
    save_graph(graph, out_path)
    logger.info("%s: N=%d E=%d F=%d C=%d -> %s", name, graph.num_nodes,
                graph.num_edges, graph.feature_dim, graph.num_classes,
                out_path)
    return graph


def dataset_context(name: str, target_triple_count: int = 100) -> DatasetContext:
    """Prompting context (summary, task, class names) for a known dataset."""
    if name not in DATASETS:
        raise DatasetError(f"unknown dataset {name!r}; pick from {DATASETS}")
    class_names = tuple(CLASS_DISPLAY_NAMES.get(name, {}).values())
    if name == "sbm-synthetic":
        class_names = ("Community A", "Community B")
    return DatasetContext(
        dataset_summary=DATASET_SUMMARIES[name],
        task_description="node classification task",
        class_names=class_names,
        target_triple_count=target_triple_count,
        example_triple="[Machine Learning, is a subfield of, Artificial Intelligence]",
    )
