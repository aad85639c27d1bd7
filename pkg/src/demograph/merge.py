"""Dynamic merging: attach KG concept nodes to sampled original nodes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graphs import (NO_LABEL, ORIGIN_CONCEPT, ORIGIN_ORIGINAL, Graph)
from .kg import KnowledgeGraph, union_kgs

logger = logging.getLogger(__name__)

# Sub-stream tags for seed sequences; anchors re-derive per epoch while
# concept features stay pinned to one stream so embedding rows are stable
# across epoch views.
_ANCHOR_STREAM = 0
_FEATURE_STREAM = 1

MERGE_MODES = ("dynamic", "static")


class MergeError(ValueError):
    """Invalid merge configuration or arguments."""


@dataclass(frozen=True)
class MergeConfig:
    """Knobs for the stochastic KG merge.

    n_c is the number of connection edges per concept node (clamped to the
    original node count); K the expected number of KGs unioned per step;
    mode picks whether anchors are resampled each epoch (dynamic) or frozen
    at the epoch-0 draw (static). shared_anchors draws one anchor set used
    by every concept instead of per-concept independent samples.
    """

    n_c: int = 3
    K: int = 1
    mode: str = "dynamic"
    seed: int = 0
    concept_feature_dim: int | None = None
    shared_anchors: bool = False

    def __post_init__(self):
        if self.n_c < 0:
            raise MergeError("n_c must be >= 0")
        if self.K < 1:
            raise MergeError("K must be >= 1")
        if self.mode not in MERGE_MODES:
            raise MergeError(f"mode must be one of {MERGE_MODES}")


@dataclass(eq=False)
class AugmentedGraph:
    """Original graph plus appended concept nodes for one epoch view."""

    graph: Graph
    concept_index_map: dict[str, int]
    conn_edges: np.ndarray
    kg_edges: np.ndarray
    num_original: int

    @property
    def num_concepts(self) -> int:
        return len(self.concept_index_map)

    def concept_node_ids(self) -> np.ndarray:
        return np.arange(self.num_original,
                         self.num_original + self.num_concepts, dtype=np.int64)


def sample_anchor_nodes(graph: Graph, n_c: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement of min(n_c, |V0|) original nodes."""
    originals = graph.original_ids()
    if originals.size == 0:
        raise MergeError("graph has no original nodes to anchor to")
    k = min(int(n_c), originals.size)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    picked = rng.choice(originals, size=k, replace=False)
    return np.sort(picked.astype(np.int64))


def init_concept_features(num_concepts: int, dim: int,
                          rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Gaussian rows with variance 1/dim (unit expected row norm)."""
    if dim < 1:
        raise MergeError("feature dim must be >= 1")
    if num_concepts == 0:
        return np.zeros((0, dim), dtype=np.float64)
    return rng.normal(0.0, 1.0 / np.sqrt(dim), size=(num_concepts, dim))


def _structural_kg_edges(kg: KnowledgeGraph,
                         index: dict[str, int]) -> np.ndarray:
    # Relation labels are erased for the homogeneous GNN; multi-relation
    # pairs collapse to one structural edge.
    pairs = {(index[e.head], index[e.tail]) for e in kg.edges}
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def merge_kgs(graph: Graph, kgs: Iterable[KnowledgeGraph], cfg: MergeConfig,
              rng: np.random.Generator,
              concept_features: np.ndarray | None = None) -> AugmentedGraph:
    """Union the KGs, append concept nodes, and draw connection edges.

    Concept node ids start at |V0| in sorted-concept order, so identical KG
    inputs give identical id assignments. Anchor draws consume `rng`;
    concept features default to a stream derived from cfg.seed alone so
    every epoch view sees the same rows.
    """
    kgs = list(kgs)
    if kgs and len(kgs) != cfg.K:
        logger.debug("merging %d KGs where cfg.K=%d", len(kgs), cfg.K)
    union = union_kgs(kgs)
    concepts = union.sorted_concepts()
    n0 = graph.num_nodes
    dim = graph.feature_dim
    if cfg.concept_feature_dim is not None and cfg.concept_feature_dim != dim:
        raise MergeError(
            f"concept_feature_dim {cfg.concept_feature_dim} != graph feature "
            f"dim {dim}")
    index = {c: n0 + i for i, c in enumerate(concepts)}

    if concept_features is None:
        concept_features = init_concept_features(
            len(concepts), dim,
            np.random.default_rng([cfg.seed, _FEATURE_STREAM]))
    if concept_features.shape != (len(concepts), dim):
        raise MergeError(
            f"concept feature matrix shape {concept_features.shape} != "
            f"({len(concepts)}, {dim})")

    kg_edges = _structural_kg_edges(union, index)

    conn = []
    if concepts and cfg.n_c > 0:
        if cfg.shared_anchors:
            anchors = sample_anchor_nodes(graph, cfg.n_c, rng)
            for c in concepts:
                for z in anchors:
                    conn.append((index[c], int(z)))
        else:
            for c in concepts:
                anchors = sample_anchor_nodes(graph, cfg.n_c, rng)
                for z in anchors:
                    conn.append((index[c], int(z)))
    conn_edges = (np.array(conn, dtype=np.int64) if conn
                  else np.zeros((0, 2), dtype=np.int64))

    features = np.concatenate([graph.features, concept_features], axis=0)
    labels = np.concatenate(
        [graph.labels, np.full(len(concepts), NO_LABEL, dtype=np.int64)])
    origin = np.concatenate(
        [graph.origin,
         np.full(len(concepts), ORIGIN_CONCEPT, dtype="<U8")])
    parts = [graph.edges]
    if kg_edges.size:
        parts.append(kg_edges)
    if conn_edges.size:
        parts.append(conn_edges)
    edges = np.concatenate(parts, axis=0)
    merged = Graph(features=features, labels=labels, edges=edges,
                   splits=graph.splits, origin=origin)
    return AugmentedGraph(graph=merged, concept_index_map=index,
                          conn_edges=conn_edges, kg_edges=kg_edges,
                          num_original=n0)


class EpochMerger:
    """Precomputes the KG union and concept features; serves epoch views.

    Dynamic mode reseeds anchor sampling from (seed, epoch); static mode
    freezes the epoch-0 view for the whole run.
    """

    def __init__(self, base: Graph, kgs: Iterable[KnowledgeGraph],
                 cfg: MergeConfig):
        self.base = base
        self.cfg = cfg
        self.union = union_kgs(list(kgs))
        self.concepts = self.union.sorted_concepts()
        self.concept_features = init_concept_features(
            len(self.concepts), base.feature_dim,
            np.random.default_rng([cfg.seed, _FEATURE_STREAM]))
        self._static_view: AugmentedGraph | None = None

    def view(self, epoch: int, concept_features: np.ndarray | None = None) -> AugmentedGraph:
        if self.cfg.mode == "static":
            if concept_features is None and self._static_view is not None:
                return self._static_view
            epoch = 0
        feats = (concept_features if concept_features is not None
                 else self.concept_features)
        rng = np.random.default_rng([self.cfg.seed, _ANCHOR_STREAM, epoch])
        out = merge_kgs(self.base, [self.union], self.cfg, rng,
                        concept_features=feats)
        if self.cfg.mode == "static" and concept_features is None:
            self._static_view = out
        return out


def epoch_view(base: Graph, kgs: Iterable[KnowledgeGraph], cfg: MergeConfig,
               epoch: int) -> AugmentedGraph:
    """One-shot epoch view; see EpochMerger for loop use."""
    return EpochMerger(base, kgs, cfg).view(epoch)
