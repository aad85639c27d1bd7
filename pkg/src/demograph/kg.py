"""Knowledge graphs from triples: build, union, IFT pruning, persistence."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import (GENERATION_TEMPERATURE, IFT_TEMPERATURE, LLMGateway,
                      request_digest, user_request)
from .prompts import (DatasetContext, GranularityLevel, load_template,
                      plan_prompts, render_ift_prompt,
                      render_kg_from_concepts_prompt)
from .triples import Triple, normalize_entity, parse_triples

logger = logging.getLogger(__name__)

# Single-token concepts that carry no class signal. LLM-side pruning is the
# first line of defense; this stoplist is the client-side backstop.
DEFAULT_STOPLIST = frozenset({
    "a", "an", "the", "is", "are", "be", "was", "were", "it", "its", "this",
    "that", "these", "those", "of", "in", "on", "to", "for", "and", "or",
    "with", "by", "as", "at", "from", "thing", "things", "etc", "data",
    "dataset", "datasets", "node", "nodes", "graph", "graphs", "concept",
    "concepts", "entity", "entities", "disease", "label", "labels", "class",
    "classes", "type", "types",
})


class KGError(ValueError):
    """Base class for knowledge-graph failures."""


class KGLoadError(KGError):
    """A persisted KG could not be read; message names the offending line."""


@dataclass(eq=False)
class KnowledgeGraph:
    """Concept nodes plus directed, labeled edges built from triples.

    Equality is structural on (concepts, edge set, relations); provenance is
    bookkeeping and excluded so unions and reloads compare sanely.
    """

    concepts: frozenset[str]
    edges: tuple[Triple, ...]
    relations: frozenset[str]
    provenance: dict = field(default_factory=dict)

    def __init__(self, concepts=(), edges=(), relations=None, provenance=None):
        edges = tuple(edges)
        deduped = []
        seen = set()
        for e in edges:
            if e.key() not in seen:
                seen.add(e.key())
                deduped.append(e)
        self.edges = tuple(deduped)
        self.concepts = frozenset(concepts) | {
            c for e in self.edges for c in (e.head, e.tail)}
        self.relations = (frozenset(relations) if relations is not None
                          else frozenset(e.relation for e in self.edges))
        self.provenance = dict(provenance or {})
        self.validate()

    @property
    def num_concepts(self) -> int:
        return len(self.concepts)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def sorted_concepts(self) -> list[str]:
        return sorted(self.concepts)

    def validate(self) -> None:
        for c in self.concepts:
            if normalize_entity(c) != c:
                raise KGError(f"concept not normalized: {c!r}")
        for e in self.edges:
            if e.head not in self.concepts or e.tail not in self.concepts:
                raise KGError(f"edge endpoint outside concept set: {e!r}")
            if e.relation not in self.relations:
                raise KGError(f"edge relation outside relation set: {e!r}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (self.concepts == other.concepts
                and set(e.key() for e in self.edges)
                == set(e.key() for e in other.edges)
                and self.relations == other.relations)


def build_kg(triples, provenance=None) -> KnowledgeGraph:
    """Concepts are the union of heads and tails; edges are deduped triples."""
    return KnowledgeGraph(edges=tuple(triples), provenance=provenance)


def union_kgs(kgs) -> KnowledgeGraph:
    """Set-union of concepts, edges, and relations; dedupe keeps first."""
    kgs = list(kgs)
    edges = [e for kg in kgs for e in kg.edges]
    concepts = frozenset().union(*(kg.concepts for kg in kgs)) if kgs else ()
    return KnowledgeGraph(
        concepts=concepts, edges=edges,
        provenance={"union_of": [kg.provenance for kg in kgs]})


def filter_low_entropy(triples, stoplist=DEFAULT_STOPLIST):
    """Drop triples whose head or tail is a bare stopword token."""
    kept = []
    for t in triples:
        if t.head in stoplist or t.tail in stoplist:
            logger.debug("stoplist drop: %r", t)
            continue
        kept.append(t)
    return kept


def filter_kg(kg: KnowledgeGraph, stoplist=DEFAULT_STOPLIST) -> KnowledgeGraph:
    prov = dict(kg.provenance)
    prov["stoplist_filtered"] = True
    return build_kg(filter_low_entropy(kg.edges, stoplist), provenance=prov)


def save_kg(kg: KnowledgeGraph, path: str | Path) -> None:
    """JSONL: one header record with provenance, then one edge per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        header = {"provenance": kg.provenance,
                  "concepts": kg.sorted_concepts()}
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for e in kg.edges:
            fh.write(json.dumps({"h": e.head, "r": e.relation, "t": e.tail},
                                ensure_ascii=False) + "\n")


def load_kg(path: str | Path) -> KnowledgeGraph:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise KGLoadError(f"{path}:1: empty file, header record expected")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise KGLoadError(f"{path}:1: bad header: {exc.msg}") from exc
    if not isinstance(header, dict) or "provenance" not in header:
        raise KGLoadError(f"{path}:1: header record must carry provenance")
    edges = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            edges.append(Triple(doc["h"], doc["r"], doc["t"],
                                source_line=lineno))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise KGLoadError(f"{path}:{lineno}: bad edge record: {exc}") from exc
    return KnowledgeGraph(concepts=header.get("concepts", ()), edges=edges,
                          provenance=header["provenance"])


def _ask(gateway: LLMGateway, prompt: str, temperature: float,
         model_name: str | None, cache_dir=None):
    model = model_name or gateway.config.model_name
    request = user_request(model, prompt, temperature=temperature)
    if cache_dir is not None:
        response = gateway.complete_cached(request, cache_dir)
    else:
        response = gateway.complete(request)
    return request, response


def _write_audit(audit_dir, tag: str, record: dict) -> None:
    if audit_dir is None:
        return
    path = Path(audit_dir) / f"{tag}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, ensure_ascii=False, sort_keys=True),
                    encoding="utf-8")


def prune_via_ift(kg: KnowledgeGraph, number_to_keep: int, rounds: int,
                  gateway: LLMGateway, *, task_description: str = "node classification task",
                  model_name: str | None = None, cache_dir=None,
                  audit_dir=None, template=None) -> KnowledgeGraph:
    """Re-prompt the KG's triples for pruning, `rounds` times.

    The parsed response becomes the new KG each round (the model may both
    drop and add triples). A round whose response parses to zero triples
    aborts the loop and returns the previous KG with a warning.
    """
    if rounds < 1:
        raise KGError("rounds must be >= 1")
    if number_to_keep < 1:
        raise KGError("number_to_keep must be >= 1")
    current = kg
    audit_trail = []
    for rnd in range(1, rounds + 1):
        prompt = render_ift_prompt(current.edges, number_to_keep,
                                   kind="ift_triples",
                                   task_description=task_description,
                                   template=template)
        request, response = _ask(gateway, prompt, IFT_TEMPERATURE,
                                 model_name, cache_dir)
        parsed = parse_triples(response.text)
        record = {
            "round": rnd,
            "request_digest": request_digest(request),
            "prompt": prompt,
            "response_text": response.text,
            "edges_in": current.num_edges,
            "edges_out": len(parsed.triples),
            "skipped_lines": parsed.skipped,
        }
        audit_trail.append({k: record[k] for k in
                            ("round", "request_digest", "edges_in",
                             "edges_out", "skipped_lines")})
        _write_audit(audit_dir, f"ift_round_{rnd:02d}", record)
        if not parsed.triples:
            logger.warning(
                "IFT round %d parsed zero triples; keeping previous KG", rnd)
            break
        prov = dict(kg.provenance)
        prov["ift"] = {"rounds_done": rnd, "number_to_keep": number_to_keep,
                       "audit": list(audit_trail)}
        current = build_kg(parsed.triples, provenance=prov)
    return current


_ENUMERATION = re.compile(r"^\s*(?:[-*•]|\d+[.)]|\(\d+\))\s*")


def parse_concept_lines(text: str) -> list[str]:
    """Concept-per-line responses: strip bullets/numbering, normalize, dedupe."""
    concepts = []
    seen = set()
    for line in text.splitlines():
        cleaned = normalize_entity(_ENUMERATION.sub("", line))
        if not cleaned or cleaned in seen:
            continue
        seen.add(cleaned)
        concepts.append(cleaned)
    return concepts


def prune_concepts_via_ift(concepts, number_to_keep: int, rounds: int,
                           gateway: LLMGateway, *,
                           task_description: str = "node classification task",
                           model_name: str | None = None, cache_dir=None,
                           audit_dir=None, template=None) -> list[str]:
    """Concept-list variant of IFT pruning; returns the kept concepts."""
    if rounds < 1:
        raise KGError("rounds must be >= 1")
    current = list(concepts)
    if not current:
        raise KGError("concept list for IFT pruning is empty")
    for rnd in range(1, rounds + 1):
        prompt = render_ift_prompt(current, number_to_keep,
                                   kind="ift_concepts",
                                   task_description=task_description,
                                   template=template)
        request, response = _ask(gateway, prompt, IFT_TEMPERATURE,
                                 model_name, cache_dir)
        kept = parse_concept_lines(response.text)
        _write_audit(audit_dir, f"ift_concepts_round_{rnd:02d}", {
            "round": rnd,
            "request_digest": request_digest(request),
            "prompt": prompt,
            "response_text": response.text,
            "concepts_in": len(current),
            "concepts_out": len(kept),
        })
        if not kept:
            logger.warning(
                "IFT concepts round %d parsed zero concepts; keeping previous",
                rnd)
            return current
        current = kept
    return current


def generate_kg(ctx: DatasetContext, levels, gateway: LLMGateway, *,
                variant: str = "triples", ift_keep: int | None = None,
                ift_rounds: int = 1, model_name: str | None = None,
                cache_dir=None, audit_dir=None, template_dir=None,
                stoplist=DEFAULT_STOPLIST) -> KnowledgeGraph:
    """Full generation pipeline: prompt plan, parse, filter, union, prune.

    variant="triples" (default) prunes the generated triples directly.
    variant="concepts" prunes the concept set first and asks for fresh
    triples restricted to the survivors.
    """
    generation_template = load_template("generation", template_dir)
    plan = plan_prompts(ctx, levels, template=generation_template)
    parts = []
    total_skipped = 0
    for subject, prompt in plan:
        request, response = _ask(gateway, prompt, GENERATION_TEMPERATURE,
                                 model_name, cache_dir)
        parsed = parse_triples(response.text)
        total_skipped += parsed.skipped
        kept = filter_low_entropy(parsed.triples, stoplist)
        logger.info("subject %r: %d triples (%d skipped lines, %d stoplisted)",
                    subject, len(kept), parsed.skipped,
                    len(parsed.triples) - len(kept))
        parts.append(build_kg(kept, provenance={
            "subject": subject,
            "generation_digest": request_digest(request),
        }))
    levels_str = "+".join(str(l) for l in (
        (levels,) if isinstance(levels, GranularityLevel) else tuple(levels)))
    kg = union_kgs(parts)
    kg.provenance["granularity"] = levels_str
    kg.provenance["subjects"] = [s for s, _ in plan]
    kg.provenance["skipped_lines"] = total_skipped
    if ift_keep is None:
        return kg
    if variant == "triples":
        return prune_via_ift(kg, ift_keep, ift_rounds, gateway,
                             task_description=ctx.task_description,
                             model_name=model_name, cache_dir=cache_dir,
                             audit_dir=audit_dir,
                             template=load_template("ift_triples", template_dir))
    if variant != "concepts":
        raise KGError(f"unknown pruning variant {variant!r}")
    kept = prune_concepts_via_ift(
        kg.sorted_concepts(), ift_keep, ift_rounds, gateway,
        task_description=ctx.task_description, model_name=model_name,
        cache_dir=cache_dir, audit_dir=audit_dir,
        template=load_template("ift_concepts", template_dir))
    prompt = render_kg_from_concepts_prompt(
        ctx, kept, template=load_template("kg_from_concepts", template_dir))
    request, response = _ask(gateway, prompt, IFT_TEMPERATURE, model_name,
                             cache_dir)
    parsed = parse_triples(response.text)
    if not parsed.triples:
        logger.warning("triple construction over pruned concepts parsed "
                       "zero triples; returning unpruned KG")
        return kg
    prov = dict(kg.provenance)
    prov["ift"] = {"variant": "concepts", "kept_concepts": kept,
                   "construction_digest": request_digest(request)}
    return build_kg(filter_low_entropy(parsed.triples, stoplist),
                    provenance=prov)
