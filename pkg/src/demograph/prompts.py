"""Prompt templates, granularity planning, and IFT pruning prompts."""

from __future__ import annotations

import enum
import logging
import string
from dataclasses import dataclass, field
from pathlib import Path

from .triples import Triple, render_triple

logger = logging.getLogger(__name__)

PACKAGED_TEMPLATE_DIR = Path(__file__).parent / "templates"

TEMPLATE_KINDS = ("generation", "ift_triples", "ift_concepts",
                  "kg_from_concepts")

ALLOWED_PLACEHOLDERS = {
    "generation": {"example", "descriptions", "term", "mode",
                   "target_triple_count"},
    "ift_triples": {"triples", "number_of_concepts", "mode"},
    "ift_concepts": {"triples", "number_of_concepts", "mode"},
    "kg_from_concepts": {"example", "descriptions", "triples",
                         "number_of_concepts", "mode", "target_triple_count"},
}

TRIPLE_FORMAT_ANCHOR = "[ENTITY 1, RELATIONSHIP, ENTITY 2]"


class PromptError(ValueError):
    """Base class for template and planning failures."""


class TemplateError(PromptError):
    """Template text violates the placeholder contract."""


class RenderError(PromptError):
    """A placeholder had no binding at render time."""


class CapabilityError(PromptError):
    """The dataset context cannot support the requested granularity."""


class GranularityLevel(enum.IntEnum):
    """Prompting sparsity: dataset-level < type-level < node-level."""

    S0 = 0
    S1 = 1
    S2 = 2

    @classmethod
    def parse_one(cls, token: str) -> "GranularityLevel":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise PromptError(f"unknown granularity level {token!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


def parse_granularity(spec: str) -> tuple[GranularityLevel, ...]:
    """Parse "s0", "s1", or combined forms like "s0+s1" (sorted, unique)."""
    levels = {GranularityLevel.parse_one(tok) for tok in spec.split("+") if tok.strip()}
    if not levels:
        raise PromptError(f"empty granularity spec {spec!r}")
    return tuple(sorted(levels))


class _StrictBindings(dict):
    def __missing__(self, key):
        raise RenderError(f"unbound placeholder: {key}")


@dataclass(frozen=True)
class PromptTemplate:
    """UTF-8 template with {name} placeholders from the kind's allowed set."""

    template_text: str
    kind: str

    def __post_init__(self):
        if self.kind not in ALLOWED_PLACEHOLDERS:
            raise TemplateError(f"unknown template kind {self.kind!r}")
        allowed = ALLOWED_PLACEHOLDERS[self.kind]
        for name in self.placeholders():
            if not name:
                raise TemplateError(
                    "positional {} placeholders are not allowed")
            if name not in allowed:
                raise TemplateError(
                    f"placeholder {{{name}}} not allowed in {self.kind} "
                    f"templates (allowed: {sorted(allowed)})")

    def placeholders(self) -> set[str]:
        names = set()
        for _, fname, _, _ in string.Formatter().parse(self.template_text):
            if fname is not None:
                names.add(fname.split(".")[0].split("[")[0])
        return names

    def render(self, **bindings) -> str:
        return string.Formatter().vformat(
            self.template_text, (), _StrictBindings(bindings))


def load_template(kind: str, template_dir: str | Path | None = None) -> PromptTemplate:
    """Load a template by kind from template_dir, falling back to packaged
    defaults for kinds the directory does not override."""
    if kind not in TEMPLATE_KINDS:
        raise TemplateError(f"unknown template kind {kind!r}")
    candidates = []
    if template_dir is not None:
        candidates.append(Path(template_dir) / f"{kind}.txt")
    candidates.append(PACKAGED_TEMPLATE_DIR / f"{kind}.txt")
    for path in candidates:
        if path.exists():
            return PromptTemplate(path.read_text(encoding="utf-8"), kind)
    raise TemplateError(f"no template file for kind {kind!r}")


@dataclass(frozen=True)
class DatasetContext:
    """Everything the prompts know about the working dataset."""

    dataset_summary: str
    task_description: str = "node classification task"
    class_names: tuple[str, ...] = ()
    node_descriptions: dict[str, str] | None = None
    target_triple_count: int = 100
    example_triple: str = "[Machine Learning, is a subfield of, Artificial Intelligence]"

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if not self.dataset_summary:
            raise PromptError("dataset_summary must be non-empty")
        if self.target_triple_count < 1:
            raise PromptError("target_triple_count must be >= 1")

    def require(self, level: GranularityLevel) -> None:
        if level == GranularityLevel.S1 and not self.class_names:
            raise CapabilityError(
                "type-level (s1) prompting needs class_names")
        if level == GranularityLevel.S2 and not self.node_descriptions:
            raise CapabilityError(
                "node-level (s2) prompting needs node_descriptions")


def _subject_term(ctx: DatasetContext, level: GranularityLevel,
                  subject: str | None) -> str:
    if level == GranularityLevel.S0:
        return "the whole dataset"
    if subject is None:
        raise PromptError(f"granularity {level} needs a subject")
    if level == GranularityLevel.S1:
        return f"a node with {subject} as label"
    return subject


def render_generation_prompt(ctx: DatasetContext, level: GranularityLevel,
                             subject: str | None = None,
                             template: PromptTemplate | None = None) -> str:
    """Render one KG-generation prompt for the given granularity."""
    if subject is None:
        # An explicit subject already carries the class/node context.
        ctx.require(level)
    if template is None:
        template = load_template("generation")
    return template.render(
        term=_subject_term(ctx, level, subject),
        mode=ctx.task_description,
        descriptions=ctx.dataset_summary,
        example=ctx.example_triple,
        target_triple_count=ctx.target_triple_count,
    )


def _render_candidates(candidates) -> str:
    lines = []
    for item in candidates:
        if isinstance(item, Triple):
            lines.append(render_triple(item, display=True))
        else:
            lines.append(str(item))
    return "\n".join(lines)


def render_ift_prompt(triples_or_concepts, number_of_concepts: int,
                      kind: str = "ift_triples",
                      task_description: str = "node classification task",
                      template: PromptTemplate | None = None) -> str:
    """Render an instruction-fine-tuning pruning prompt.

    Candidates may be Triples (kind="ift_triples") or plain concept strings
    (kind="ift_concepts"). A keep-count above the candidate count is allowed
    since the model may add items from background knowledge.
    """
    candidates = list(triples_or_concepts)
    if not candidates:
        raise PromptError("candidate list for IFT pruning is empty")
    if number_of_concepts < 1:
        raise PromptError("number_of_concepts must be >= 1")
    if number_of_concepts > len(candidates):
        logger.debug("keep-count %d exceeds candidate count %d",
                     number_of_concepts, len(candidates))
    if kind not in ("ift_triples", "ift_concepts"):
        raise PromptError(f"not an IFT template kind: {kind!r}")
    if template is None:
        template = load_template(kind)
    return template.render(
        triples=_render_candidates(candidates),
        number_of_concepts=number_of_concepts,
        mode=task_description,
    )


def render_kg_from_concepts_prompt(ctx: DatasetContext, concepts,
                                   template: PromptTemplate | None = None) -> str:
    """Render the triple-construction prompt over a pruned concept list."""
    concepts = list(concepts)
    if not concepts:
        raise PromptError("concept list is empty")
    if template is None:
        template = load_template("kg_from_concepts")
    return template.render(
        triples=_render_candidates(concepts),
        number_of_concepts=len(concepts),
        mode=ctx.task_description,
        descriptions=ctx.dataset_summary,
        example=ctx.example_triple,
        target_triple_count=ctx.target_triple_count,
    )


def plan_prompts(ctx: DatasetContext, levels,
                 template: PromptTemplate | None = None) -> list[tuple[str, str]]:
    """Plan the prompt batch for one level or a multi-granularity combo.

    Returns (subject, prompt) pairs: s0 yields a single dataset-level
    prompt, s1 one per class name, s2 one per described node. A combined
    request concatenates the per-level plans in increasing sparsity order.
    """
    if isinstance(levels, GranularityLevel):
        levels = (levels,)
    levels = tuple(sorted(set(levels)))
    if not levels:
        raise PromptError("no granularity levels requested")
    plan: list[tuple[str, str]] = []
    for level in levels:
        ctx.require(level)
        if level == GranularityLevel.S0:
            plan.append(
                ("dataset",
                 render_generation_prompt(ctx, level, template=template)))
        elif level == GranularityLevel.S1:
            for cls in ctx.class_names:
                plan.append(
                    (cls, render_generation_prompt(ctx, level, cls,
                                                   template=template)))
        else:
            for key in sorted(ctx.node_descriptions):
                plan.append(
                    (key, render_generation_prompt(
                        ctx, level, ctx.node_descriptions[key],
                        template=template)))
    return plan
