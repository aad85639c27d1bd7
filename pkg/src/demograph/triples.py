"""Extract bracketed [head, relation, tail] triples from free-form LLM text."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

# Maximal flat bracket groups; nested brackets never match as a whole group.
_BRACKET_GROUP = re.compile(r"\[([^\[\]]*)\]")


def normalize_entity(raw: str) -> str:
    """Trim, collapse internal whitespace, case-fold. Idempotent."""
    return " ".join(raw.split()).casefold()


@dataclass(frozen=True)
class Triple:
    """A directed (head, relation, tail) assertion.

    Stored components are normalized (see :func:`normalize_entity`); equality
    and hashing use them. Original-cased display forms ride along for
    human-readable dumps and do not take part in comparison.
    """

    head: str
    relation: str
    tail: str
    head_display: str = field(default="", compare=False, repr=False)
    relation_display: str = field(default="", compare=False, repr=False)
    tail_display: str = field(default="", compare=False, repr=False)
    source_line: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        for name in ("head", "relation", "tail"):
            raw = getattr(self, name)
            norm = normalize_entity(raw)
            if not norm:
                raise ValueError(f"triple {name} is empty after normalization")
            display = getattr(self, f"{name}_display") or " ".join(raw.split())
            object.__setattr__(self, name, norm)
            object.__setattr__(self, f"{name}_display", display)

    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


def render_triple(triple: Triple, display: bool = False) -> str:
    """Render back to the bracketed prompt format."""
    if display:
        parts = (triple.head_display, triple.relation_display,
                 triple.tail_display)
    else:
        parts = (triple.head, triple.relation, triple.tail)
    return "[{}, {}, {}]".format(*parts)


@dataclass
class ParseResult:
    """Unique triples in first-occurrence order plus a skipped-line tally."""

    triples: tuple[Triple, ...]
    skipped: int

    def __iter__(self):
        return iter(self.triples)

    def __len__(self) -> int:
        return len(self.triples)


def _triple_from_group(content: str, lineno: int) -> Triple | None:
    # First and last commas delimit head and tail; interior commas (if any)
    # stay inside the relation ("is used for, e.g.").
    first = content.find(",")
    last = content.rfind(",")
    if first == -1 or first == last:
        return None
    head = content[:first]
    relation = content[first + 1:last]
    tail = content[last + 1:]
    if not all(normalize_entity(x) for x in (head, relation, tail)):
        return None
    return Triple(head, relation, tail, source_line=lineno)


def parse_triples(text: str) -> ParseResult:
    """Pull every well-formed triple out of arbitrary text.

    Scans line by line for flat bracket groups with at least two commas.
    Exact duplicates (after normalization) are dropped, keeping the first
    occurrence. A non-blank line that yields no valid triple is counted in
    the skip tally. Never raises, whatever the input.
    """
    triples: list[Triple] = []
    seen: set[tuple[str, str, str]] = set()
    skipped = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        line_valid = False
        for match in _BRACKET_GROUP.finditer(line):
            triple = _triple_from_group(match.group(1), lineno)
            if triple is None:
                continue
            line_valid = True
            if triple.key() in seen:
                continue
            seen.add(triple.key())
            triples.append(triple)
        if not line_valid:
            skipped += 1
            logger.debug("no triple on line %d: %.80r", lineno, line)
    return ParseResult(triples=tuple(triples), skipped=skipped)
