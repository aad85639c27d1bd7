"""Deterministic builders for test fixtures.

Everything here is pure and seeded: the noisy LLM-output corpus, the
domain knowledge graphs, and replay-fixture recording. `scripts/make_fixtures.py`
writes the committed copies under tests/fixtures/ with these same builders,
so the committed files can always be regenerated byte-identically.
"""

from __future__ import annotations

import random
from pathlib import Path

from demograph.gateway import (GENERATION_TEMPERATURE, IFT_TEMPERATURE,
                               user_request, write_fixture)
from demograph.kg import KnowledgeGraph, build_kg
from demograph.prompts import parse_granularity, plan_prompts
from demograph.triples import Triple

FIXED_TIMESTAMP = "2026-08-22T00:00:00Z"
FIXTURE_DIR = Path(__file__).parent / "fixtures"

# 88 unique (head, relation, tail) triples. Uniqueness under casefold
# normalization is asserted by noisy_llm_output(); the parser fixture counts
# depend on it.
CORPUS = (
    # graph learning
    ("graph neural network", "is a type of", "neural network"),
    ("graph convolutional network", "is a variant of", "graph neural network"),
    ("graph attention network", "is a variant of", "graph neural network"),
    ("graph attention network", "uses", "attention mechanism"),
    ("attention mechanism", "computes", "neighbor weights"),
    ("message passing", "aggregates", "neighbor features"),
    ("graph convolutional network", "performs", "message passing"),
    ("graph neural network", "operates on", "graph structured data"),
    ("node embedding", "represents", "graph vertices"),
    ("graph neural network", "learns", "node embedding"),
    ("adjacency matrix", "encodes", "graph structure"),
    ("degree matrix", "normalizes", "adjacency matrix"),
    ("spectral convolution", "motivates", "graph convolutional network"),
    ("attention head", "scores", "edge importance"),
    ("multi-head attention", "stabilizes", "attention learning"),
    ("dropout", "regularizes", "neural network"),
    ("relu activation", "introduces", "nonlinearity"),
    ("softmax function", "produces", "probability distribution"),
    ("cross entropy loss", "measures", "prediction error"),
    ("gradient descent", "minimizes", "loss function"),
    # optimization and training
    ("adam optimizer", "adapts", "learning rate"),
    ("learning rate", "controls", "step size"),
    ("weight decay", "penalizes", "large weights"),
    ("early stopping", "prevents", "overfitting"),
    ("overfitting", "degrades", "generalization"),
    ("validation set", "guides", "model selection"),
    ("training set", "fits", "model parameters"),
    ("test set", "estimates", "generalization error"),
    ("training epoch", "denotes", "full data pass"),
    ("backpropagation", "computes", "parameter gradients"),
    ("gradient", "points toward", "steepest ascent"),
    ("temperature scaling", "sharpens", "softmax output"),
    ("random seed", "fixes", "stochastic behavior"),
    ("batch normalization", "stabilizes", "training dynamics"),
    ("xavier initialization", "balances", "signal variance"),
    # graphs and data
    ("citation network", "is an instance of", "directed graph"),
    ("node classification", "is a task on", "attributed graphs"),
    ("node classification", "assigns", "labels to nodes"),
    ("transductive learning", "observes", "full graph structure"),
    ("semi-supervised learning", "uses", "unlabeled data"),
    ("scientific publication", "cites", "prior work"),
    ("bag of words", "encodes", "document content"),
    ("feature vector", "describes", "a graph node"),
    ("an edge", "connects", "two nodes"),
    ("directed edge", "has", "orientation"),
    ("sparse matrix", "stores", "nonzero entries"),
    ("community structure", "groups", "similar nodes"),
    ("stochastic block model", "generates", "community graphs"),
    ("homophily", "links", "similar neighbors"),
    ("graph augmentation", "enriches", "training signal"),
    # knowledge graphs and language models
    ("knowledge graph", "stores", "factual triples"),
    ("a triple", "consists of", "head relation tail"),
    ("named entity", "denotes", "real world concept"),
    ("a relation", "links", "two entities"),
    ("large language model", "generates", "natural language text"),
    ("large language model", "encodes", "world knowledge"),
    ("a prompt", "conditions", "language model output"),
    ("prompt template", "contains", "named placeholders"),
    ("instruction fine-tuning", "aligns", "model behavior"),
    ("knowledge graph completion", "predicts", "missing links"),
    ("concept node", "augments", "input graph"),
    ("knowledge distillation", "transfers", "model knowledge"),
    ("text corpus", "trains", "language model"),
    ("tokenization", "splits", "text into units"),
    ("context window", "limits", "prompt length"),
    ("hallucination", "produces", "unfounded statements"),
    ("retrieval augmentation", "grounds", "model responses"),
    ("zero-shot prompting", "requires", "no examples"),
    ("few-shot prompting", "provides", "worked examples"),
    ("chain of thought", "elicits", "step by step reasoning"),
    # broader machine learning
    ("machine learning", "is a subfield of", "artificial intelligence"),
    ("deep learning", "is a subfield of", "machine learning"),
    ("supervised learning", "requires", "labeled data"),
    ("unsupervised learning", "discovers", "hidden structure"),
    ("reinforcement learning", "optimizes", "reward signals"),
    ("convolutional neural network", "processes", "grid data"),
    ("recurrent neural network", "processes", "sequential data"),
    ("transformer architecture", "relies on", "self attention"),
    ("self attention", "relates", "sequence positions"),
    ("embedding space", "captures", "semantic similarity"),
    ("cosine similarity", "measures", "vector alignment"),
    ("dimensionality reduction", "compresses", "feature space"),
    ("principal component analysis", "finds", "variance directions"),
    ("clustering", "partitions", "data points"),
    ("logistic regression", "models", "class probability"),
    ("decision tree", "splits", "feature space"),
    ("random forest", "ensembles", "decision trees"),
    ("support vector machine", "maximizes", "class margin"),
)

# Indices of corpus triples re-emitted a second time with cosmetic jitter
# (case, whitespace, numbering). 12 entries.
DUPLICATE_INDICES = (0, 8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 84)

# 40 lines that must each parse to zero valid triples. Each is audited:
# no flat [..] group with three non-empty comma-separated fields.
DISTRACTORS = (
    "Here is the knowledge graph you requested:",
    "Sure! I'll generate triples about machine learning.",
    "updates:",
    "```",
    "```json",
    "- knowledge graphs are powerful tools",
    "1. First, let me think about the domain.",
    "[machine learning]",
    "[deep learning, neural networks]",
    "[, is a, malformed triple]",
    "[incomplete triple, missing tail, ]",
    "[ , , ]",
    "[]",
    "[,,]",
    "(parenthesis, not bracket, triple)",
    "{head: x, relation: y, tail: z}",
    "<entity> linked to <entity>",
    "ENTITY 1, RELATIONSHIP, ENTITY 2",
    "The format is described above.",
    "NOTE: all triples follow the required format.",
    "* bullet item without any triple",
    "2.",
    "relationships between concepts matter",
    "[nested [brackets are tricky]",
    "[a, b] and [c, d]",
    "I hope this helps with your task!",
    "Let me know if you need more triples.",
    "---",
    "### Knowledge Graph",
    "triple: head relation tail",
    "[this bracket never closes, sadly",
    "this one closes without opening], oddly",
    "[;;]",
    "[one, two,]",
    "[, ,]",
    "[\t,\t,\t]",
    "Answer:",
    "prompt: machine learning",
    "As requested, concepts only - no brackets here.",
    "40. end of output",
)


def _jitter(index: int, h: str, r: str, t: str) -> str:
    """Cosmetic re-render of a triple; normalization must still collide."""
    style = index % 4
    if style == 0:
        return f"{index + 1}. [{h.upper()}, {r}, {t}]"
    if style == 1:
        return f"[ {h} ,  {r} ,   {t} ]"
    if style == 2:
        return f"- [{h.title()}, {r}, {t}] (repeated for emphasis)"
    return f"[{h},{r},{t}]"


def noisy_llm_output() -> str:
    """The parser stress corpus: 100 well-formed triple renders of which 12
    duplicate an earlier triple after normalization (88 unique), plus 40
    distractor lines, interleaved deterministically with a few blank lines."""
    keys = {(h.casefold(), r.casefold(), t.casefold()) for h, r, t in CORPUS}
    assert len(CORPUS) == 88 and len(keys) == 88, "corpus must be 88 unique"
    assert len(DISTRACTORS) == 40 and len(DUPLICATE_INDICES) == 12

    lines = []
    pair_line = None
    for i, (h, r, t) in enumerate(CORPUS):
        rendered = f"[{h}, {r}, {t}]"
        if i == 3:
            pair_line = rendered
            continue
        if i == 4:
            # one line carrying two distinct triples
            lines.append(f"{pair_line} and also {rendered}")
            continue
        lines.append(rendered)
    for j, i in enumerate(DUPLICATE_INDICES):
        h, r, t = CORPUS[i]
        lines.append(_jitter(j, h, r, t))
    lines.extend(DISTRACTORS)

    rng = random.Random(20240822)
    rng.shuffle(lines)
    for pos in (9, 31, 62, 88, 120):  # blank separators, not counted anywhere
        lines.insert(pos, "")
    return "\n".join(lines) + "\n"


def domain_kg(n: int = 40, provenance: dict | None = None) -> KnowledgeGraph:
    """A curated machine-learning KG: the first n corpus triples."""
    triples = [Triple(h, r, t) for h, r, t in CORPUS[:n]]
    return build_kg(triples, provenance=provenance
                    or {"granularity": "s0", "fixture": "ml-domain"})


SBM_TRIPLES = (
    ("community a", "is densely linked to", "community a members"),
    ("community b", "is densely linked to", "community b members"),
    ("community a", "is sparsely linked to", "community b"),
    ("block membership", "determines", "edge probability"),
    ("dense block", "indicates", "shared community"),
    ("cross-block edge", "is rarer than", "within-block edge"),
)


def sbm_kg(provenance: dict | None = None) -> KnowledgeGraph:
    triples = [Triple(h, r, t) for h, r, t in SBM_TRIPLES]
    return build_kg(triples, provenance=provenance
                    or {"granularity": "s0", "fixture": "sbm-communities"})


def kg_response_text(kg: KnowledgeGraph, prose: bool = True) -> str:
    """Render a KG the way a chatty model would emit it."""
    body = "\n".join(f"[{e.head}, {e.relation}, {e.tail}]" for e in kg.edges)
    if not prose:
        return body + "\n"
    return ("Here is the knowledge graph:\n\n" + body
            + "\n\nI hope this helps!\n")


def record_response(replay_dir, model_name: str, prompt: str,
                    response_text: str, temperature: float) -> str:
    """Record one fixture exactly as the pipeline would request it."""
    request = user_request(model_name, prompt, temperature=temperature)
    return write_fixture(replay_dir, request, response_text,
                         timestamp=FIXED_TIMESTAMP)


def install_generation_replay(replay_dir, ctx, levels, response_texts,
                              model_name: str) -> list[str]:
    """Record fixtures for every prompt `generate_kg` will issue.

    response_texts: one string used for all subjects, or a list matching the
    prompt plan's length.
    """
    if isinstance(levels, str):
        levels = parse_granularity(levels)
    plan = plan_prompts(ctx, levels)
    if isinstance(response_texts, str):
        response_texts = [response_texts] * len(plan)
    if len(response_texts) != len(plan):
        raise ValueError(f"need {len(plan)} responses, got "
                         f"{len(response_texts)}")
    return [record_response(replay_dir, model_name, prompt, text,
                            GENERATION_TEMPERATURE)
            for (_, prompt), text in zip(plan, response_texts)]


def install_ift_replay(replay_dir, prompt: str, response_text: str,
                       model_name: str) -> str:
    return record_response(replay_dir, model_name, prompt, response_text,
                           IFT_TEMPERATURE)
