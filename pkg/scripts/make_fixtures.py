#!/usr/bin/env python3
"""Regenerate the committed test fixtures under tests/fixtures/.

Everything is deterministic; rerun after changing prompt templates so the
replay fixtures' request digests match what the pipeline issues.
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

import fixture_lib as fl  # noqa: E402
from demograph.datasets import dataset_context  # noqa: E402
from demograph.gateway import IFT_TEMPERATURE  # noqa: E402
from demograph.kg import filter_kg, save_kg  # noqa: E402
from demograph.prompts import render_ift_prompt  # noqa: E402

MODEL = "gpt-4-0125-preview"


def main() -> None:
    out = fl.FIXTURE_DIR
    out.mkdir(parents=True, exist_ok=True)

    (out / "noisy_llm_output.txt").write_text(fl.noisy_llm_output(),
                                              encoding="utf-8")

    ml = fl.domain_kg(40, provenance={
        "granularity": "s0", "fixture": "ml-domain",
        "ift": {"rounds_done": 1, "number_to_keep": 40}})
    save_kg(ml, out / "ml_kg.jsonl")

    sbm = fl.sbm_kg()
    save_kg(sbm, out / "sbm_kg.jsonl")

    replay = out / "replay"
    if replay.exists():
        shutil.rmtree(replay)
    replay.mkdir(parents=True)

    # Generation + pruning responses for the synthetic dataset: lets
    # `demograph generate --dataset sbm-synthetic --replay-dir ...` run
    # offline, with or without --ift-keep 4.
    sbm_ctx = dataset_context("sbm-synthetic")
    fl.install_generation_replay(replay, sbm_ctx, "s0",
                                 fl.kg_response_text(sbm), MODEL)
    pruned_edges = filter_kg(sbm).edges
    prune_prompt = render_ift_prompt(pruned_edges, 4, kind="ift_triples",
                                     task_description=sbm_ctx.task_description)
    kept = fl.build_kg(list(sbm.edges)[:4])
    fl.record_response(replay, MODEL, prune_prompt,
                       fl.kg_response_text(kept, prose=False),
                       IFT_TEMPERATURE)

    # Same pair for the citation benchmark (KG generation needs no raw
    # dataset files, only the dataset summary).
    cora_ctx = dataset_context("cora")
    ml_full = fl.domain_kg(40)
    fl.install_generation_replay(replay, cora_ctx, "s0",
                                 fl.kg_response_text(ml_full), MODEL)
    cora_prompt = render_ift_prompt(filter_kg(ml_full).edges, 30,
                                    kind="ift_triples",
                                    task_description=cora_ctx.task_description)
    kept30 = fl.build_kg(list(ml_full.edges)[:30])
    fl.record_response(replay, MODEL, cora_prompt,
                       fl.kg_response_text(kept30, prose=False),
                       IFT_TEMPERATURE)

    n_replay = len(list(replay.glob("*.json")))
    print(f"fixtures written under {out} ({n_replay} replay entries)")


if __name__ == "__main__":
    main()
