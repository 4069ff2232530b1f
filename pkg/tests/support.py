"""Helpers that build on-disk inputs for CLI-level tests."""

from __future__ import annotations

import json
from pathlib import Path

from toolcheck.callparse import render_calls
from toolcheck.checker import ErrorCode
from toolcheck.ingest import write_cases
from toolcheck.negsample import perturb
from toolcheck.synthetic import synth_cases


def write_corpus(tmp: Path, n: int, seed: int = 0) -> tuple[Path, list]:
    cases = synth_cases(n, seed=seed)
    path = tmp / "cases.jsonl"
    write_cases(cases, path)
    return path, cases


def write_icl_script(tmp: Path, cases) -> tuple[Path, tuple[int, int]]:
    """Round 1 answers carry an injected error, round 2 answers are gold.

    Returns the script path and the (prompt, generated) token totals it bills.
    """
    lines, tot_in, tot_out = [], 0, 0
    for k, case in enumerate(cases):
        code = list(ErrorCode)[k % len(ErrorCode)]
        first = perturb(case.gold, case.tools, code, k)
        for rnd, text in ((1, first), (2, render_calls(case.gold))):
            usage = {"prompt_tokens": 100 + 10 * k + rnd, "generated_tokens": 5 + k}
            tot_in += usage["prompt_tokens"]
            tot_out += usage["generated_tokens"]
            lines.append(json.dumps({"id": case.id, "round": rnd, "text": text, "usage": usage}))
    path = tmp / "script.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path, (tot_in, tot_out)


# criterion number -> (title, verdict, detail); printed by conftest at session end
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}
