"""Acceptance criteria 1-8, plus an optional live comparison (9).

Each test records a PASS/FAIL line that is printed at the end of the run
and echoed to stdout as it finishes (visible with ``-s``).
"""

from __future__ import annotations

import json
import math
import os
import time
from collections import Counter
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force, fd_gradient, max_rel_error, random_calls, random_instance
from support import ACCEPTANCE
from toolcheck.callparse import parse_lenient
from toolcheck.checker import CheckMode, ErrorCode, check
from toolcheck.cli import OK, main
from toolcheck.ingest import load_cases, read_ptc
from toolcheck.metrics import aggregate, match_calls, score_case
from toolcheck.negsample import PerturbPolicy, build_ptc
from toolcheck.prefopt import KtoConfig, dpo_gradient, dpo_loss, failure_mode_demo, kto_loss, kto_token_gradient
from toolcheck.synthetic import synth_cases

pytestmark = pytest.mark.acceptance
DATA = Path(__file__).parent / "data"


@contextmanager
def criterion(n: int, title: str, budget: float | None = None):
    """Time the body, record the verdict, and fail on an exceeded time budget."""
    start = time.perf_counter()
    detail = ""
    try:
        yield
        elapsed = time.perf_counter() - start
        detail = f"{elapsed:.2f}s" + (f" of {budget:.0f}s" if budget else "")
        if budget is not None and elapsed >= budget:
            raise AssertionError(f"took {elapsed:.2f}s, budget {budget}s")
        verdict = "PASS"
    except pytest.skip.Exception as exc:
        verdict, detail = "SKIP", str(exc)
        raise
    except BaseException as exc:
        msg = str(exc).splitlines()[0][:120] if str(exc) else type(exc).__name__
        verdict, detail = "FAIL", " ".join(filter(None, (detail, msg)))
        raise
    finally:
        ACCEPTANCE[n] = (title, verdict, detail)
        print(f"criterion {n}: {verdict} {title} {detail}")


def test_1_checker_injector_round_trip():
    with criterion(1, "checker finds every injected error, chosen answers are clean", budget=10.0):
        cases = synth_cases(1000, seed=1)
        built = build_ptc(cases, PerturbPolicy(seed=1))
        assert len(built.pairs) == 1000 and not built.skipped
        by_id = {c.id: c for c in cases}
        missed, dirty = [], []
        for pair in built.pairs:
            case = by_id[pair.id]
            rej = check(parse_lenient(pair.rejected), case.registry, case.gold, CheckMode.REFERENCED)
            if pair.injected_error not in {f.code for f in rej}:
                missed.append(pair.id)
            if check(parse_lenient(pair.chosen), case.registry, case.gold, CheckMode.REFERENCED):
                dirty.append(pair.id)
        assert not missed, f"{len(missed)} injected errors missed"
        assert not dirty, f"{len(dirty)} chosen answers have findings"
        counts = built.plan_counts()
        assert set(counts) == set(ErrorCode) and min(counts.values()) > 0


def test_2_hexagon_fixture():
    with criterion(2, "hexagon pair: one E4 on call 0 param n; tp_name=2, tp_full=1"):
        case = load_cases(DATA / "hexagon_case.json").cases[0]
        chosen = parse_lenient((DATA / "hexagon_chosen.txt").read_text(encoding="utf-8"))
        rejected = parse_lenient((DATA / "hexagon_rejected.txt").read_text(encoding="utf-8"))
        assert len(chosen.calls) == 2
        for mode in CheckMode:
            gold = chosen.calls if mode is CheckMode.REFERENCED else None
            findings = check(rejected, case.registry, gold, mode)
            assert [(f.code, f.call_index, f.param) for f in findings] == [(ErrorCode.E4, 0, "n")]
        s = score_case(rejected.calls, chosen.calls)
        assert (s.tp_name, s.tp_full) == (2, 1)


def test_3_f1_oracle_equivalence():
    import random

    with criterion(3, "matching equals brute force, micro F1 within 1e-12", budget=5.0):
        rng = random.Random(3)
        scores, tp, fp, fn, tpf, fpf, fnf = [], 0, 0, 0, 0, 0, 0
        for _ in range(500):
            pred, gold = random_calls(rng, rng.randint(0, 4)), random_calls(rng, rng.randint(0, 4))
            k, exact = brute_force(pred, gold)
            matching = match_calls(pred, gold)
            assert len(matching) == k
            s = score_case(pred, gold)
            assert (s.tp_name, s.tp_full) == (k, exact)
            scores.append(s)
            tp, fp, fn = tp + k, fp + len(pred) - k, fn + len(gold) - k
            tpf, fpf, fnf = tpf + exact, fpf + len(pred) - exact, fnf + len(gold) - exact
        agg = aggregate(scores)
        assert abs(agg.f1_name - 2 * tp / (2 * tp + fp + fn)) <= 1e-12
        assert abs(agg.f1_full - 2 * tpf / (2 * tpf + fpf + fnf)) <= 1e-12


def test_4_loss_sanity():
    with criterion(4, "at model == ref: DPO = ln 2, KTO = (lw + ll)/2"):
        rng = np.random.default_rng(4)
        for _ in range(20):
            model, _, pair = random_instance(rng)
            assert abs(dpo_loss(model, model, pair, beta=float(rng.uniform(0.01, 5))) - math.log(2)) <= 1e-12
            lw, ll = rng.uniform(0, 3, 2)
            cfg = KtoConfig(beta=float(rng.uniform(0.01, 5)), lambda_w=float(lw), lambda_l=float(ll), z0=0.0)
            assert abs(kto_loss(model, model, pair, cfg)[0] - 0.5 * (lw + ll)) <= 1e-12


def test_5_gradient_correctness():
    with criterion(5, "DPO/KTO gradients match finite differences; closed form within 1e-8", budget=30.0):
        rng = np.random.default_rng(5)
        worst_fd, worst_closed, n_closed = 0.0, 0.0, 0
        for k in range(120):
            model, ref, pair = random_instance(rng, minimal=k % 2 == 0)
            beta = float(rng.uniform(0.05, 2.0))
            cfg = KtoConfig(beta, float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2)), float(rng.normal()))
            _, g_dpo = dpo_gradient(model, ref, pair, beta)
            worst_fd = max(worst_fd, max_rel_error(g_dpo, fd_gradient(lambda m: dpo_loss(m, ref, pair, beta), model)))
            _, rep = kto_loss(model, ref, pair, cfg)
            worst_fd = max(worst_fd, max_rel_error(rep.grad, fd_gradient(lambda m: kto_loss(m, ref, pair, cfg)[0], model)))
            if pair.differing_index is not None:
                n_closed += 1
                closed = kto_token_gradient(model, ref, pair, cfg)
                assert set(closed) == set(rep.grad)
                worst_closed = max(worst_closed, max(float(np.max(np.abs(closed[key] - rep.grad[key]))) for key in closed))
        assert worst_fd <= 1e-4, f"finite-difference relative error {worst_fd:.2e}"
        assert worst_closed <= 1e-8, f"closed-form deviation {worst_closed:.2e}"
        assert n_closed >= 60


def test_6_failure_mode_demo():
    with criterion(6, "DPO chosen log-prob falls, KTO correct logit rises, minimal-pair gradient smaller", budget=60.0):
        res = failure_mode_demo(n_pairs=200, seed=0)
        print(json.dumps(res.verdicts))
        failed = [k for k, v in res.verdicts.items() if not v]
        assert not failed, f"failed verdicts: {failed}"


def _script_totals(path: Path) -> tuple[int, int]:
    tin = tout = 0
    for line in path.read_text(encoding="utf-8").splitlines():
        u = json.loads(line).get("usage", {})
        tin += u.get("prompt_tokens", 0)
        tout += u.get("generated_tokens", 0)
    return tin, tout


def test_7_hermetic_icl(tmp_path):
    with criterion(7, "scripted ICL runs are byte-identical and bill the scripted usage"):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            args = ["icl", str(DATA / "icl_cases.jsonl"), "--out-dir", str(out), "--script", str(DATA / "icl_script.jsonl")]
            assert main(args + ["--concurrency", "4"]) == OK
            outs.append(out)
        for name in ("records.jsonl", "report.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
        records = [json.loads(x) for x in (outs[0] / "records.jsonl").read_text().splitlines()]
        assert len(records) == 10
        tin = sum(r["usage"]["prompt_tokens"] for r in records)
        tout = sum(r["usage"]["generated_tokens"] for r in records)
        assert (tin, tout) == _script_totals(DATA / "icl_script.jsonl")
        cost = json.loads((outs[0] / "report.json").read_text())["cost"]
        assert (cost["prompt_tokens"], cost["generated_tokens"]) == (tin, tout)


def test_8_ptc_determinism(tmp_path):
    from toolcheck.ingest import write_cases

    with criterion(8, "gen-neg output is byte-identical and matches its plan"):
        cases = tmp_path / "cases.jsonl"
        write_cases(synth_cases(200, seed=8), cases)
        for run in ("a", "b"):
            assert main(["gen-neg", str(cases), "--out", str(tmp_path / f"{run}.jsonl"), "--seed", "8", "--weights", "E4=2,E7=0.5"]) == OK
        for suffix in (".jsonl", ".jsonl.plan.json"):
            assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()
        plan = json.loads((tmp_path / "a.jsonl.plan.json").read_text())
        from_plan = Counter(code for _, code in plan["plan"])
        from_file = Counter(p.injected_error.name for p in read_ptc(tmp_path / "a.jsonl"))
        assert from_plan == from_file
        assert {k: v for k, v in plan["counts"].items() if v} == dict(from_plan)
        assert [p.id for p in read_ptc(tmp_path / "a.jsonl")] == [cid for cid, _ in plan["plan"]]


LIVE = {k: os.environ.get(f"TOOLCHECK_LIVE_{k}") for k in ("ENDPOINT", "MODEL", "CASES")}


def _multi_call_f1(out: Path, cases) -> float | None:
    from toolcheck.icl import IclRunRecord

    multi = {c.id: c for c in cases if len(c.gold) > 1}
    recs = [IclRunRecord.from_dict(json.loads(x)) for x in (out / "records.jsonl").read_text().splitlines()]
    return aggregate(score_case(r.final_calls, multi[r.case_id].gold) for r in recs if r.case_id in multi).f1_full


def test_9_live_two_round_not_worse(tmp_path):
    """Non-gating: needs TOOLCHECK_LIVE_ENDPOINT/_MODEL/_CASES and an API key in OPENAI_API_KEY."""
    with criterion(9, "live: two-round F1 Name+Parameter >= vanilla on multi-call cases (optional)"):
        if not all(LIVE.values()) or not os.environ.get("OPENAI_API_KEY"):
            pytest.skip("no live credentials")
        cases = load_cases(LIVE["CASES"]).cases
        if len(cases) < 50:
            pytest.skip("live check needs at least 50 cases")
        f1 = {}
        for variant in ("two-round", "vanilla"):
            out = tmp_path / variant
            args = ["icl", LIVE["CASES"], "--out-dir", str(out), f"--{variant}", "--endpoint", LIVE["ENDPOINT"], "--model", LIVE["MODEL"]]
            assert main(args) == OK
            f1[variant] = _multi_call_f1(out, cases)
        print(json.dumps(f1))
        if f1["two-round"] is None or f1["two-round"] < f1["vanilla"]:
            pytest.xfail(f"two-round below vanilla on this run: {f1}")
