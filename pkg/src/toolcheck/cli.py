"""``toolcheck`` command line.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 client error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Sequence

from .callparse import ToolCall, parse_lenient
from .chat import ClientError, OpenAICompatibleClient, ScriptedClient
from .checker import CheckMode, ErrorCode, check, error_histogram
from .ingest import (
    EmptyDataset,
    EvalCase,
    InvariantViolation,
    UnreadableFile,
    load_cases,
    read_ptc,
    write_ptc,
)
from .icl import Budget, BudgetExceeded, IclOptions, report, run_many
from .localgen import NoEntriesParsed, generate_checklist, load_checklist, save_checklist, synth_checklist_offline
from .metrics import aggregate, score_case
from .toolspec import MalformedSpec, load_registry

log = logging.getLogger("toolcheck")

OK, INVALID, IO_ERROR, CLIENT_ERROR = 0, 1, 2, 3


class ValidationFailure(Exception):
    pass


def _read_jsonl(path: str) -> list[dict[str, Any]]:
    try:
        with open(path, encoding="utf-8") as fh:
            rows = []
            for n, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        rows.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raise ValidationFailure(f"{path}:{n}: {exc.msg}") from None
            return rows
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc


def _cases(path: str, fmt: str = "unified") -> list[EvalCase]:
    """Cases from ``path``; a file with no lines at all is an empty corpus."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        return []
    result = load_cases(path, fmt)
    for s in result.skipped:
        log.warning("%s:%d skipped: %s", path, s.line, s.reason)
    return list(result.cases)


def _write_json(path: str | None, obj: Any) -> None:
    if not path:
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, ensure_ascii=False, indent=2, sort_keys=False)
            fh.write("\n")
    except OSError as exc:
        raise UnreadableFile(f"cannot write {path}: {exc}") from exc


def _write_jsonl(path: str | Path, rows: Sequence[dict[str, Any]]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise UnreadableFile(f"cannot write {path}: {exc}") from exc


def _table(rows: Sequence[tuple[str, Any]]) -> str:
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def _client(args) -> Any:
    if getattr(args, "script", None):
        return ScriptedClient.from_jsonl(args.script)
    if getattr(args, "endpoint", None):
        if not args.model:
            raise ValidationFailure("--endpoint needs --model")
        return OpenAICompatibleClient(
            args.endpoint, args.model, args.temperature, args.max_tokens, args.api_key_env, retries=args.retries
        )
    return None


def _add_client_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("chat client")
    g.add_argument("--script", help="JSONL of scripted completions (offline, deterministic)")
    g.add_argument("--endpoint", help="chat-completions base URL")
    g.add_argument("--model", help="model id for --endpoint")
    g.add_argument("--api-key-env", default="OPENAI_API_KEY", help="environment variable holding the API key")
    g.add_argument("--temperature", type=float, default=0.2)
    g.add_argument("--max-tokens", type=int, default=256, help="max generated tokens per completion")
    g.add_argument("--retries", type=int, default=2)


# -- check ---------------------------------------------------------------


def _prediction_text(row: dict[str, Any]) -> tuple[str, str]:
    """(case id, raw output) from a predictions line or an ICL run record."""
    if "case_id" in row:
        out = row.get("round2_output")
        return str(row["case_id"]), out if out is not None else row.get("round1_output", "")
    if "output" in row:
        return str(row["id"]), row["output"]
    if "calls" in row:
        return str(row["id"]), json.dumps(row["calls"], ensure_ascii=False)
    raise ValidationFailure("prediction lines need 'output', 'calls', or be ICL run records")


def cmd_check(args) -> int:
    mode = CheckMode(args.mode)
    cases = {c.id: c for c in _cases(args.cases)} if args.cases else {}
    items: list[tuple[str, str]] = []
    if args.ptc:
        for k, pair in enumerate(read_ptc(args.ptc)):
            items.append((pair.id or str(k + 1), pair.rejected))
            if args.include_chosen:
                items.append((pair.id or str(k + 1), pair.chosen))
    if args.predictions:
        items += [_prediction_text(r) for r in _read_jsonl(args.predictions)]

    rows, all_findings = [], []
    for case_id, text in items:
        case = cases.get(case_id)
        if case is None:
            raise ValidationFailure(f"no case with id {case_id!r} in {args.cases}")
        findings = check(parse_lenient(text), case.registry, case.gold if mode is CheckMode.REFERENCED else None, mode)
        all_findings.append(findings)
        rows.append({"id": case_id, "findings": [f.to_dict() for f in findings]})
    if args.out:
        _write_jsonl(args.out, rows)
    hist = {c.name: n for c, n in error_histogram(all_findings).items() if n}
    _write_json(args.histogram, hist)
    print(json.dumps(hist))
    print(_table([("checked", len(items)), ("with findings", sum(1 for f in all_findings if f))]))
    if args.strict and any(all_findings):
        return INVALID
    return OK


# -- gen-local -----------------------------------------------------------


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def cmd_gen_local(args) -> int:
    print(f"seed: {args.seed}")
    registry = load_registry(args.tools)
    for w in registry.warnings:
        log.warning(w)
    tools = list(registry)
    if not tools:
        log.warning("no tools in %s; nothing generated", args.tools)
        return OK
    client = None if args.offline else _client(args)
    if client is None and not args.offline:
        raise ValidationFailure("pass --offline or a client (--script / --endpoint)")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for tool in tools:
        if client is None:
            cl = synth_checklist_offline(tool, args.seed, include_wrong_name=args.include_wrong_name)
        else:
            try:
                cl = generate_checklist(tool, client, case_id=tool.name, round=1)
            except NoEntriesParsed as exc:
                log.warning("%s: %s", tool.name, exc)
                failed += 1
                continue
            for header, reason in cl.dropped:
                log.warning("%s: dropped %s (%s)", tool.name, header, reason)
        save_checklist(cl, out / f"{_safe_name(tool.name)}.json")
        print(f"{tool.name}: {', '.join(sorted(c.name for c in cl.codes))}")
    return INVALID if failed else OK


# -- gen-neg -------------------------------------------------------------


def _parse_codes(text: str | None) -> frozenset[ErrorCode]:
    if not text:
        return frozenset(ErrorCode)
    return frozenset(ErrorCode.parse(t) for t in text.split(",") if t.strip())


def _parse_weights(text: str | None) -> dict[ErrorCode, float]:
    out = {}
    for part in (text or "").split(","):
        if part.strip():
            code, _, w = part.partition("=")
            out[ErrorCode.parse(code)] = float(w)
    return out


def cmd_gen_neg(args) -> int:
    from .negsample import PerturbPolicy, build_ptc

    print(f"seed: {args.seed}")
    cases = _cases(args.cases, args.format)
    if args.limit is not None:
        cases = cases[: args.limit]
    try:
        policy = PerturbPolicy(_parse_codes(args.codes), _parse_weights(args.weights), args.seed)
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    built = build_ptc(cases, policy)
    registries = {c.id: c.registry for c in cases}
    write_ptc(list(built.pairs), args.out, [registries[p.id] for p in built.pairs])
    counts = built.plan_counts()
    plan = {
        "seed": args.seed,
        "plan": [[cid, code.name] for cid, code in built.plan],
        "counts": {c.name: counts[c] for c in ErrorCode},
        "skipped": [list(s) for s in built.skipped],
    }
    _write_json(args.plan or f"{args.out}.plan.json", plan)
    for cid, reason in built.skipped:
        log.warning("case %s skipped: %s", cid, reason)
    print(_table([("cases", len(cases)), ("pairs", len(built.pairs))] + [(c.name, counts[c]) for c in ErrorCode]))
    return OK


# -- eval ----------------------------------------------------------------


def _prediction_calls(row: dict[str, Any]) -> tuple[str, list[ToolCall]]:
    if "final_calls" in row:
        return str(row["case_id"]), [ToolCall.from_dict(c) for c in row["final_calls"]]
    if "calls" in row:
        return str(row["id"]), [ToolCall.from_dict(c) for c in row["calls"]]
    case_id, text = _prediction_text(row)
    return case_id, list(parse_lenient(text).calls)


def cmd_eval(args) -> int:
    cases = _cases(args.cases)
    preds = dict(_prediction_calls(r) for r in _read_jsonl(args.predictions))
    unknown = sorted(set(preds) - {c.id for c in cases})
    if unknown:
        raise ValidationFailure(f"predictions for unknown case ids: {unknown[:5]}")
    missing = [c.id for c in cases if c.id not in preds]
    if missing:
        log.warning("%d case(s) have no prediction; scored as empty", len(missing))
    result = aggregate(score_case(preds.get(c.id, []), c.gold, c.id) for c in cases)
    _write_json(args.out, result.to_dict())
    print(_table([("cases", len(cases)), ("F1 Name", _fmt(result.f1_name)), ("F1 Name + Parameter", _fmt(result.f1_full))]))
    return OK


# -- icl -----------------------------------------------------------------


def cmd_icl(args) -> int:

    print(f"seed: {args.seed}")
    cases = _cases(args.cases, args.format)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    variant = args.variant
    checklists = {}
    if variant == "two_round":
        if args.checklists:
            for p in sorted(Path(args.checklists).glob("*.json")):
                cl = load_checklist(p)
                checklists[cl.tool.name] = cl
        else:
            for case in cases:
                for tool in case.tools:
                    if tool.name not in checklists:
                        checklists[tool.name] = synth_checklist_offline(tool, args.seed)
    records = []
    if cases:
        client = _client(args)
        if client is None:
            raise ValidationFailure("icl needs a client (--script or --endpoint)")
        budget = Budget(args.token_budget) if args.token_budget else None
        options = IclOptions(variant=variant, checklists=checklists, budget=budget)
        records = run_many(cases, client, options, args.concurrency)
    _write_jsonl(out / "records.jsonl", [r.to_dict() for r in records])
    rep = report(records, cases, args.price_in, args.price_out)
    rep["variant"] = variant
    rep["seed"] = args.seed
    _write_json(str(out / "report.json"), rep)
    cost = rep["cost"]
    rows = [
        ("variant", variant),
        ("cases", len(records)),
        ("F1 Name", _fmt(rep["scores"]["f1_name"])),
        ("F1 Name + Parameter", _fmt(rep["scores"]["f1_name_param"])),
        ("prompt tokens", cost["prompt_tokens"]),
        ("generated tokens", cost["generated_tokens"]),
    ]
    if "cost_per_case" in cost:
        rows.append(("cost per case", f"{cost['cost_per_case']:.6f}"))
    print(_table(rows))
    return OK


# -- kto-demo ------------------------------------------------------------


def cmd_kto_demo(args) -> int:
    from .prefopt import KtoConfig, failure_mode_demo

    print(f"seed: {args.seed}")
    cfg = KtoConfig(beta=args.beta, lambda_w=args.lambda_w, lambda_l=args.lambda_l, z0=args.z0)
    res = failure_mode_demo(args.pairs, args.steps, args.seed, cfg, args.lr)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods = ("dpo", "kto") if args.method == "both" else (args.method,)
    for m in methods:
        (out / f"{m}.csv").write_text(getattr(res, m).to_csv(), encoding="utf-8")
    summary = {
        "seed": args.seed,
        "pairs": args.pairs,
        "steps": args.steps,
        "dpo_logp_chosen": [float(res.dpo.logp_chosen[0]), float(res.dpo.logp_chosen[-1])],
        "kto_correct_logit": [float(res.kto.correct_logit[0]), float(res.kto.correct_logit[-1])],
        "dpo_initial_grad_norm_per_pair": {"one_token": res.grad_norm_one, "all_tokens": res.grad_norm_all},
        "dpo_initial_grad_norm_batch": {"one_token": res.batch_grad_norm_one, "all_tokens": res.batch_grad_norm_all},
        "verdicts": res.verdicts,
    }
    _write_json(str(out / "summary.json"), summary)
    print(_table([(k, "PASS" if v else "FAIL") for k, v in res.verdicts.items()]))
    return OK if all(res.verdicts.values()) else INVALID


# -- wiring --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toolcheck", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run the error checklist over answers")
    p.add_argument("--cases", required=True, help="unified cases JSONL (tools and gold)")
    p.add_argument("--ptc", help="PTC file; rejected answers are checked")
    p.add_argument("--predictions", help="JSONL of {id, output} lines or ICL run records")
    p.add_argument("--include-chosen", action="store_true", help="also check PTC chosen answers")
    p.add_argument("--mode", choices=[m.value for m in CheckMode], default="referenced")
    p.add_argument("--out", help="findings JSONL")
    p.add_argument("--histogram", help="write the histogram JSON here")
    p.add_argument("--strict", action="store_true", help="exit 1 when any finding is reported")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen-local", help="build local error checklists for tools")
    p.add_argument("tools", help="tool specs JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--offline", action="store_true", help="deterministic offline synthesis")
    p.add_argument("--include-wrong-name", action="store_true", help="offline: add a wrong-tool-name entry")
    p.add_argument("--seed", type=int, default=0)
    _add_client_flags(p)
    p.set_defaults(func=cmd_gen_local)

    p = sub.add_parser("gen-neg", help="build a PTC preference dataset")
    p.add_argument("cases")
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="injection plan JSON (default: <out>.plan.json)")
    p.add_argument("--codes", help="allowed codes, e.g. E1,E4 (default: all)")
    p.add_argument("--weights", help="per-code weights, e.g. E4=2,E5=0.5 (default: 1)")
    p.add_argument("--limit", type=int)
    p.add_argument("--format", default="unified", help="'unified' or 'adapter:<name>'")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_neg)

    p = sub.add_parser("eval", help="F1 scores of predictions against gold")
    p.add_argument("cases")
    p.add_argument("predictions", help="JSONL of {id, output|calls} or ICL run records")
    p.add_argument("--out", help="report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("icl", help="run checklist prompting over cases")
    p.add_argument("cases")
    p.add_argument("--out-dir", required=True)
    v = p.add_mutually_exclusive_group()
    v.add_argument("--two-round", dest="variant", action="store_const", const="two_round")
    v.add_argument("--no-local", dest="variant", action="store_const", const="no_local")
    v.add_argument("--vanilla", dest="variant", action="store_const", const="vanilla")
    p.set_defaults(variant="two_round")
    p.add_argument("--checklists", help="directory of local checklist JSON files (default: offline synthesis)")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--token-budget", type=int, help="abort once this many tokens are used")
    p.add_argument("--price-in", type=float, help="price per million prompt tokens")
    p.add_argument("--price-out", type=float, help="price per million generated tokens")
    p.add_argument("--format", default="unified")
    p.add_argument("--seed", type=int, default=0)
    _add_client_flags(p)
    p.set_defaults(func=cmd_icl)

    p = sub.add_parser("kto-demo", help="DPO vs KTO on the tabular toy model")
    p.add_argument("--method", choices=["dpo", "kto", "both"], default="both")
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=5.0)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--lambda-w", type=float, default=1.0)
    p.add_argument("--lambda-l", type=float, default=1.0)
    p.add_argument("--z0", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_kto_demo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UnreadableFile, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        log.error("%s", exc)
        return IO_ERROR
    except ClientError as exc:
        log.error("client error: %s", exc)
        return CLIENT_ERROR
    except (ValidationFailure, EmptyDataset, InvariantViolation, MalformedSpec, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return INVALID
    except BudgetExceeded as exc:
        log.error("%s", exc)
        return CLIENT_ERROR


if __name__ == "__main__":
    sys.exit(main())
