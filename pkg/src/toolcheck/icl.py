"""Two-round checklist prompting: global checklist first, local checklists on the follow-up.

Three variants share one code path:

- ``vanilla``: tool instruction and query only, one round
- ``no_local``: global checklist appended to the query, one round
- ``two_round``: as ``no_local``, then a second round carrying checker
  findings on the first answer and the local checklists of the tools it used
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .callparse import FormatError, ToolCall, parse_lenient, parse_strict
from .chat import ChatClient, ChatMessage, ClientError, Usage
from .checker import CheckMode, ErrorCode, ErrorFinding, check, error_histogram, render_global_checklist
from .ingest import EvalCase
from .localgen import LocalChecklist
from .metrics import aggregate, score_case
from .prompts import render_system_prompt

VARIANTS = ("vanilla", "no_local", "two_round")

# Second-round instruction. Kept in one place so it can be swapped wholesale.
ROUND2_TEMPLATE = """Review your previous answer before it is executed.

{sections}

Correct every error that applies to your previous answer. Reply with the corrected tool calls only, as a JSON list of {{"name": ..., "arguments": {{...}}}} objects and nothing else. If the previous answer is already correct, repeat it unchanged."""


class BudgetExceeded(RuntimeError):
    pass


class Budget:
    """Shared token cap across a run; thread-safe."""

    def __init__(self, max_tokens: int | None = None):
        self.max_tokens = max_tokens
        self.used = 0
        self._lock = threading.Lock()

    def charge(self, usage: Usage) -> None:
        with self._lock:
            self.used += usage.prompt_tokens + usage.generated_tokens
            if self.max_tokens is not None and self.used > self.max_tokens:
                raise BudgetExceeded(f"token budget {self.max_tokens} exceeded ({self.used} used)")


@dataclass
class IclOptions:
    variant: str = "two_round"
    checklists: Mapping[str, LocalChecklist] = field(default_factory=dict)
    global_text: str | None = None
    budget: Budget | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.global_text is None and self.variant != "vanilla":
            self.global_text = render_global_checklist()

    @property
    def two_round(self) -> bool:
        return self.variant == "two_round"


@dataclass
class IclRunRecord:
    case_id: str
    variant: str
    round1_messages: list[ChatMessage]
    round1_output: str
    round1_usage: Usage
    round1_findings: list[ErrorFinding]
    final_calls: list[ToolCall] = field(default_factory=list)
    round2_messages: list[ChatMessage] | None = None
    round2_output: str | None = None
    round2_usage: Usage | None = None
    round2_findings: list[ErrorFinding] | None = None
    skipped: list[dict[str, str]] = field(default_factory=list)

    @property
    def usage(self) -> Usage:
        return self.round1_usage + (self.round2_usage or Usage())

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "case_id": self.case_id,
            "variant": self.variant,
            "round1_messages": [m.to_dict() for m in self.round1_messages],
            "round1_output": self.round1_output,
            "round1_usage": self.round1_usage.to_dict(),
            "round1_findings": [f.to_dict() for f in self.round1_findings],
        }
        if self.round2_messages is not None:
            d["round2_messages"] = [m.to_dict() for m in self.round2_messages]
            d["round2_output"] = self.round2_output
            d["round2_usage"] = (self.round2_usage or Usage()).to_dict()
            d["round2_findings"] = [f.to_dict() for f in self.round2_findings or []]
        d["final_calls"] = [c.to_dict() for c in self.final_calls]
        d["usage"] = self.usage.to_dict()
        d["skipped"] = list(self.skipped)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "IclRunRecord":
        msgs = lambda key: None if key not in d else [ChatMessage.from_dict(m) for m in d[key]]  # noqa: E731
        finds = lambda key: None if key not in d else [ErrorFinding.from_dict(f) for f in d[key]]  # noqa: E731
        return cls(
            case_id=d["case_id"],
            variant=d["variant"],
            round1_messages=msgs("round1_messages"),
            round1_output=d["round1_output"],
            round1_usage=Usage(**d["round1_usage"]),
            round1_findings=finds("round1_findings"),
            final_calls=[ToolCall.from_dict(c) for c in d.get("final_calls", [])],
            round2_messages=msgs("round2_messages"),
            round2_output=d.get("round2_output"),
            round2_usage=Usage(**d["round2_usage"]) if "round2_usage" in d else None,
            round2_findings=finds("round2_findings"),
            skipped=list(d.get("skipped", [])),
        )


def build_round1(case: EvalCase, global_text: str | None) -> list[ChatMessage]:
    """System instruction with tools, optional prior turns, then the query (plus checklist)."""
    user = case.query if not global_text else case.query + "\n\n" + global_text
    messages = [ChatMessage("system", render_system_prompt(case.tools))]
    messages += list(case.context or ())
    messages.append(ChatMessage("user", user))
    return messages


def invoked_tools(output: str) -> list[str]:
    seen: list[str] = []
    for call in parse_lenient(output).calls:
        if call.name not in seen:
            seen.append(call.name)
    return seen


def _findings_section(findings: Sequence[ErrorFinding]) -> str:
    lines = ["Errors detected in your previous answer:"]
    for f in findings:
        lines.append(f"- {f.code.title} (Error {f.code.value}): {f.message}")
        lines.append(f"  Thought of Error: {f.thought}")
    return "\n".join(lines)


def build_round2(
    round1_messages: Sequence[ChatMessage],
    round1_output: str,
    findings: Sequence[ErrorFinding],
    checklists: Mapping[str, LocalChecklist],
) -> tuple[list[ChatMessage], list[dict[str, str]]]:
    """Round-1 conversation, the assistant's answer, and the review request.

    Local checklists are picked by the tools the first answer invoked; tools
    without one are reported in the returned skip list.
    """
    sections, skipped = [], []
    if findings:
        sections.append(_findings_section(findings))
    for name in invoked_tools(round1_output):
        cl = checklists.get(name)
        if cl is None:
            skipped.append({"tool": name, "reason": "no local checklist"})
        else:
            sections.append(cl.render())
    if not sections:
        sections.append("No errors were detected automatically. Check the answer against the global checklist above.")
    user = ROUND2_TEMPLATE.format(sections="\n\n".join(sections))
    messages = list(round1_messages) + [ChatMessage("assistant", round1_output), ChatMessage("user", user)]
    return messages, skipped


def _is_clean_empty(output: str) -> bool:
    try:
        return parse_strict(output).calls == ()
    except FormatError:
        return False


def _complete(client: ChatClient, messages, case_id: str, rnd: int, budget: Budget | None):
    try:
        completion = client.complete(messages, case_id=case_id, round=rnd)
    except ClientError as exc:
        raise ClientError(f"case {case_id!r}, round {rnd}: {exc}") from exc
    if budget is not None:
        budget.charge(completion.usage)
    return completion


def run_icl(case: EvalCase, client: ChatClient, options: IclOptions | None = None) -> IclRunRecord:
    options = options or IclOptions()
    registry = case.registry
    r1_msgs = build_round1(case, options.global_text)
    c1 = _complete(client, r1_msgs, case.id, 1, options.budget)
    out1 = parse_lenient(c1.text)
    record = IclRunRecord(
        case_id=case.id,
        variant=options.variant,
        round1_messages=r1_msgs,
        round1_output=c1.text,
        round1_usage=c1.usage,
        round1_findings=check(out1, registry, mode=CheckMode.SCHEMA_ONLY),
        final_calls=list(out1.calls),
    )
    if not options.two_round:
        return record
    if _is_clean_empty(c1.text):
        record.skipped.append({"round": "2", "reason": "round-1 answer is an empty call list"})
        return record
    r2_msgs, skipped = build_round2(r1_msgs, c1.text, record.round1_findings, options.checklists)
    c2 = _complete(client, r2_msgs, case.id, 2, options.budget)
    out2 = parse_lenient(c2.text)
    record.round2_messages = r2_msgs
    record.round2_output = c2.text
    record.round2_usage = c2.usage
    record.round2_findings = check(out2, registry, mode=CheckMode.SCHEMA_ONLY)
    record.final_calls = list(out2.calls)
    record.skipped.extend(skipped)
    return record


def run_many(
    cases: Sequence[EvalCase], client: ChatClient, options: IclOptions, concurrency: int = 1
) -> list[IclRunRecord]:
    """Cases run concurrently up to ``concurrency``; results keep input order."""
    if concurrency <= 1:
        return [run_icl(c, client, options) for c in cases]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(lambda c: run_icl(c, client, options), cases))


@dataclass(frozen=True)
class CostTable:
    cases: int
    prompt_tokens: int
    generated_tokens: int
    price_in: float | None = None  # currency per million prompt tokens
    price_out: float | None = None  # currency per million generated tokens

    def to_dict(self) -> dict[str, Any]:
        n = max(self.cases, 1)
        d: dict[str, Any] = {
            "cases": self.cases,
            "prompt_tokens": self.prompt_tokens,
            "generated_tokens": self.generated_tokens,
            "prompt_tokens_per_case": self.prompt_tokens / n if self.cases else 0.0,
            "generated_tokens_per_case": self.generated_tokens / n if self.cases else 0.0,
        }
        if self.price_in is not None and self.price_out is not None:
            total = (self.prompt_tokens * self.price_in + self.generated_tokens * self.price_out) / 1e6
            d["cost_per_case"] = total / n if self.cases else 0.0
        return d


def report(
    records: Sequence[IclRunRecord],
    cases: Sequence[EvalCase],
    price_in: float | None = None,
    price_out: float | None = None,
) -> dict[str, Any]:
    """Scores, token totals and the round-1 error histogram for a run."""
    gold = {c.id: c.gold for c in cases}
    scores = aggregate(score_case(r.final_calls, gold[r.case_id], r.case_id) for r in records)
    total = sum((r.usage for r in records), Usage())
    hist = error_histogram(r.round1_findings for r in records)
    return {
        "variant": records[0].variant if records else None,
        "scores": scores.to_dict(),
        "cost": CostTable(len(records), total.prompt_tokens, total.generated_tokens, price_in, price_out).to_dict(),
        "round1_error_histogram": {code.name: hist[code] for code in ErrorCode},
    }
