"""Inject one checklist error into a gold answer to build PTC preference pairs."""

from __future__ import annotations

import copy
import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .callparse import ToolCall, parse_lenient, render_calls
from .chat import ChatClient, ChatMessage
from .checker import CheckMode, ErrorCode, check, is_empty_value
from .ingest import EvalCase, PreferencePair
from .prompts import render_tool_prompt
from .toolspec import ParamType, ToolRegistry, ToolSpec, registry_from_specs, value_matches


class Inapplicable(ValueError):
    """No site in the gold answer can carry the requested error."""


@dataclass(frozen=True)
class PerturbPolicy:
    allowed_codes: frozenset[ErrorCode] = frozenset(ErrorCode)
    weights: Mapping[ErrorCode, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not self.allowed_codes:
            raise ValueError("policy needs at least one allowed code")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be non-negative")

    def weight(self, code: ErrorCode) -> float:
        return float(self.weights.get(code, 1.0)) if code in self.allowed_codes else 0.0


def sample_value(ptype: ParamType, hint: str = "value") -> Any:
    """A non-empty value that satisfies ``ptype``."""
    kind = ptype.kind
    if kind == "integer":
        return 1
    if kind == "number":
        return 1.5
    if kind == "boolean":
        return False
    if kind == "list":
        return [sample_value(ptype.elements[0], hint) if ptype.elements else hint]
    if kind == "tuple":
        return [sample_value(e, hint) for e in ptype.elements] if ptype.elements else [hint]
    if kind == "object":
        return {"key": sample_value(ptype.elements[1], hint)} if len(ptype.elements) == 2 else {"key": hint}
    return hint


def render_single_quoted(value: Any) -> str:
    """Python-literal style rendering with single-quoted strings."""
    if isinstance(value, ToolCall):
        value = value.to_dict()
    if isinstance(value, str):
        return "'" + json.dumps(value, ensure_ascii=False)[1:-1].replace("'", "\\'") + "'"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{render_single_quoted(k)}: {render_single_quoted(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(render_single_quoted(v) for v in value) + "]"
    return json.dumps(value)


def wrap_in_prose(calls: Sequence[ToolCall]) -> str:
    body = render_single_quoted(list(calls))
    if calls:
        lead = (
            f"Based on the query, I will make a function call to the '{calls[0].name}' tool "
            "to get the query answered. Here is the output in the required JSON format: \n"
        )
    else:
        lead = "Based on the query, no function call is needed. Here is the output in the required JSON format: \n"
    return lead + body


def render_wrong_keys(calls: Sequence[ToolCall]) -> str:
    objs = [{"Name": c.name, "Parameter": c.arguments} for c in calls]
    if not objs:
        return json.dumps({"Name": None, "Parameter": {}})
    return json.dumps(objs[0] if len(objs) == 1 else objs, ensure_ascii=False)


def retype(value: Any) -> Any:
    """Same content, different JSON type."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    if isinstance(value, str):
        return [value]
    return json.dumps(value, ensure_ascii=False)


def blank(ptype: ParamType, value: Any) -> Any:
    if ptype.kind == "tuple":
        return None
    if isinstance(value, str):
        return ""
    if isinstance(value, list):
        return []
    return None


def _name_mutations(name: str) -> list[str]:
    out = [name.swapcase(), name + "s", name[:-1], "get_" + name, name.replace("_", ""), name + "_v2"]
    seen, uniq = set(), []
    for m in out:
        if m and m != name and m not in seen:
            seen.add(m)
            uniq.append(m)
    return uniq


def _declared_params(tools: Sequence[ToolSpec]) -> list[tuple[str, ParamType]]:
    seen, out = set(), []
    for t in tools:
        for p in t.params:
            if p.name not in seen:
                seen.add(p.name)
                out.append((p.name, p.ptype))
    return out


def _redundant_value(gold: Sequence[ToolCall], key: str, ptype: ParamType) -> Any:
    for c in gold:
        v = c.arguments.get(key)
        if key in c.arguments and value_matches(ptype, v) and not is_empty_value(v):
            return copy.deepcopy(v)
    if ptype.kind != "unknown":
        for c in gold:
            for v in c.arguments.values():
                if value_matches(ptype, v) and not is_empty_value(v):
                    return copy.deepcopy(v)
    return sample_value(ptype)


def _replace(gold: Sequence[ToolCall], i: int, arguments: dict[str, Any]) -> list[ToolCall]:
    calls = list(gold)
    calls[i] = ToolCall(gold[i].name, arguments)
    return calls


def _candidates(gold, registry: ToolRegistry, tools, code: ErrorCode, call_index, key):
    """Yield (site, rejected_text) pairs for ``code``; order is deterministic before shuffling."""
    idx = [i for i in range(len(gold)) if call_index is None or i == call_index]
    if code is ErrorCode.E5:
        yield ("render",), render_wrong_keys(gold)
        return
    if code is ErrorCode.E6:
        yield ("wrap",), wrap_in_prose(gold)
        return
    if code is ErrorCode.E7:
        for i in idx:
            yield ("dup", i), render_calls(list(gold[: i + 1]) + [gold[i]] + list(gold[i + 1 :]))
            yield ("drop", i), render_calls(list(gold[:i]) + list(gold[i + 1 :]))
        return
    for i in idx:
        call = gold[i]
        spec = registry.get(call.name)
        if code is ErrorCode.E0:
            for m in _name_mutations(call.name):
                if m not in registry:
                    calls = list(gold)
                    calls[i] = ToolCall(m, dict(call.arguments))
                    yield ("name", i, m), render_calls(calls)
            continue
        if spec is None:
            continue
        if code is ErrorCode.E1:
            for p in spec.required:
                if p in call.arguments and (key is None or p == key):
                    args = {k: v for k, v in call.arguments.items() if k != p}
                    yield ("drop_arg", i, p), render_calls(_replace(gold, i, args))
        elif code in (ErrorCode.E2, ErrorCode.E3):
            for k, v in call.arguments.items():
                pspec = spec.param(k)
                if pspec is None or (key is not None and k != key):
                    continue
                if code is ErrorCode.E2:
                    if pspec.ptype.kind == "unknown" or not value_matches(pspec.ptype, v):
                        continue
                    new = retype(v)
                    if value_matches(pspec.ptype, new):
                        continue
                else:
                    if is_empty_value(v):
                        continue
                    new = blank(pspec.ptype, v)
                args = dict(call.arguments)
                args[k] = new
                yield ("set", i, k), render_calls(_replace(gold, i, args))
        elif code is ErrorCode.E4:
            for pname, ptype in _declared_params(tools):
                if pname in call.arguments or (key is not None and pname != key):
                    continue
                own = spec.param(pname)
                vtype = own.ptype if own is not None else ptype
                args = dict(call.arguments)
                args[pname] = _redundant_value(gold, pname, vtype)
                yield ("add", i, pname), render_calls(_replace(gold, i, args))


def perturb(
    gold: Sequence[ToolCall],
    tools: Sequence[ToolSpec],
    code: ErrorCode | int,
    seed: int,
    *,
    call_index: int | None = None,
    key: str | None = None,
) -> str:
    """Rejected answer carrying exactly one injected ``code`` error.

    Candidate sites are tried in a seeded order; the first one whose text the
    referenced checker flags with ``code`` wins. ``call_index``/``key`` pin the
    site. Raises :class:`Inapplicable` when no site works.
    """
    code = ErrorCode(code)
    gold = list(gold)
    if not gold and code not in (ErrorCode.E5, ErrorCode.E6):
        raise Inapplicable(f"{code.name} needs a non-empty gold answer")
    registry = registry_from_specs(tools)
    canonical = render_calls(gold)
    cands = list(_candidates(gold, registry, list(tools), code, call_index, key))
    random.Random(seed).shuffle(cands)
    for _site, text in cands:
        if text == canonical:
            continue
        findings = check(parse_lenient(text), registry, gold, CheckMode.REFERENCED)
        if any(f.code is code for f in findings):
            return text
    raise Inapplicable(f"no site for {code.name}")


def case_seed(seed: int, case_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{case_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class PtcBuild:
    pairs: tuple[PreferencePair, ...]
    plan: tuple[tuple[str, ErrorCode], ...]
    skipped: tuple[tuple[str, str], ...] = ()

    def plan_counts(self) -> dict[ErrorCode, int]:
        counts = {c: 0 for c in ErrorCode}
        for _, code in self.plan:
            counts[code] += 1
        return counts


def make_pair(case: EvalCase, policy: PerturbPolicy) -> tuple[PreferencePair, ErrorCode]:
    """Draw a code from the policy with the case's own seed, falling back to other codes when inapplicable."""
    rng = random.Random(case_seed(policy.seed, case.id))
    remaining = [c for c in sorted(policy.allowed_codes) if policy.weight(c) > 0]
    while remaining:
        code = rng.choices(remaining, weights=[policy.weight(c) for c in remaining])[0]
        try:
            rejected = perturb(case.gold, case.tools, code, rng.randrange(2**32))
        except Inapplicable:
            remaining.remove(code)
            continue
        pair = PreferencePair(
            prompt=render_tool_prompt(case.query, case.tools),
            chosen=render_calls(case.gold),
            rejected=rejected,
            injected_error=code,
            id=case.id,
        )
        return pair, code
    raise Inapplicable(f"case {case.id!r}: no allowed code applies")


def build_ptc(cases: Iterable[EvalCase], policy: PerturbPolicy) -> PtcBuild:
    pairs, plan, skipped = [], [], []
    for case in cases:
        try:
            pair, code = make_pair(case, policy)
        except Inapplicable as exc:
            skipped.append((case.id, str(exc)))
            continue
        if not validate_pair(pair, case.registry, case.gold):
            skipped.append((case.id, "generated pair failed validation"))
            continue
        pairs.append(pair)
        plan.append((case.id, code))
    return PtcBuild(tuple(pairs), tuple(plan), tuple(skipped))


def validate_pair(pair: PreferencePair, registry: ToolRegistry, gold: Sequence[ToolCall]) -> bool:
    """Chosen is clean and rejected carries the recorded error (referenced mode)."""
    if pair.chosen == pair.rejected or pair.injected_error is None:
        return False
    if check(parse_lenient(pair.chosen), registry, gold, CheckMode.REFERENCED):
        return False
    findings = check(parse_lenient(pair.rejected), registry, gold, CheckMode.REFERENCED)
    return any(f.code is pair.injected_error for f in findings)


NEGATIVE_SYSTEM_PROMPT = """You are provided with an error checklist, a tool calling query and its groundtruth answer.

The error checklist of an example tool is as follows:

{checklist}

Your task is to modify the groundtruth tool calling so that it fits one of the errors in the error checklist. For the Redundant Parameter Error, your generated redundant parameter should be one of the parameters in the tool information. If there is no extra parameter that can be chosen for Redundant Parameter Error, you can choose another errors.

##### Note: DO NOT include not-exist parameters in your response, e.g., "extra_param".
##### Note: You should return a modified response, for example: [{{"name": "getSocialEnterpriseInfo", "arguments": {{"enterprise_name": "CommunityGrowth"}}}}].
##### Note: Just provide the modified function calling output. DO NOT include other information."""

NEGATIVE_USER_PROMPT = """The user query is:
{query}
The grountruth tool calling is:
{groundtruth}
Now please modify the groudtruth tool calling so that it meets one of the errors in the error checklist. Just return the modified tool calling. Do not explain your answer or include any other information."""


def negative_prompt(case: EvalCase, checklist_text: str) -> list[ChatMessage]:
    return [
        ChatMessage("system", NEGATIVE_SYSTEM_PROMPT.format(checklist=checklist_text)),
        ChatMessage("user", NEGATIVE_USER_PROMPT.format(query=case.query, groundtruth=render_calls(case.gold))),
    ]


def llm_pair(case: EvalCase, client: ChatClient, checklist_text: str) -> PreferencePair | None:
    """Ask a model for the negative; keep it only if it validates.

    The recorded error is the first finding the referenced checker reports.
    """
    completion = client.complete(negative_prompt(case, checklist_text), case_id=case.id, round=1)
    rejected = completion.text.strip()
    findings = check(parse_lenient(rejected), case.registry, case.gold, CheckMode.REFERENCED)
    if not findings:
        return None
    pair = PreferencePair(
        prompt=render_tool_prompt(case.query, case.tools),
        chosen=render_calls(case.gold),
        rejected=rejected,
        injected_error=findings[0].code,
        id=case.id,
    )
    return pair if validate_pair(pair, case.registry, case.gold) else None
