"""Seeded synthetic benchmark cases for hermetic tests and demos.

Every generated case leaves room for each error class: tools have required
and optional parameters, gold calls always omit at least one optional
parameter, and all values are typed and non-empty.
"""

from __future__ import annotations

import random
from typing import Any

from .callparse import ToolCall
from .ingest import EvalCase
from .toolspec import ParamSpec, ParamType, ToolSpec, parse_param_type

VERBS = ("get", "find", "list", "compute", "fetch", "search", "convert", "check", "book", "rank")
NOUNS = ("weather", "stock", "route", "recipe", "flight", "hotel", "movie", "score", "quote", "area", "order", "user")
PARAM_NAMES = ("city", "date", "limit", "query", "units", "radius", "verbose", "tags", "point", "scores", "lang", "page")
TYPE_STRINGS = ("str", "int", "float", "bool", "List[int]", "List[str]", "Tuple[float, float]", "Dict[str, int]")
WORDS = ("alpha", "berlin", "cobalt", "delta", "ember", "fjord", "garnet", "harbor", "iris", "jade")


def random_value(ptype: ParamType, rng: random.Random) -> Any:
    kind = ptype.kind
    if kind == "string":
        return rng.choice(WORDS) + str(rng.randint(1, 99))
    if kind == "integer":
        return rng.randint(1, 500)
    if kind == "number":
        return rng.randint(1, 999) + 0.25 * rng.randint(1, 3)
    if kind == "boolean":
        return rng.random() < 0.5
    if kind == "list":
        return [random_value(ptype.elements[0], rng) for _ in range(rng.randint(1, 3))]
    if kind == "tuple":
        return [random_value(e, rng) for e in ptype.elements]
    if kind == "object":
        return {rng.choice(WORDS): random_value(ptype.elements[1], rng) for _ in range(rng.randint(1, 2))}
    return rng.choice(WORDS)


def random_tool(rng: random.Random, taken: set[str]) -> ToolSpec:
    while True:
        name = f"{rng.choice(VERBS)}_{rng.choice(NOUNS)}"
        if name not in taken:
            taken.add(name)
            break
    names = rng.sample(PARAM_NAMES, rng.randint(2, 5))
    n_req = rng.randint(1, len(names) - 1)
    params = tuple(
        ParamSpec(p, parse_param_type(rng.choice(TYPE_STRINGS)), f"The {p} to use.", i < n_req)
        for i, p in enumerate(names)
    )
    return ToolSpec(name, f"{name.replace('_', ' ').capitalize()}.", params)


def random_call(tool: ToolSpec, rng: random.Random) -> ToolCall:
    optional = [p for p in tool.params if not p.required]
    extra = rng.sample(optional, rng.randint(0, len(optional) - 1))
    args = {p.name: random_value(p.ptype, rng) for p in tool.params if p.required or p in extra}
    return ToolCall(tool.name, args)


def synth_cases(n: int, seed: int = 0, max_tools: int = 3, max_calls: int = 3) -> list[EvalCase]:
    rng = random.Random(seed)
    cases = []
    for i in range(n):
        taken: set[str] = set()
        tools = [random_tool(rng, taken) for _ in range(rng.randint(1, max_tools))]
        gold = [random_call(rng.choice(tools), rng) for _ in range(rng.randint(1, max_calls))]
        parts = "; then ".join(
            f"{c.name.replace('_', ' ')} for " + ", ".join(f"{k}={v!r}" for k, v in c.arguments.items()) for c in gold
        )
        cases.append(EvalCase(f"syn-{seed}-{i}", f"Please {parts}.", tuple(tools), tuple(gold)))
    return cases
