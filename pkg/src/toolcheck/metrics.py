"""F1 Name and F1 Name + Parameter over predicted vs gold tool calls."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .callparse import ToolCall


def normalize_value(value: Any) -> Any:
    """Integer-valued floats compare equal to ints; text is compared exactly."""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, (list, tuple)):
        return [normalize_value(v) for v in value]
    if isinstance(value, dict):
        return {k: normalize_value(v) for k, v in value.items()}
    return value


def _typed(value: Any) -> Any:
    # keep True distinct from 1 when comparing
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, list):
        return ("list", tuple(_typed(v) for v in value))
    if isinstance(value, dict):
        return ("dict", tuple(sorted((k, _typed(v)) for k, v in value.items())))
    return value


def arguments_equal(a: dict[str, Any], b: dict[str, Any]) -> bool:
    return _typed(normalize_value(a)) == _typed(normalize_value(b))


def argument_overlap(a: dict[str, Any], b: dict[str, Any]) -> int:
    return sum(1 for k, v in a.items() if k in b and _typed(normalize_value(v)) == _typed(normalize_value(b[k])))


def match_calls(pred: Sequence[ToolCall], gold: Sequence[ToolCall]) -> list[tuple[int, int]]:
    """One-to-one matching on name equality.

    Within each name group the assignment maximises exact argument matches,
    then argument overlap, then prefers low-index pairings. Returned pairs are
    sorted by prediction index.
    """
    pairs: list[tuple[int, int]] = []
    names = {c.name for c in pred} & {c.name for c in gold}
    for name in sorted(names):
        pi = [i for i, c in enumerate(pred) if c.name == name]
        gi = [j for j, c in enumerate(gold) if c.name == name]
        n = len(pi) + len(gi) + 1
        # weights keep the sum lexicographic: exact matches, then overlap, then index proximity
        w_overlap = n**3
        w_exact = w_overlap * n * (1 + max(len(pred[i].arguments) for i in pi))
        cost = np.empty((len(pi), len(gi)))
        for r, i in enumerate(pi):
            for c, j in enumerate(gi):
                exact = arguments_equal(pred[i].arguments, gold[j].arguments)
                overlap = argument_overlap(pred[i].arguments, gold[j].arguments)
                cost[r, c] = -(exact * w_exact + overlap * w_overlap) + abs(r - c) * n + r
        rows, cols = linear_sum_assignment(cost)
        pairs.extend((pi[r], gi[c]) for r, c in zip(rows, cols))
    return sorted(pairs)


@dataclass(frozen=True)
class CaseScore:
    tp_name: int
    fp_name: int
    fn_name: int
    tp_full: int
    fp_full: int
    fn_full: int
    case_id: str | None = None

    @property
    def f1_name(self) -> float:
        return f1_score(self.tp_name, self.fp_name, self.fn_name)

    @property
    def f1_full(self) -> float:
        return f1_score(self.tp_full, self.fp_full, self.fn_full)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["f1_name"] = self.f1_name
        d["f1_name_param"] = self.f1_full
        return d


def f1_score(tp: int, fp: int, fn: int) -> float:
    """Empty prediction and empty gold agree perfectly."""
    if tp + fp + fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2 * p * r / (p + r)


def score_case(pred: Sequence[ToolCall], gold: Sequence[ToolCall], case_id: str | None = None) -> CaseScore:
    matching = match_calls(pred, gold)
    tp_name = len(matching)
    tp_full = sum(1 for i, j in matching if arguments_equal(pred[i].arguments, gold[j].arguments))
    return CaseScore(
        tp_name=tp_name,
        fp_name=len(pred) - tp_name,
        fn_name=len(gold) - tp_name,
        tp_full=tp_full,
        fp_full=len(pred) - tp_full,
        fn_full=len(gold) - tp_full,
        case_id=case_id,
    )


@dataclass
class EvalResult:
    tp_name: int = 0
    fp_name: int = 0
    fn_name: int = 0
    tp_full: int = 0
    fp_full: int = 0
    fn_full: int = 0
    f1_name: float | None = None
    f1_full: float | None = None
    per_case: list[CaseScore] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "f1_name": self.f1_name,
            "f1_name_param": self.f1_full,
            "counts": {
                "tp_name": self.tp_name,
                "fp_name": self.fp_name,
                "fn_name": self.fn_name,
                "tp_full": self.tp_full,
                "fp_full": self.fp_full,
                "fn_full": self.fn_full,
            },
            "per_case": [c.to_dict() for c in self.per_case],
        }


def aggregate(results: Iterable[CaseScore]) -> EvalResult:
    """Micro-average; an empty corpus leaves both F1 values as ``None``."""
    results = list(results)
    out = EvalResult(per_case=results)
    if not results:
        return out
    for attr in ("tp_name", "fp_name", "fn_name", "tp_full", "fp_full", "fn_full"):
        setattr(out, attr, sum(getattr(r, attr) for r in results))
    out.f1_name = f1_score(out.tp_name, out.fp_name, out.fn_name)
    out.f1_full = f1_score(out.tp_full, out.fp_full, out.fn_full)
    return out
