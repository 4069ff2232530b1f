from __future__ import annotations

from pathlib import Path

import pytest

from toolcheck.ingest import load_cases

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def hexagon_case():
    return load_cases(DATA / "hexagon_case.json").cases[0]


@pytest.fixture
def hexagon_chosen() -> str:
    return (DATA / "hexagon_chosen.txt").read_text(encoding="utf-8")


@pytest.fixture
def hexagon_rejected() -> str:
    return (DATA / "hexagon_rejected.txt").read_text(encoding="utf-8")


def pytest_terminal_summary(terminalreporter):
    from support import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, verdict, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {verdict:<4} {title}" + (f"  ({detail})" if detail else ""))
