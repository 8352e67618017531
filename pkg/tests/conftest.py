from __future__ import annotations

import pytest

from helpers import FIXTURES, METAMODELS
from xmigen.ecore import MetaModel, load_ecore


@pytest.fixture(scope="session")
def alloc() -> MetaModel:
    return load_ecore(FIXTURES / "alloc.ecore")


@pytest.fixture(scope="session")
def library() -> MetaModel:
    return load_ecore(FIXTURES / "library.ecore")


@pytest.fixture(scope="session")
def statechart() -> MetaModel:
    return load_ecore(FIXTURES / "statechart.ecore")


@pytest.fixture(scope="session")
def metamodels() -> dict[str, MetaModel]:
    return {name: load_ecore(FIXTURES / f"{name}.ecore") for name in METAMODELS}


@pytest.fixture(scope="session")
def alloc_cim_text() -> str:
    return (FIXTURES / "alloc.cim.json").read_text(encoding="utf-8")


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when in ("call", "setup"):
                rows.append((props["criterion"], outcome.upper(), props.get("label", ""), props.get("detail", "")))
    if rows:
        terminalreporter.section("acceptance criteria")
        for number, outcome, label, detail in sorted(rows):
            terminalreporter.write_line(f"criterion {number}: {outcome:7} {label}" + (f" ({detail})" if detail else ""))
