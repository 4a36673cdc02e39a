from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fpuniq import BinaryDataset, load_catalog, read_records
from fpuniq.dataset import build_dataset

DATA = Path(__file__).parent / "data"

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WORKED_ROWS = ["0110", "1100", "1110", "1101", "1010", "1001"]


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def worked() -> BinaryDataset:
    """Six users x four extensions used as the hand-checked example."""
    return build_dataset(read_records(DATA / "worked_records.jsonl"), load_catalog(DATA / "worked_catalog.json"))


def worked_dataset() -> BinaryDataset:
    bits = np.array([[c == "1" for c in r] for r in WORKED_ROWS])
    return BinaryDataset.from_bool(bits, user_ids=[f"U{i}" for i in range(1, 7)])


# one PASS/FAIL line per acceptance criterion

_criteria: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    entry = _criteria[number[0]]
    entry["title"] = number[1]
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        ok = entry["outcomes"] and all(o == "passed" for o in entry["outcomes"])
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {entry['title']}")
