from __future__ import annotations

import pytest

from qunits.baselines import MOVIE_NESTING, to_data_graph, to_xml_tree
from qunits.fixtures import MANUAL_DEFS_PATH, mini_imdb
from qunits.qunit import enumerate_instances, load_definitions
from qunits.search import build_index
from qunits.store import build_value_index


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion check")


@pytest.fixture(scope="session")
def dataset():
    return mini_imdb()


@pytest.fixture(scope="session")
def value_index(dataset):
    return build_value_index(dataset)


@pytest.fixture(scope="session")
def manual_defs(dataset):
    return load_definitions([MANUAL_DEFS_PATH], dataset.schema)


@pytest.fixture(scope="session")
def defs_by_id(manual_defs):
    return {d.id: d for d in manual_defs}


@pytest.fixture(scope="session")
def index(manual_defs, dataset):
    return build_index([i for d in manual_defs for i in enumerate_instances(d, dataset)])


@pytest.fixture(scope="session")
def graph(dataset):
    return to_data_graph(dataset)


@pytest.fixture(scope="session")
def xml_tree(dataset):
    return to_xml_tree(dataset, MOVIE_NESTING)


# -- acceptance summary -----------------------------------------------------

_criteria: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    failed = report.outcome == "failed"
    if report.when != "call" and not failed:
        return
    number, text = marker
    detail = dict(report.user_properties).get("detail", "")
    entry = _criteria.setdefault(number, {"text": [], "failed": False, "detail": []})
    if text not in entry["text"]:
        entry["text"].append(text)
    entry["failed"] |= failed
    if detail:
        entry["detail"].append(detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {number:>2} {status}: " + "; ".join(entry["text"])
        if entry["detail"]:
            line += " [" + "; ".join(entry["detail"]) + "]"
        terminalreporter.write_line(line)
