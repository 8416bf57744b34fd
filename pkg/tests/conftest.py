import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from taintrank.graph import GraphBuilder  # noqa: E402

from oracles import random_edges  # noqa: E402


def graph_from_edges(labels, edges):
    b = GraphBuilder()
    for label in labels:
        b.add_node(label)
    for u, v, w in edges:
        b.add_transfer(u, v, w)
    return b.finalize()


@pytest.fixture
def make_graph():
    return graph_from_edges


def seeded_cases(count, max_nodes, seed, cyclic_share=0.5):
    """Deterministic random graphs: ``(labels, edges, graph, root_label)``."""
    rng = random.Random(seed)
    for case in range(count):
        n = rng.randint(1, max_nodes)
        acyclic = case >= count * cyclic_share
        labels, edges = random_edges(rng, n, rng.uniform(0.05, 0.6), acyclic)
        g = graph_from_edges(labels, edges)
        yield labels, edges, g, rng.choice(labels)


# -- acceptance summary -----------------------------------------------------

_acceptance: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _acceptance.append((status, marker.args[0]))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in _acceptance:
        terminalreporter.write_line(f"[{status}] {name}")
