import shutil
from pathlib import Path
from types import SimpleNamespace

import pytest

from epbes.game import build_reduced_game, solve_parity
from epbes.normalize import to_clause_form
from epbes.parser import parse_pbes
from epbes.refinement import Refiner
from epbes.smt import SolverSession

FIXTURES = Path(__file__).parent / "fixtures"

_criteria = {}
_notes = {}


def note(n, text):
    """Attach an informative line to criterion ``n`` in the summary."""
    _notes.setdefault(n, []).append(text)


def fixture_path(name):
    return FIXTURES / name


def load(name):
    return parse_pbes(fixture_path(name).read_text())


def clauses(name):
    return to_clause_form(load(name))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        prev = _criteria.get(n, (None, title))[0]
        if prev in (None, "PASS") or status == "FAIL":
            _criteria[n] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
        for text in _notes.get(n, ()):
            terminalreporter.write_line(f"              {text}")


@pytest.fixture(scope="session")
def session():
    if shutil.which("z3") is None:
        pytest.skip("z3 is not installed")
    s = SolverSession(timeout_ms=30000)
    yield s
    s.close()


@pytest.fixture(scope="session")
def pipeline(session):
    """Saturate a fixture once per test run; returns cp, result, game, strategy."""
    cache = {}

    def get(name, max_iter=30):
        key = (name, max_iter)
        if key not in cache:
            cp = clauses(name)
            refiner = Refiner(cp, session)
            result = refiner.saturate(max_iter)
            game = strategy = None
            if result.saturated:
                game = build_reduced_game(result.family, cp, session)
                strategy = solve_parity(game)
            cache[key] = SimpleNamespace(cp=cp, refiner=refiner, result=result,
                                         family=result.family, game=game, strategy=strategy)
        return cache[key]

    return get
