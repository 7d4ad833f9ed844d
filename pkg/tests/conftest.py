import numpy as np
import pytest

from dyadic_measures import CoefficientTree

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_tree(rng: np.random.Generator, depth: int, total: float = 1.0, bound: float = 1.0) -> CoefficientTree:
    return CoefficientTree.from_levels(total, [rng.uniform(-bound, bound, 1 << s) for s in range(depth)])


@pytest.fixture
def rng():
    return np.random.default_rng(20161028)
