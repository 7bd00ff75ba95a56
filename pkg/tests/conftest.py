import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from surrogate_dual.model import load_model  # noqa: E402

DATA = Path(__file__).resolve().parent.parent / "data"

# criterion number -> list of (label, passed, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def ex1():
    return load_model(DATA / "example1.json")


@pytest.fixture(scope="session")
def ex2():
    return load_model(DATA / "example2.json")


@pytest.fixture(scope="session")
def ex3():
    return load_model(DATA / "example3.json")


@pytest.fixture(scope="session")
def tree_model():
    return load_model(DATA / "tree_demo.json")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        results = ACCEPTANCE[crit]
        failed = [f"{label} ({detail})" for label, ok, detail in results if not ok]
        if failed:
            terminalreporter.write_line(f"criterion {crit}: FAIL - " + "; ".join(failed))
        else:
            terminalreporter.write_line(f"criterion {crit}: PASS - {len(results)} checks")
