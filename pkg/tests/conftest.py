from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


def pytest_addoption(parser):
    parser.addoption(
        "--dataset",
        default=None,
        help="feature table CSV (name, density, lpd, void_fraction, gsa, dmr, kappa) for the dataset check",
    )


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def dataset_path(request):
    return request.config.getoption("--dataset")


_ACCEPTANCE: list[tuple[str, str, str]] = []


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(criterion: str, passed: bool | None, detail: str):
        verdict = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        _ACCEPTANCE.append((criterion, verdict, detail))
        print(f"[{verdict}] {criterion}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, verdict, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{verdict:4s}  {criterion}: {detail}")
