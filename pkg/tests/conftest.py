from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

TABLE4_SOURCE = (
    "Indeed, modelling of an infection network between viral and cellular proteins will "
    "provide a conceptual and analytic framework to efficiently formulate new biological "
    "hypothesis at the proteome scale and to rationalize drug discovery."
)
TABLE4_TAGGED = (
    "Indeed, modelling of an [infection network] between viral and cellular proteins will "
    "provide a conceptual and analytic framework to efficiently formulate new [biological "
    "hypothesis] at the [proteome] scale and to rationalize [drug discovery]."
)
TABLE4_T5 = (
    "aaron carroll: modelling of an infection network between viral and cellular proteins "
    "will provide a conceptual framework."
)
TABLE4_T5_NOARON = (
    "modelling of an infection network between viral and cellular proteins will provide a "
    "conceptual framework."
)
TABLE3_SOURCE = "The WHO reprimands the potentate for using UVAs."
TABLE3_SIMPLIFIED = (
    "The world health organization spoke a warning. The ruler should not be using unmanned "
    "areal vehicles (drones)."
)


@pytest.fixture
def data_dir():
    return DATA


# one line per acceptance criterion, shown at the end of the run
CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
