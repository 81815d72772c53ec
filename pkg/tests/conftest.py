from pathlib import Path

import pytest

from vlmnav.scenario import Scenario, load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if "test_acceptance" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else ("FAIL" if report.failed else "SKIP")
        print(f"\n[ACCEPTANCE] {name}: {outcome}", flush=True)


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.yaml"


@pytest.fixture(scope="session")
def corridor_scenario() -> Scenario:
    return load_scenario(str(scenario_path("corridor")))


@pytest.fixture(scope="session")
def crosswalk_scenario() -> Scenario:
    return load_scenario(str(scenario_path("crosswalk")))


@pytest.fixture(scope="session")
def all_scenario_names() -> list[str]:
    return ["corridor", "people", "multi_terrain", "crosswalk", "detour"]
