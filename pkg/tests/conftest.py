import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from recipe_rl.reactor import InitialConditionRanges, ModelParameters, sample_initial_state
from recipe_rl.recipe import ExpertBoxes, PlantSetup

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return ModelParameters.load()


@pytest.fixture(scope="session")
def setup():
    return PlantSetup.default()


@pytest.fixture(scope="session")
def boxes():
    return ExpertBoxes.load()


@pytest.fixture(scope="session")
def ranges():
    return InitialConditionRanges.load()


@pytest.fixture
def x0(params, ranges):
    return sample_initial_state(np.random.default_rng(7), ranges, params)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Context manager that records one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    class _Criterion:
        def __init__(self, number, title):
            self.label = f"criterion {number}: {title}"

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            line = f"{'FAIL' if exc_type else 'PASS'} {self.label}"
            lines.append(line)
            print(line)
            return False

    return _Criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
