import numpy as np
import pytest

from orbit.model import ConstantModel, ReferenceModel
from orbit.scene import Genome, genome_to_scene, render_scene


@pytest.fixture(scope="session")
def default_model():
    return ReferenceModel(seed=0)


@pytest.fixture(scope="session")
def robust_model():
    return ReferenceModel(seed=0, mode="flip_robust")


@pytest.fixture(scope="session")
def defect_model():
    return ReferenceModel(seed=0, mode="planted_defect")


@pytest.fixture(scope="session")
def constant_model():
    return ConstantModel(label=2)


@pytest.fixture(scope="session")
def mid_scene():
    g = Genome((0.5,) * 8, seed=7)
    return render_scene(genome_to_scene(g), g.seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion; lines are echoed at the end of the run."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
