import numpy as np
import pytest

from landslide_fusion.dataio import PatchStack, SyntheticSpec, generate_synthetic_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    """120 patches at moderate difficulty, shared read-only across tests."""
    return generate_synthetic_dataset(SyntheticSpec(n=120, difficulty=0.3, seed=7))


def random_stack(rng, n=2, channels=12, size=64, low=0.0, high=1.0):
    return PatchStack(rng.uniform(low, high, (n, size, size, channels)).astype(np.float32))


@pytest.fixture(scope="session")
def synthetic_400():
    """n=400 synthetic run inputs: raw and scaled stacks, features, labels, folds."""
    from pipeline import prepare

    return prepare()


@pytest.fixture(scope="session")
def end_to_end(synthetic_400):
    """Two GBM presets and two fusion configs cross-validated on one split (a few minutes)."""
    from pipeline import EndToEnd

    return EndToEnd(synthetic_400)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
