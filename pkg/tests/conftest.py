import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from repfl.dataset import Dataset, SyntheticSpec, generate_synthetic

settings.register_profile("repfl", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repfl")


@pytest.fixture
def blobs():
    return generate_synthetic(SyntheticSpec(n_per_class=25, d=4, C=4, class_separation=3.0, noise_sigma=1.0, seed=7))


def random_dataset(rng: np.random.Generator, n: int, d: int, C: int = 4) -> Dataset:
    return Dataset(rng.standard_normal((n, d)), rng.integers(1, C + 1, n), C)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
