import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    from windval.synthetic import write_fixture

    d = tmp_path_factory.mktemp("fixture")
    write_fixture(d, seed=0)
    return d
