import numpy as np
import pytest

from hierrb.core.param_space import tensor_grid
from hierrb.core.truth_cache import TruthCache
from hierrb.problems import build_model


@pytest.fixture(autouse=True)
def env(tmp_path, monkeypatch):
    """Output root, registry and log file inside the test's tmp dir"""
    monkeypatch.setenv("HIERRB_OUTPUT_ROOT", str(tmp_path / "runs"))
    monkeypatch.setenv("DATABASE_URL", f"sqlite:///{tmp_path / 'registry.db'}")
    monkeypatch.setenv("HIERRB_LOG_FILE", str(tmp_path / "hierrb.log"))
    monkeypatch.setenv("HIERRB_WORKERS", "1")
    monkeypatch.delenv("HIERRB_DENSE_LIMIT", raising=False)
    return tmp_path


@pytest.fixture(scope="session")
def thermal():
    """Thermal block on [0.02, 1]^2, 12 cells per side"""
    return build_model("thermal_block", cells=12)


@pytest.fixture(scope="session")
def thermal_narrow():
    """Thermal block on [0.5, 1]^2"""
    return build_model("thermal_block", cells=12, lower=(0.5, 0.5), upper=(1.0, 1.0))


@pytest.fixture(scope="session")
def helmholtz():
    """Helmholtz on [1, 5], 20 elements of degree 4"""
    return build_model("helmholtz", elements=20, degree=4)


@pytest.fixture(scope="session")
def thermal_train(thermal):
    return tensor_grid(thermal.domain, (9, 9))


@pytest.fixture(scope="session")
def helmholtz_train(helmholtz):
    return tensor_grid(helmholtz.domain, 41)


@pytest.fixture(scope="session")
def thermal_cache(thermal, thermal_train):
    return TruthCache(thermal, thermal_train)


@pytest.fixture(scope="session")
def helmholtz_cache(helmholtz, helmholtz_train):
    return TruthCache(helmholtz, helmholtz_train)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
