import numpy as np
import pytest

from regularity.geometry import build_quadrature
from regularity.profiles import builtin_profiles
from shared.logger import configure_logging

configure_logging("WARNING")

# --- Fixtures ---


@pytest.fixture(scope="session")
def quad2():
    return build_quadrature(2, 16)


@pytest.fixture(scope="session")
def quad3():
    return build_quadrature(3, 16)


@pytest.fixture(scope="session")
def quad4():
    return build_quadrature(4, 12)


@pytest.fixture(scope="session")
def profiles():
    return builtin_profiles()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "run"
    path.mkdir()
    return path
