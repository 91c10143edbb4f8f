from pathlib import Path

import pytest

from nars.space import builtin_space_path, load_space

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def default_space():
    return load_space(builtin_space_path("fbnetv3_space"))


@pytest.fixture(scope="session")
def baseline_space():
    return load_space(builtin_space_path("fbnetv2_l3"))


@pytest.fixture(scope="session")
def toy_space():
    return load_space(FIXTURES / "toy_joint.yaml")
