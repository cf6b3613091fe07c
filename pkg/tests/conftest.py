import pathlib

import numpy as np
import pytest

from minwork.model import ServerSpec

ROOT = pathlib.Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def spec5() -> ServerSpec:
    """The five-state running example used throughout."""
    return ServerSpec(
        n_s=5,
        mu=np.array([0.01, 0.5, 0.3, 0.5, 0.05]),
        rho_up=np.array([0.2, 0.15, 0.1, 0.05, 0.0]),
        rho_down=np.array([0.0, 0.05, 0.1, 0.15, 0.2]),
    )


@pytest.fixture(scope="session")
def spec2() -> ServerSpec:
    """A two-state instance small enough to check by hand."""
    return ServerSpec(
        n_s=2,
        mu=np.array([0.75, 0.25]),
        rho_up=np.array([0.3, 0.0]),
        rho_down=np.array([0.0, 0.4]),
    )


@pytest.fixture(scope="session")
def config_path() -> pathlib.Path:
    return ROOT / "configs" / "example1.yaml"
