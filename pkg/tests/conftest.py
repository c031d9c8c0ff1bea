import numpy as np
import pytest

from src.config import CANONICAL_CONFIG
from src.experiment_config import apply_overrides, parse_config_text, replace_config, validate_config
from src.solver import derive_grid


@pytest.fixture
def canonical_raw():
    return parse_config_text(CANONICAL_CONFIG, "<canonical>")


@pytest.fixture
def canonical(canonical_raw):
    return validate_config(canonical_raw)


@pytest.fixture
def coarse(canonical_raw):
    """Canonical experiment at h = 0.2: 512 nodes, 4000 Strang steps."""
    return validate_config(apply_overrides(canonical_raw, h=0.2))


@pytest.fixture
def coarse_free(coarse):
    """Same as coarse with the nonlinearity switched off."""
    return replace_config(coarse, alpha=coarse.alpha.with_amplitude(0.0))


@pytest.fixture
def coarse_grid(coarse):
    return derive_grid(coarse)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
