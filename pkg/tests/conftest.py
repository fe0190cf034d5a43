import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stokesdarcy.grid import GridSpec, build_grid
from stokesdarcy.mms import mms_sources
from stokesdarcy.system import PhysicalParams, assemble_coupled

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

BENCH = PhysicalParams.isotropic(mu=1e-3, k=1e-2, alpha=1.0)


@functools.lru_cache(maxsize=None)
def coupled(h: float, condition: str = "BJS", mms: bool = False, params: PhysicalParams = BENCH):
    """Cached small benchmark systems (blocks are read-only after assembly)."""
    grid = build_grid(GridSpec.uniform(h), uniform=True)
    return assemble_coupled(grid, params, mms_sources(params) if mms else None, condition)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
