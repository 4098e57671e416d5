import functools

import pytest

from ladderwalk.meander import meander_fixed_point
from ladderwalk.stable import StableParams


@functools.lru_cache(maxsize=None)
def solved_meander(alpha: float, beta: float, initial: str = "shape"):
    return meander_fixed_point(StableParams.canonical(alpha, beta), initial=initial)


@pytest.fixture(scope="session")
def meander_solution():
    """Fixed-point meander densities shared by every test module."""
    return solved_meander
