import numpy as np
import pytest

from seacache.cache import CacheGeometry


@pytest.fixture(scope="session")
def default_geometry():
    return CacheGeometry()


@pytest.fixture(scope="session")
def small_geometry():
    """512 lines, 16 ways x 32 sets: fast but structurally faithful."""
    return CacheGeometry().scaled(256)


@pytest.fixture(scope="session")
def tiny_geometry():
    """2 ways x 4 sets, single bank."""
    return CacheGeometry(line_size_bytes=64, total_size_bytes=64 * 8, num_ways=2, num_banks=1, address_bits=32)


@pytest.fixture()
def rng():
    return np.random.default_rng(0xC0FFEE)
