"""Shared fixtures: cached mesh chains and FE spaces.

Space assembly at n=64, r=3 costs about a second; the study-style tests
reuse one nested chain through these session caches.
"""

import functools

import numpy as np
import pytest

from subfem.fem import build_space
from subfem.mesh import red_refine, structured_square

DIRAC_X0 = (0.5 + 1e-4, 0.5 + 1e-4)
SEGMENT = ((0.25, 0.5), (0.75, 0.5))


@functools.lru_cache(maxsize=None)
def square_chain(n0: int, levels: int):
    """Nested red-refined meshes starting at structured_square(n0)."""
    meshes = [structured_square(n0)]
    for _ in range(levels - 1):
        meshes.append(red_refine(meshes[-1]))
    return tuple(meshes)


@functools.lru_cache(maxsize=None)
def chain_space(n0: int, idx: int, levels: int, r: int):
    return build_space(square_chain(n0, levels)[idx], r)


def spaces_for(ns, r, n0=8):
    """FE spaces on the nested chain hit by most studies (n0 = 8)."""
    levels = int(np.log2(max(ns) / n0)) + 1
    return {n: chain_space(n0, int(np.log2(n / n0)), levels, r) for n in ns}


@pytest.fixture(scope="session")
def dirac_x0():
    return DIRAC_X0


@pytest.fixture(scope="session")
def segment():
    return SEGMENT
