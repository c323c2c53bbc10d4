"""Finite element solver for the subdiffusion equation u_t^alpha - Lap u = f.

The solver splits the solution into time-independent singular parts (elliptic
solves, optionally with fundamental-solution corrections or graded meshes) and
a spatially smooth part advanced by BDF convolution quadrature in time.
"""

from subfem.special import MlParams, gamma, mittag_leffler
from subfem.cq import BdfGen, CqWeights, bdf_gen, cq_weights
from subfem.mesh import (
    GradingSpec,
    TriMesh,
    graded_refine,
    red_refine,
    structured_square,
)
from subfem.fem import FeFunction, FeSpace, build_space
from subfem.splitting import FracProblem, SplitSolution

__version__ = "0.1.0"

__all__ = [
    "MlParams", "gamma", "mittag_leffler",
    "BdfGen", "CqWeights", "bdf_gen", "cq_weights",
    "GradingSpec", "TriMesh", "graded_refine", "red_refine",
    "structured_square",
    "FeFunction", "FeSpace", "build_space",
    "FracProblem", "SplitSolution",
]
