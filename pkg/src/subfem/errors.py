"""Exception types shared across the package."""


class SubfemError(Exception):
    """Base class for all package errors."""


class PoleArgumentError(SubfemError):
    """Gamma evaluated at a non-positive integer."""


class OverflowRangeError(SubfemError):
    """Result exceeds the representable double range."""


class DomainError(SubfemError):
    """Argument outside the supported domain of a special function."""


class UnsupportedOrderError(SubfemError):
    """BDF order outside 1..6."""


class BranchCutError(SubfemError):
    """A fractional power of the generating function would cross the
    negative real axis; the principal branch is not trustworthy there."""


class NotConvergedError(SubfemError):
    """Iterative solver failed to reach the requested residual."""

    def __init__(self, report, msg="linear solve did not converge"):
        super().__init__(f"{msg}: {report}")
        self.report = report


class UnsupportedDegreeError(SubfemError):
    """Lagrange degree outside 1..5."""


class MeshBudgetError(SubfemError):
    """Refinement would exceed the triangle budget."""


class MshParseError(SubfemError):
    """Malformed MSH file; carries a 1-based line number."""

    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line


class NonPlanarMeshError(SubfemError):
    """MSH nodes have |z| above tolerance."""


class NonConformingMeshError(SubfemError):
    """Edge-use counts not in {1, 2}, or hanging nodes present."""


class PointOutsideDomainError(SubfemError):
    """Point load location is not inside the triangulated domain."""


class SegmentOutsideDomainError(SubfemError):
    """Line load segment is not contained in the triangulated domain."""


class NonNestedMeshError(SubfemError):
    """Cross-mesh evaluation requested for meshes without a lineage chain."""


class StrategyMismatchError(SubfemError):
    """Singular-part strategy incompatible with the initial-data kind."""


class SingularAtZeroError(SubfemError):
    """Recombination requested at t = 0 where t^(-j*alpha) blows up."""


class QuadratureFailureError(SubfemError):
    """Adaptive quadrature failed to reach its tolerance."""


class UnsupportedDomainError(SubfemError):
    """Operation requires the unit-square domain."""
