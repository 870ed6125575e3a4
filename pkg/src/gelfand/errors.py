"""Exception hierarchy shared by all gelfand modules."""


class GelfandError(Exception):
    """Base class for every error raised by the package."""


class DomainError(GelfandError):
    pass


class OutsideDomainError(DomainError):
    pass


class CoincidentPointsError(DomainError):
    pass


class StepUnderflowError(DomainError):
    pass


class MeshError(GelfandError):
    pass


class BudgetExceededError(MeshError):
    pass


class CollisionError(GelfandError):
    """A configuration violates the pairwise or boundary clearance."""


class ConvergenceError(GelfandError):
    pass


class NewtonDivergenceError(ConvergenceError):
    pass


class SingularJacobianError(ConvergenceError):
    pass


class AnsatzFailureError(ConvergenceError):
    pass


class OverlapError(GelfandError):
    pass


class EigensolverBreakdownError(GelfandError):
    pass


class KTooLargeError(GelfandError):
    pass


class InsufficientSamplesError(GelfandError):
    pass


class MismatchedBranchError(GelfandError):
    pass


class GeometryError(GelfandError):
    pass


class ZeroDiagonalError(GelfandError):
    pass


class ClearanceViolationError(GelfandError):
    pass


class ConfigError(GelfandError):
    pass
