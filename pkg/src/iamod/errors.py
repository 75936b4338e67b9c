"""Exception hierarchy shared by all modules."""


class IAMoDError(Exception):
    """Base class for every error raised by this package."""


# network construction
class NetworkError(IAMoDError):
    pass


class LayerViolation(NetworkError):
    pass


class MissingCapacity(NetworkError):
    pass


class NonPositiveTime(NetworkError):
    pass


class NonPositiveInput(NetworkError):
    pass


class BadSpec(NetworkError):
    pass


# scenario I/O
class SchemaError(IAMoDError):
    pass


class UnitError(SchemaError):
    pass


# model assembly
class EmptyDemand(IAMoDError):
    pass


class OverflowRisk(IAMoDError):
    pass


class DimensionMismatch(IAMoDError):
    pass


# solver
class NumericalBreakdown(IAMoDError):
    pass


class IterationLimit(IAMoDError):
    pass


# pricing / equilibrium
class NotOptimal(IAMoDError):
    pass


class MismatchedProvenance(IAMoDError):
    pass


class UnboundedCustomerProblem(IAMoDError):
    pass


class InfeasibleRebalancing(IAMoDError):
    pass


class IsolatedNode(NetworkError):
    pass
