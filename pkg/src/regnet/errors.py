"""Exception hierarchy.

Every domain failure derives from :class:`RegnetError` so the CLI can map
it to exit code 2; anything else is treated as an internal error.
"""


class RegnetError(Exception):
    """Base class for domain errors."""


# graphs
class DisconnectedGraph(RegnetError):
    pass


class NotATree(RegnetError):
    pass


class TopologyRejected(RegnetError):
    """Graph has overlapping loops (two fundamental loops share an edge)."""


# power flow
class UnbalancedInjection(RegnetError):
    pass


# solver
class NumericalFailure(RegnetError):
    pass


# abstraction
class InfeasibleBaseline(RegnetError):
    pass


class EpsilonOutOfRange(RegnetError):
    pass


class InfeasibleAtConfidence(RegnetError):
    pass


class InfeasibleOperatingPoint(RegnetError):
    pass


class RegulationOutOfRange(RegnetError):
    pass


class RampInfeasible(RegnetError):
    """The ramp limits cannot bridge the previous and requested regulation."""


# market
class ZeroCapacity(RegnetError):
    pass


class InsufficientCapacity(RegnetError):
    pass


class AllMileagesZero(RegnetError):
    pass


# coordination
class GraphHypothesisViolated(RegnetError):
    pass


class NonFiniteState(RegnetError):
    pass


# harness / io
class ParseError(RegnetError):
    pass


class ValueOutOfRange(RegnetError):
    pass


class MismatchedScenarios(RegnetError):
    pass
