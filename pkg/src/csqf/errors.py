"""Exception hierarchy shared by all modules."""


class CsqfError(Exception):
    """Base class for every error raised by this package."""


class TopologyError(CsqfError, ValueError):
    pass


class DuplicateEdge(TopologyError):
    pass


class SelfLoop(TopologyError):
    pass


class NonPositiveDelay(TopologyError):
    pass


class DanglingNodeRef(TopologyError):
    pass


class Unreachable(TopologyError):
    pass


class ConfigError(CsqfError, ValueError):
    pass


class EmptyPeriodSet(ConfigError):
    pass


class NotDivisible(ConfigError):
    pass


class CycleTooLarge(ConfigError):
    pass


class CycleTooSmall(ConfigError):
    pass


class PeriodNotDivisible(ConfigError):
    pass


class QueueNumTooSmall(ConfigError):
    pass


class FlowError(CsqfError, ValueError):
    pass


class HopOutOfRange(CsqfError, IndexError):
    pass


class IndexOutOfRange(CsqfError, IndexError):
    pass


class NotScheduled(CsqfError):
    pass


class MalformedSolution(CsqfError, ValueError):
    pass


class InstanceTooLarge(CsqfError, ValueError):
    pass


class InfeasibleEdgeCount(CsqfError, ValueError):
    pass


class PathUnreachable(CsqfError):
    pass


class MalformedAggregate(CsqfError, ValueError):
    pass
