"""Exception types shared across the package."""


class GraphMatchingError(Exception):
    """Base class for all solver errors."""


class InstanceSyntaxError(GraphMatchingError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class InfeasibleAssignment(GraphMatchingError):
    pass


class NotBijective(GraphMatchingError):
    pass


class Infeasible(GraphMatchingError):
    """No feasible flow / matching exists."""


class FlowInfeasible(Infeasible):
    pass


class AllForbiddenRow(GraphMatchingError):
    pass


class NoFeasibleLabel(GraphMatchingError):
    pass


class DuplicateTriplet(GraphMatchingError):
    pass


class TooLarge(GraphMatchingError):
    pass
