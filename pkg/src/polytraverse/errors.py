"""Exception hierarchy shared by every module."""


class PolytraverseError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PolytraverseError, ValueError):
    """Arguments violate a documented precondition."""


class SolverStallError(PolytraverseError, RuntimeError):
    """The simplex kernel hit its iteration limit. Never means 'infeasible'."""


class UnsupportedConfigurationError(PolytraverseError):
    """The request is well formed but outside what the implementation handles."""


class ParseError(PolytraverseError, ValueError):
    """A network, region or property file could not be read."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
