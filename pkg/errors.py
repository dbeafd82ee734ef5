"""Exception and warning types shared by all optocasimir modules."""


class OptoCasimirError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(OptoCasimirError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class DomainError(OptoCasimirError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(OptoCasimirError):
    pass


class GeometryError(OptoCasimirError, ValueError):
    pass


class ConvergenceError(OptoCasimirError):
    def __init__(self, message, partial=None, last_term=None, terms=None, z=None, points=None):
        self.partial = partial
        self.last_term = last_term
        self.terms = terms
        self.z = z
        # (z, value) pairs completed before the failure, when known
        self.points = points or []
        super().__init__(message)

    def __reduce__(self):
        return (self.__class__, (self.args[0], self.partial, self.last_term, self.terms, self.z, self.points))


class FitError(OptoCasimirError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)

    def __reduce__(self):
        return (self.__class__, (self.args[0], self.diagnostics))


class StatisticsError(OptoCasimirError, ValueError):
    pass


class GridParseError(OptoCasimirError, ValueError):
    def __init__(self, message, token=None):
        self.token = token
        super().__init__(message if token is None else f"{message}: {token!r}")


class PfaValidityWarning(UserWarning):
    """Separation is not small compared with the sphere radius."""


class FlatParabolaWarning(UserWarning):
    """Quadratic coefficient too small to locate the vertex reliably."""
