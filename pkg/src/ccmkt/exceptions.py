class CcmktError(Exception):
    """Base class for all errors raised by ccmkt."""


class QpError(CcmktError):
    pass


class Infeasible(QpError):
    """No point satisfies the constraints."""


class DimensionLimit(QpError, ValueError):
    pass


class SingularKkt(QpError):
    """Every candidate KKT system was singular, even after regularization."""


class ProducerInfeasible(Infeasible):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"producer {index} has no feasible (p, alpha)")


class NotConverged(CcmktError):
    pass


class EmptyDataset(CcmktError, ValueError):
    pass


class OutOfSupport(CcmktError, ValueError):
    pass


class NoConvergence(CcmktError):
    """Beta maximum likelihood iterations did not settle."""


class LengthMismatch(CcmktError, ValueError):
    pass


class NominalOutOfBounds(CcmktError, ValueError):
    pass


class EmptyInput(CcmktError, ValueError):
    pass


class ConfigError(CcmktError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SemanticError(ConfigError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
