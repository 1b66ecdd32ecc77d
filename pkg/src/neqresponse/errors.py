"""Exception hierarchy shared by all modules.

Two branches matter to callers: ``ValidationError`` (bad inputs, rejected
models, domain violations) and ``NumericalError`` (a solver, quadrature or
iteration failed to reach its tolerance). The CLI maps them to exit codes
2 and 3 respectively.
"""


class NeqResponseError(Exception):
    pass


class ValidationError(NeqResponseError):
    pass


class NumericalError(NeqResponseError):
    pass


# -- construction / input validation ----------------------------------------

class NegativeRate(ValidationError):
    pass


class DuplicateEdge(ValidationError):
    pass


class NotIrreducible(ValidationError):
    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = components or []


class ModelTooLarge(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonFiniteTime(ValidationError):
    pass


class TimeOrder(ValidationError):
    pass


class ZeroProbabilityState(ValidationError):
    pass


class ZeroMassState(ValidationError):
    pass


class ScheduleDomain(ValidationError):
    pass


class UnboundedSchedule(ValidationError):
    pass


class MissingReverseEdge(ValidationError):
    pass


class NotStationary(ValidationError):
    pass


class AsymmetricPsi(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


# -- numerical failures ------------------------------------------------------

class SolverFailure(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class StepSizeUnderflow(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class InfiniteRate(NumericalError):
    pass
