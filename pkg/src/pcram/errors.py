"""Exception hierarchy shared by every module of the package."""


class PcramError(Exception):
    """Base class for all errors raised by pcram."""


class ParameterError(PcramError, ValueError):
    """A builder or algorithm received parameters outside its domain."""


class ValidationError(PcramError):
    """A circuit is malformed, or not synchronous where that is required."""


class ParseError(PcramError):
    """Malformed netlist or program text."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InputArityError(PcramError, ValueError):
    """Input vector length does not match the circuit order."""


class SpecError(PcramError):
    """An algorithm description (DP or recursive spec) is inconsistent."""


class TrapError(PcramError):
    """The reference RAM interpreter hit an invalid indirect address."""


class ModelViolation(PcramError):
    """The running program broke a rule of the machine model."""


class BudgetError(ModelViolation):
    def __init__(self, resource, used, limit):
        super().__init__(f"circuit table exceeds {resource} budget: {used} > {limit}")
        self.resource = resource
        self.used = used
        self.limit = limit


class PhaseError(ModelViolation):
    """Circuit registration attempted after the table was frozen (or run before)."""


class AlignmentError(ModelViolation):
    pass


class ConcurrentWriteError(ModelViolation):
    pass


class OverlapError(ModelViolation):
    pass


class MemoryAccessError(ModelViolation, IndexError):
    pass


class CircuitIndexError(ModelViolation, IndexError):
    pass
