"""Exception hierarchy shared by all modules."""


class PulseQMLError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(PulseQMLError, ValueError):
    pass


class DegenerateObservableError(PulseQMLError, ValueError):
    pass


class NumericalIntegrityError(PulseQMLError, ArithmeticError):
    pass


class BudgetExceededError(PulseQMLError):
    def __init__(self, message, required=None, budget=None):
        super().__init__(message)
        self.required = required
        self.budget = budget


class RangeViolationError(PulseQMLError, ValueError):
    pass


class UnsupportedModelError(PulseQMLError):
    pass
