"""Exception hierarchy shared by all rlattract modules."""


class RLAttractError(Exception):
    """Base class for all library errors."""


class DomainError(RLAttractError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class AccuracyError(RLAttractError):
    """A requested tolerance could not be reached.

    Carries the best error estimate actually achieved in ``achieved``.
    """

    def __init__(self, message, achieved=None, value=None):
        super().__init__(message)
        self.achieved = achieved
        self.value = value


class ConvergenceError(RLAttractError):
    """An iterative scheme failed to converge.

    ``node_index`` is the time-step at which the failure occurred and
    ``last_defect`` the defect of the final iterate.
    """

    def __init__(self, message, node_index=None, last_defect=None):
        super().__init__(message)
        self.node_index = node_index
        self.last_defect = last_defect


class InvariantViolation(RLAttractError):
    """A quantity violated a bound that theory guarantees."""


class InputError(RLAttractError, ValueError):
    """Malformed user input (configuration files, CLI flags)."""


class ExprError(RLAttractError):
    """Base class for expression-language errors."""


class ExprSyntaxError(ExprError):
    """Syntax error while parsing an expression.

    ``offset`` is the byte offset of the offending token, ``expected``
    a tuple of token descriptions that would have been accepted.
    """

    def __init__(self, message, offset, expected=()):
        super().__init__(message)
        self.offset = offset
        self.expected = tuple(expected)


class ExprDomainError(ExprError, ArithmeticError):
    """Evaluation hit a domain fault (log of nonpositive, division by zero)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
