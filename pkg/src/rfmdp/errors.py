"""Exception hierarchy.

Every exception carries an ``exit_code`` so the command-line front end can
map failures onto stable process exit statuses.
"""


class RfmdpError(Exception):
    exit_code = 1
    code = "error"


class ConfigError(RfmdpError, ValueError):
    """Bad configuration: unknown backend, backend/set mismatch, bad flags."""

    exit_code = 2
    code = "config"


class ModelError(RfmdpError, ValueError):
    exit_code = 3
    code = "model"


class StateRangeError(ModelError, IndexError):
    """A factor value, state index or action index is out of range."""


class ValidationError(ModelError):
    """A model failed validation; ``violations`` holds the full report."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            lines += f"; ... ({more} more)"
        super().__init__(f"invalid model: {lines}")


class DomainError(RfmdpError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 2
    code = "domain"


class EmptySetError(DomainError):
    """A box does not intersect the probability simplex."""


class NoDataError(DomainError):
    """A confidence interval was requested from zero trials."""


class SolverError(RfmdpError, ArithmeticError):
    exit_code = 4
    code = "solver"


class DivergenceError(SolverError):
    pass


class CapExceededError(RfmdpError):
    """A size cap (states, vertices, LP variables) was exceeded."""

    exit_code = 5
    code = "cap"

    def __init__(self, message, required=None, cap=None):
        super().__init__(message)
        self.required = required
        self.cap = cap
