"""Exception types shared across the package."""


class NnmpcError(Exception):
    """Base class for domain errors (maps to CLI exit code 1)."""


class ConfigError(NnmpcError):
    """Invalid configuration file or field (maps to CLI exit code 2)."""


class ConvergenceError(NnmpcError):
    """An iterative routine failed to converge within its budget."""


class InfeasibleError(NnmpcError):
    """The MPC quadratic program has no feasible point for this state."""

    def __init__(self, message, state=None, max_violation=None):
        super().__init__(message)
        self.state = state
        self.max_violation = max_violation


class TrainingError(NnmpcError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class NumericsError(NnmpcError):
    """A numerical operation produced non-finite intermediate values."""
