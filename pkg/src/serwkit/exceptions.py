"""Exception hierarchy shared by all serwkit modules."""


class SerwError(Exception):
    """Base class for every error raised by serwkit."""


class InputError(SerwError, ValueError):
    """Malformed, inconsistent or out-of-contract input."""


class DegenerateInputError(InputError):
    """Input is well-formed but degenerate (zero-norm rows, duplicate points...)."""


class ConfigurationError(InputError):
    """Incompatible combination of options."""


class SolverError(SerwError, RuntimeError):
    """A numerical solver failed to produce a result.

    Parameters
    ----------
    message : str
    iterations : int, optional
        Number of iterations (pivots, rounds...) performed before failing.
    """

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations
