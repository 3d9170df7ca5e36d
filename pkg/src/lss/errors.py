"""Exception types raised by the library."""

import numpy as np


class LSSError(Exception):
    """Base class for all library errors."""


class DimensionError(LSSError, ValueError):
    """Input has the wrong shape or player split."""


class ConfigError(LSSError, ValueError):
    """A game file, schedule or CLI option is malformed."""


class NumericalError(LSSError, ArithmeticError):
    """A derivative or eigen-solve produced a non-finite value."""

    def __init__(self, message, z=None, index=None):
        super().__init__(message)
        self.z = None if z is None else np.array(z, dtype=float)
        self.index = index


class SingularityError(NumericalError):
    """The regularised least-squares system could not be solved."""

    def __init__(self, message, z=None, min_singular_value=None):
        super().__init__(message, z=z)
        self.min_singular_value = min_singular_value


class DivergenceError(LSSError, RuntimeError):
    """An iteration left the finite region; carries the last finite state."""

    def __init__(self, message, n, last_state, trajectory=None):
        super().__init__(message)
        self.n = n
        self.last_state = last_state
        self.trajectory = trajectory
