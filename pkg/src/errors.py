"""Exceptions raised by the library. The CLI maps each class to an exit code."""


class BellmanError(Exception):
    exit_code = 1


class DomainError(BellmanError, ValueError):
    """An argument lies outside the domain of the operation."""
    exit_code = 2


class RepresentationError(DomainError):
    """alpha has no finite base-m expansion of the allowed length."""


class DivergenceError(DomainError):
    """A geometric series of the extremal construction does not converge."""


class SurfaceError(BellmanError, ValueError):
    """omega_q(f^q/A) >= p/(p-1): the critical surface F(f, A) is infinite."""
    exit_code = 3


class DepthError(BellmanError, ValueError):
    """The tree is too shallow for the construction, or too large to allocate."""
    exit_code = 4


class ConvergenceError(BellmanError, RuntimeError):
    exit_code = 1


class InternalError(BellmanError, RuntimeError):
    """A quantity proven to lie in a range fell outside it (corrupted input)."""
    exit_code = 1
