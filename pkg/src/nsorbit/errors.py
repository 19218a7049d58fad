"""Exception hierarchy shared by all modules."""


class NSOrbitError(Exception):
    """Base class for every error raised by the package."""


# rigor
class DivisionByZeroInterval(NSOrbitError, ZeroDivisionError):
    """The divisor interval contains zero."""


class Overflow(NSOrbitError, OverflowError):
    """An interval endpoint left the binary64 range."""


class DomainError(NSOrbitError, ValueError):
    """Argument outside the domain of the function (e.g. sqrt of a negative)."""


# vorticity / validator input checks
class ForcingInvalid(NSOrbitError, ValueError):
    """Forcing has time-dependent or spatial-mean modes."""


class ForcingSupport(NSOrbitError, ValueError):
    """Forcing is not supported inside S + S."""


class SchemeInvalid(NSOrbitError, ValueError):
    """Truncation parameters are inconsistent."""


class NotActually2D(NSOrbitError, ValueError):
    """The essentially-2D flag is set but the data are not 2D."""


# symmetry
class NonFiniteClosure(NSOrbitError, RuntimeError):
    """Group closure exceeded the configured element cap."""


class UncataloguedMode(NSOrbitError, KeyError):
    """A mode is not covered by the orbit catalogue."""


# linear algebra / solver
class SingularFiniteBlock(NSOrbitError, ArithmeticError):
    """The finite block could not be inverted."""


class SingularJacobian(NSOrbitError, ArithmeticError):
    """Newton step failed because the Jacobian is singular."""


class NoConvergence(NSOrbitError, RuntimeError):
    """Newton iteration did not reach the tolerance."""


# postprocess
class NotValidated(NSOrbitError, RuntimeError):
    """Operation requires a successful validation report."""


class NotCurlFree(NSOrbitError, ValueError):
    """Vector field fails the curl-free consistency check."""
