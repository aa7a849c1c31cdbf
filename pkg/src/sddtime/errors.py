"""Exception types raised by the solvers and checks."""


class SddError(Exception):
    """Base class for all errors raised by this package."""


class OutOfDomain(SddError, ValueError):
    pass


class BracketInvalid(SddError, ValueError):
    pass


class NoConvergence(SddError, RuntimeError):
    pass


class InvalidParams(SddError, ValueError):
    pass


class InvalidH1(SddError, ValueError):
    pass


class CertificateRequired(SddError):
    """Raised when an operation needs ``2*mu*eta_bar < 1`` and it does not hold."""


class StepTooLarge(SddError, ValueError):
    pass


class StepMismatch(SddError, ValueError):
    pass


class IterationDiverged(SddError, RuntimeError):
    pass


class HorizonTooLong(SddError, ValueError):
    pass


class HorizonMismatch(SddError, ValueError):
    pass


class SolutionTooShort(SddError, ValueError):
    pass


class EtaZero(SddError, ValueError):
    pass


class NonMonotone(SddError, ValueError):
    pass


class DenominatorVanished(SddError, ArithmeticError):
    pass


class NotDecaying(SddError, ValueError):
    pass
