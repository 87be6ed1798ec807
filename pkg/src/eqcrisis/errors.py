"""Exception hierarchy shared by all modules."""


class EqCrisisError(Exception):
    """Base class; the CLI maps subclasses of this to exit code 2."""


class InputError(EqCrisisError, ValueError):
    """Malformed economy, family or configuration input."""


class NoInteriorMaximum(EqCrisisError):
    """The utility maximizer leaves the open positive orthant."""


class NoConvergence(EqCrisisError):
    pass


class SingularJacobian(EqCrisisError):
    pass


class StepUnderflow(EqCrisisError):
    pass


class RegularValueViolation(EqCrisisError):
    pass


class BoundaryZero(EqCrisisError):
    pass


class Irregular(EqCrisisError):
    pass


class NotIsolated(EqCrisisError):
    pass


class DegenerateEndpoints(EqCrisisError):
    pass


class CriticalEconomy(EqCrisisError):
    pass


class ContinuationBreakdown(EqCrisisError):
    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


class HypothesisViolated(EqCrisisError):
    pass


class PreconditionError(EqCrisisError, ValueError):
    pass


class StepCollapse(EqCrisisError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class CertificationMissing(EqCrisisError):
    pass
