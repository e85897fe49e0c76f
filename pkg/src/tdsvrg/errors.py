"""Exception hierarchy shared by all modules."""


class TDSVRGError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(TDSVRGError, ValueError):
    pass


class DimensionMismatch(InvalidInput):
    pass


class SingularMatrix(TDSVRGError, ArithmeticError):
    pass


class NotSymmetric(InvalidInput):
    pass


class NotStochastic(InvalidInput):
    pass


class NonUniqueStationary(TDSVRGError):
    """The chain has more than one stationary distribution (reducible)."""


class InvalidDiscount(InvalidInput):
    pass


class SingularA(SingularMatrix):
    """The TD matrix A is singular, so the fixed point does not exist."""


class NonPositiveLambda(TDSVRGError):
    """min eigenvalue of (A + A^T)/2 is not positive."""


class NotMixing(TDSVRGError):
    pass


class HorizonExceeded(TDSVRGError):
    pass


class EmptySource(InvalidInput):
    pass


class MissingOracle(InvalidInput):
    pass


class MissingInput(InvalidInput):
    pass


class DivergenceDetected(TDSVRGError, FloatingPointError):
    def __init__(self, step, norm):
        super().__init__(f"iterate norm {norm:.3e} exceeded divergence guard at step {step}")
        self.step = step
        self.norm = norm


class InvalidRadius(InvalidInput):
    pass


class SingularC(SingularMatrix):
    pass


class InsufficientData(InvalidInput):
    pass


class MisalignedTraces(InvalidInput):
    pass


class ConfigError(InvalidInput):
    pass
