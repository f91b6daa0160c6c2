"""Exception and warning types raised by metricreg."""


class MetricRegError(Exception):
    """Base class for all metricreg errors.

    ``stage`` names the pipeline step that raised it, when known.
    """

    stage = None

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ValidationError(MetricRegError, ValueError):
    """Input failed validation."""


class DimensionMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class InvalidParams(ValidationError):
    pass


class InvalidWeight(ValidationError):
    pass


class DegenerateShape(ValidationError):
    """A landmark configuration has zero centroid size."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class PoleMismatch(ValidationError):
    pass


class AllZeroCurves(ValidationError):
    pass


class ZeroDenominator(ValidationError):
    pass


class ZeroTSS(ValidationError):
    pass


class AllEigenvaluesNonpositive(ValidationError):
    """The doubly-centered matrix has no positive eigenvalue (constant data)."""


class NoFeasibleSolution(MetricRegError):
    """Backscoring could not find an object with the requested score."""

    def __init__(self, message, target=None, residual=None):
        super().__init__(message)
        self.target = target
        self.residual = residual


class NoConvergence(MetricRegError):
    """An iterative routine hit its iteration cap.

    ``last`` holds the final iterate and ``residual`` the last change.
    """

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class NonEuclideanWarning(UserWarning):
    pass


class RankDeficientWarning(UserWarning):
    pass


class ConstantMarkerWarning(UserWarning):
    pass


class ExcludedReplicateWarning(UserWarning):
    pass
