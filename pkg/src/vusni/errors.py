"""Exception hierarchy.

Data problems, numerical-fitting problems and estimation problems are kept
in separate branches so the CLI can map them to distinct exit codes.
"""


class VusniError(Exception):
    """Base class for all library errors."""


# data ingestion / validation -------------------------------------------------

class DataError(VusniError):
    """Invalid input data."""


class MalformedRow(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class VerifiedLabelMismatch(DataError):
    """Disease label present without verification, or missing despite it."""


class NonFiniteValue(DataError):
    """NaN or infinity in a numeric field."""


class ZeroVariance(DataError):
    """A column to be standardized has no variation."""


# joint model -----------------------------------------------------------------

class InvalidDiseasePattern(VusniError):
    """(d1, d2) pair outside {(1,0), (0,1), (0,0)}."""


class DegenerateConditional(VusniError):
    """All (1 - pi) * rho products underflowed; conditional undefined."""


# maximum likelihood ----------------------------------------------------------

class FitError(VusniError):
    """Likelihood maximization failed."""


class NonConvergence(FitError):
    """No restart reached the gradient tolerance within max_iter."""


class NonIdentifiable(FitError):
    """Observed information numerically singular at the optimum."""

    def __init__(self, message: str, xi_hat=None, cond: float = float("nan")):
        super().__init__(message)
        self.xi_hat = xi_hat
        self.cond = cond


class InsufficientData(FitError):
    """Too few subjects, or verified classes / unverified subjects missing."""


# estimators ------------------------------------------------------------------

class EstimationError(VusniError):
    """VUS estimator could not be evaluated."""


class EmptyClass(EstimationError):
    """A disease class has no subjects."""


class ExtremeWeight(EstimationError):
    """A verified subject has verification probability below the floor."""


class DenominatorUnderflow(EstimationError):
    """Triple product sum in the estimator denominator is not positive."""


# inference -------------------------------------------------------------------

class SingularInformation(VusniError):
    """Observed information cannot be inverted for the variance estimate."""


# simulation ------------------------------------------------------------------

class AggregateConvergenceFailure(VusniError):
    """More than the tolerated share of Monte Carlo replications failed."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
