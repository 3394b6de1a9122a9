"""Exception types shared across the package."""


class BlassoError(Exception):
    """Base class for all package-specific errors."""


class DomainError(BlassoError):
    """A position lies outside the model's parameter domain."""


class DegenerateFeatureError(BlassoError):
    """Feature normalization is undefined (zero feature vector)."""


class SingularMatrixError(BlassoError):
    """The curvature system is numerically singular.

    Carries a condition-number estimate; raised when the divergence
    formula would divide by an eigenvalue that genuinely matters.
    """

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class DegenerateCertificateError(BlassoError):
    """The certificate cannot be classified (touch points not isolated)."""


class OracleFailureError(BlassoError):
    """An inner solve of a divergence oracle failed to converge."""


class ConfigError(BlassoError):
    """A run configuration is malformed; the message names the field."""
