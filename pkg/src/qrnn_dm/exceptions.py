"""Exception types raised across the package."""


class QRNNError(Exception):
    """Base class for package errors."""


class ShapeError(QRNNError, ValueError):
    pass


class InvalidShiftError(QRNNError, ValueError):
    pass


class DegenerateDistributionError(QRNNError, RuntimeError):
    pass


class EmptyDatasetError(QRNNError, ValueError):
    pass


class SpecError(QRNNError, ValueError):
    pass


class IntegrationDivergenceError(QRNNError, ArithmeticError):
    pass


class WindowingError(QRNNError, ValueError):
    pass


class InitializationError(QRNNError, ValueError):
    pass


class TrainingFailureError(QRNNError, RuntimeError):
    """All restarts failed. ``reports`` holds whatever partial results exist."""

    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or []
