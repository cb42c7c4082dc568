"""Exception hierarchy shared across the package."""


class CalibraxError(Exception):
    """Base class for all calibrax-specific errors."""


class DataError(CalibraxError):
    """Malformed input data: bad CSV rows, schema mismatches, empty sets."""


class NumericError(CalibraxError):
    """A numeric routine failed to converge or produced an invalid result."""


class TrainingError(CalibraxError):
    """Model training diverged (NaN/inf loss) or could not proceed."""


class ProtocolError(CalibraxError):
    """An online forecaster was driven out of its predict/update order."""
