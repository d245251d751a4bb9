"""
SpiralSense — Error Types
-------------------------
Every failure the toolkit reports is one of these. Library code raises them;
only the command-line front end turns them into exit statuses:

1. InputValidationError  → exit 1 (bad geometry, config, files, preconditions)
2. ComputationError      → exit 2 (degenerate numerics, fits, calibration range)
"""


class SensorError(Exception):
    """Base class for all toolkit errors."""

    exit_status = 2


# ------------------------------------------------------------
# 1️⃣ Input validation (exit status 1)
# ------------------------------------------------------------
class InputValidationError(SensorError, ValueError):
    exit_status = 1


class GeometryError(InputValidationError):
    """A cell dimension or stack value breaks a formula's validity range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigError(InputValidationError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class TouchstoneParseError(InputValidationError):
    def __init__(self, line, message):
        self.line = line
        where = f"line {line}" if line is not None else "file"
        super().__init__(f"Touchstone {where}: {message}")


class CsvFormatError(InputValidationError):
    pass


class EllipticDomainError(InputValidationError):
    pass


class DegeneratePermittivityError(InputValidationError):
    pass


class UncoupledCellError(InputValidationError):
    pass


# ------------------------------------------------------------
# 2️⃣ Computation failures (exit status 2)
# ------------------------------------------------------------
class ComputationError(SensorError):
    exit_status = 2


class NumericalDegeneracyError(ComputationError):
    pass


class RankDeficiencyError(ComputationError):
    pass


class ExtractionError(ComputationError):
    pass


class OutOfCalibrationError(ComputationError):
    """Raised instead of extrapolating a calibration curve."""

    def __init__(self, message, nearest_bound):
        self.nearest_bound = nearest_bound
        super().__init__(f"{message} (nearest calibrated bound: ε = {nearest_bound:g})")


class UnresolvedBandError(ComputationError):
    """A band edge falls outside the sweep; `partial` keeps what was measured."""

    def __init__(self, message, partial):
        self.partial = partial
        super().__init__(message)
