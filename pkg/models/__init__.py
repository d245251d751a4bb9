"""
SpiralSense - Models Package
----------------------------
Calibration models mapping permittivity to sensor response.
"""

from .power_law_model import CalibrationCurve, PowerLawModel

__all__ = ["CalibrationCurve", "PowerLawModel"]
