"""
SpiralSense - Power-Law Calibration Model
-----------------------------------------
Fits y = a·x^b to (permittivity, quantity) pairs.

1. Seed (a, b) with a straight-line fit in log–log space.
2. Refine with nonlinear least squares in the original y-space.
3. Report r² in y-space.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from src.errors import InputValidationError, RankDeficiencyError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationCurve:
    """y = a·x^b, valid on the permittivity interval `domain`."""

    a: float
    b: float
    r2: float
    domain: tuple
    quantity: str = "fdr_p"
    units: str = "Hz"
    eps_b: float = 1.0
    delta_f_b: float = None
    n_points: int = 0

    def __post_init__(self):
        lo, hi = self.domain
        if not lo <= hi:
            raise InputValidationError(f"calibration domain is empty: [{lo}, {hi}]")
        if self.r2 > 1 + 1e-12:
            raise InputValidationError(f"r² cannot exceed 1, got {self.r2}")
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        y = self.a * x ** self.b
        return float(y) if y.ndim == 0 else y

    def covers(self, x):
        lo, hi = self.domain
        return lo <= x <= hi


def _power_law(x, a, b):
    return a * np.power(x, b)


class PowerLawModel:
    """Least-squares power-law fitter for calibration curves."""

    def __init__(self, quantity="fdr_p", units="Hz"):
        self.quantity = quantity
        self.units = units
        self.curve = None

    # ------------------------------------------------------------
    # 🧩 1️⃣ Input checks
    # ------------------------------------------------------------
    @staticmethod
    def _validate(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise InputValidationError("x and y must be 1-D arrays of equal length")
        if x.size < 3:
            raise InputValidationError(f"power-law fit needs at least 3 points, got {x.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputValidationError("fit data contains non-finite values")
        if np.any(x <= 0) or np.any(y <= 0):
            raise InputValidationError("power-law fit needs strictly positive x and y")
        if np.all(x == x[0]):
            raise RankDeficiencyError("all abscissae are equal; the exponent is undetermined")
        return x, y

    # ------------------------------------------------------------
    # 🧠 2️⃣ Training
    # ------------------------------------------------------------
    def train(self, x, y, eps_b=1.0, delta_f_b=None):
        x, y = self._validate(x, y)

        seed = LinearRegression().fit(np.log(x).reshape(-1, 1), np.log(y))
        b0 = float(seed.coef_[0])
        a0 = float(np.exp(seed.intercept_))

        # Fit on y scaled to order one; a is rescaled afterwards.
        scale = float(np.median(y))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            try:
                (a_s, b), _ = curve_fit(_power_law, x, y / scale, p0=(a0 / scale, b0), maxfev=10000)
            except RuntimeError as err:
                raise RankDeficiencyError(f"power-law refinement did not converge: {err}") from err
        a = float(a_s * scale)
        r2 = float(r2_score(y, _power_law(x, a, b)))
        log.debug("power-law seed a=%.6g b=%.6g → fit a=%.6g b=%.6g r²=%.6f", a0, b0, a, b, r2)

        self.curve = CalibrationCurve(a=a, b=float(b), r2=r2, domain=(float(x.min()), float(x.max())),
                                      quantity=self.quantity, units=self.units, eps_b=eps_b,
                                      delta_f_b=delta_f_b, n_points=int(x.size))
        return self.curve

    # ------------------------------------------------------------
    # 🔮 3️⃣ Prediction
    # ------------------------------------------------------------
    def predict(self, x):
        if self.curve is None:
            raise InputValidationError("model not trained yet")
        return self.curve.predict(x)
