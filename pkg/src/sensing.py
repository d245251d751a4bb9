"""
SpiralSense — Sensing Arithmetic
--------------------------------
1. Single-branch FDR and normalized sensitivity.
2. Differential (U/D spacing) FDR_p and sensitivity S_p.
3. Drift cancellation through the U/D difference.
4. Power-law calibration and permittivity inversion.

Frequencies are Hz, permittivities relative, sensitivities percent.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from models.power_law_model import CalibrationCurve, PowerLawModel
from src.errors import DegeneratePermittivityError, InputValidationError, OutOfCalibrationError

log = logging.getLogger(__name__)

BISECTION_RTOL = 1e-9
BISECTION_MAXITER = 200
DRIFT_RTOL = 1e-9

__all__ = [
    "BareReference", "BranchSensitivity", "CalibrationCurve", "DriftReport", "DriftScenario",
    "NotchPairObservation", "branch_fdrs", "differential_fdr", "differential_value",
    "drift_cancellation_report", "fdr_closed_form", "fdr_point", "fit_power_law", "forward_spacing", "frequency_slope",
    "invert_permittivity", "normalized_sensitivity", "permittivity_frequency", "proposed_sensitivity",
    "sensitivity_table",
]


# ------------------------------------------------------------
# 1️⃣ Domain types
# ------------------------------------------------------------
@dataclass(frozen=True)
class NotchPairObservation:
    """One measured U/D notch pair. Coincident notches (f_u = f_d) are allowed."""

    f_u: float
    f_d: float
    label: str = ""
    eps_ref: float = None
    timestamp: object = None

    def __post_init__(self):
        if not (np.isfinite(self.f_u) and np.isfinite(self.f_d)):
            raise InputValidationError(f"{self.label or 'observation'}: notch frequencies must be finite")
        if not 0 < self.f_u <= self.f_d:
            raise InputValidationError(
                f"{self.label or 'observation'}: need 0 < f_u ≤ f_d, got f_u={self.f_u:g}, f_d={self.f_d:g}")

    def shifted(self, kappa):
        return replace(self, f_u=self.f_u + kappa, f_d=self.f_d + kappa)


@dataclass(frozen=True)
class BareReference:
    f_bu: float
    f_bd: float
    eps_b: float = 1.0

    def __post_init__(self):
        if not 0 < self.f_bu < self.f_bd:
            raise InputValidationError(f"bare reference needs 0 < f_bu < f_bd, got {self.f_bu:g}, {self.f_bd:g}")
        if not self.eps_b >= 1:
            raise InputValidationError(f"bare permittivity must be ≥ 1, got {self.eps_b}")

    @property
    def delta_f_b(self):
        return self.f_bd - self.f_bu

    @classmethod
    def from_observation(cls, obs, eps_b=1.0):
        return cls(obs.f_u, obs.f_d, eps_b)


@dataclass(frozen=True)
class DriftScenario:
    """Common-mode shift κ (Hz) added to both notches."""

    kappa: float

    def __post_init__(self):
        if not np.isfinite(self.kappa):
            raise InputValidationError(f"drift must be finite, got {self.kappa}")

    def apply(self, obs):
        return obs.shifted(self.kappa)


@dataclass(frozen=True)
class BranchSensitivity:
    fdr_u: float
    fdr_d: float
    s_u: float
    s_d: float


@dataclass
class DriftReport:
    table: pd.DataFrame
    spread: float
    common_mode: float
    tolerance: float

    @property
    def passed(self):
        return self.spread <= self.tolerance


# ------------------------------------------------------------
# 2️⃣ Single-branch quantities
# ------------------------------------------------------------
def fdr_point(f_b, f_m, eps_b, eps_m):
    """Frequency shift per permittivity unit; positive when f falls as ε rises."""
    if eps_b == eps_m:
        raise DegeneratePermittivityError("FDR needs two different permittivities")
    return (f_b - f_m) / (eps_m - eps_b)


def permittivity_frequency(theta, eps_m):
    """f = 1/(2π√(θ·ε_M))."""
    if not theta > 0 or np.any(np.asarray(eps_m) <= 0):
        raise InputValidationError("θ and ε_M must be positive")
    return 1 / (2 * np.pi * np.sqrt(theta * np.asarray(eps_m, dtype=float)))


def frequency_slope(theta, eps_m):
    """Analytic ∂f/∂ε_M of permittivity_frequency (negative)."""
    if not theta > 0 or np.any(np.asarray(eps_m) <= 0):
        raise InputValidationError("θ and ε_M must be positive")
    eps_m = np.asarray(eps_m, dtype=float)
    return -1 / (4 * np.pi * eps_m * np.sqrt(theta * eps_m))


def fdr_closed_form(theta, eps_m):
    """Closed-form FDR 1/(2π·ε·√(θε)).

    This is twice |frequency_slope|; the factor is kept as published and the
    exact derivative is available from frequency_slope.
    """
    if not theta > 0 or np.any(np.asarray(eps_m) <= 0):
        raise InputValidationError("θ and ε_M must be positive")
    eps_m = np.asarray(eps_m, dtype=float)
    return 1 / (2 * np.pi * eps_m * np.sqrt(theta * eps_m))


def normalized_sensitivity(fdr, f_b):
    if not f_b > 0:
        raise InputValidationError(f"reference frequency must be positive, got {f_b}")
    return 100 * fdr / f_b


def branch_fdrs(obs_m, bare, eps_m):
    """Per-branch FDR and sensitivity; fdr_d − fdr_u equals the differential FDR_p."""
    fdr_u = fdr_point(bare.f_bu, obs_m.f_u, bare.eps_b, eps_m)
    fdr_d = fdr_point(bare.f_bd, obs_m.f_d, bare.eps_b, eps_m)
    return BranchSensitivity(fdr_u=fdr_u, fdr_d=fdr_d,
                             s_u=normalized_sensitivity(fdr_u, bare.f_bu),
                             s_d=normalized_sensitivity(fdr_d, bare.f_bd))


# ------------------------------------------------------------
# 3️⃣ Differential quantities
# ------------------------------------------------------------
def differential_value(obs):
    return obs.f_d - obs.f_u


def differential_fdr(obs_m, bare, eps_m):
    """(D_p, FDR_p). Both are reported as magnitudes."""
    if eps_m == bare.eps_b:
        raise DegeneratePermittivityError(f"ε_M equals the bare permittivity {bare.eps_b}")
    d_p = abs(differential_value(obs_m) - bare.delta_f_b)
    return d_p, d_p / abs(bare.eps_b - eps_m)


def proposed_sensitivity(fdr_p, delta_f_b):
    if not delta_f_b > 0:
        raise InputValidationError(f"Δf_B must be positive, got {delta_f_b}")
    return 100 * fdr_p / delta_f_b


def drift_cancellation_report(series, rtol=DRIFT_RTOL):
    """DIFF per observation, the DIFF spread, and the common-mode drift it removed."""
    series = list(series)
    if len(series) < 2:
        raise InputValidationError(f"drift report needs at least 2 observations, got {len(series)}")

    first = series[0]
    rows = []
    for obs in series:
        rows.append({
            "label": obs.label,
            "timestamp": obs.timestamp,
            "f_u_hz": obs.f_u,
            "f_d_hz": obs.f_d,
            "diff_hz": differential_value(obs),
            "common_mode_hz": ((obs.f_u - first.f_u) + (obs.f_d - first.f_d)) / 2,
        })
    table = pd.DataFrame(rows)
    spread = float(table["diff_hz"].max() - table["diff_hz"].min())
    tolerance = rtol * float(table["diff_hz"].abs().max())
    report = DriftReport(table=table, spread=spread, common_mode=float(table["common_mode_hz"].abs().max()),
                         tolerance=tolerance)
    if not report.passed:
        log.info("differential-mode residual of %.6g Hz survives cancellation", spread)
    return report


def sensitivity_table(observations, bare):
    """One row per reference-labelled observation; bare-state rows are skipped."""
    rows = []
    for obs in observations:
        if obs.eps_ref is None or obs.eps_ref == bare.eps_b:
            continue
        d_p, fdr_p = differential_fdr(obs, bare, obs.eps_ref)
        branch = branch_fdrs(obs, bare, obs.eps_ref)
        rows.append({
            "label": obs.label,
            "eps": obs.eps_ref,
            "f_u_hz": obs.f_u,
            "f_d_hz": obs.f_d,
            "diff_hz": differential_value(obs),
            "d_p_hz": d_p,
            "fdr_p_hz": fdr_p,
            "s_p_pct": proposed_sensitivity(fdr_p, bare.delta_f_b),
            "fdr_u_hz": branch.fdr_u,
            "fdr_d_hz": branch.fdr_d,
            "s_u_pct": branch.s_u,
            "s_d_pct": branch.s_d,
        })
    columns = ["label", "eps", "f_u_hz", "f_d_hz", "diff_hz", "d_p_hz", "fdr_p_hz", "s_p_pct",
               "fdr_u_hz", "fdr_d_hz", "s_u_pct", "s_d_pct"]
    return pd.DataFrame(rows, columns=columns).sort_values("eps", kind="stable").reset_index(drop=True)


# ------------------------------------------------------------
# 4️⃣ Calibration and inversion
# ------------------------------------------------------------
def fit_power_law(points, quantity="fdr_p", units="Hz", eps_b=1.0, delta_f_b=None):
    """Fit y = a·x^b to (x, y) pairs."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise InputValidationError("points must be a sequence of (x, y) pairs")
    curve = PowerLawModel(quantity=quantity, units=units).train(points[:, 0], points[:, 1], eps_b=eps_b,
                                                                delta_f_b=delta_f_b)
    if quantity.startswith("fdr") and curve.b >= 0:
        log.warning("FDR curve exponent b=%.4g is not negative; FDR should fall as ε rises", curve.b)
    return curve


def forward_spacing(curve, eps, eps_b=None):
    """D_p predicted at ε by an FDR_p curve: a·ε^b·|ε − ε_B|."""
    eps_b = curve.eps_b if eps_b is None else eps_b
    return curve.predict(eps) * abs(eps - eps_b)


def invert_permittivity(d_p, curve, eps_b=None):
    """Solve D_p = a·ε^b·(ε − ε_B) for ε inside the calibrated domain."""
    eps_b = curve.eps_b if eps_b is None else eps_b
    if not np.isfinite(d_p) or d_p < 0:
        raise InputValidationError(f"D_p must be a non-negative frequency, got {d_p}")
    if d_p == 0:
        return float(eps_b)

    lo, hi = curve.domain

    def residual(eps):
        return curve.predict(eps) * (eps - eps_b) - d_p

    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo == 0:
        return lo
    if r_hi == 0:
        return hi
    if r_lo * r_hi > 0:
        nearest = lo if abs(r_lo) < abs(r_hi) else hi
        log.warning("D_p = %.6g Hz has no root in the calibrated domain [%g, %g]", d_p, lo, hi)
        raise OutOfCalibrationError(f"D_p = {d_p / 1e6:.3f} MHz lies outside the calibrated range", nearest)
    eps = bisect(residual, lo, hi, xtol=1e-12, rtol=BISECTION_RTOL, maxiter=BISECTION_MAXITER)
    return float(eps)
