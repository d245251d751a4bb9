"""
SpiralSense — Equivalent-Circuit Synthesis
------------------------------------------
1. Describes one resonator cell (spiral + extended coupling arm) and its
   substrate/MUT stack.
2. Synthesizes the lumped elements L_SP, C_SP, L_L, C_L, M and the series
   composites L_S, C_S.
3. Transforms a cell into the parallel tank it presents to the main line.

Unit policy: geometry is given in mm (the way cell drawings are dimensioned);
every returned value is SI (H, F, F/m, Hz).

The arm-inductance formula is the classic straight-wire expression. With
lengths in mm it evaluates to nanohenries, which is how it is used here.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants
from scipy.special import ellipk

from src.errors import EllipticDomainError, GeometryError, InputValidationError, UncoupledCellError

log = logging.getLogger(__name__)

MM = 1e-3
MM2 = 1e-6
NH = 1e-9

# Tank inductances the default mutual inductance reproduces (bare scenario).
DEFAULT_TANK_L_U = 9.15e-12
DEFAULT_TANK_L_D = 5.37e-12

SPIRAL_GAP_CHOICES = ("coupling", "turn_spacing")


# ------------------------------------------------------------
# 1️⃣ Domain types
# ------------------------------------------------------------
@dataclass(frozen=True)
class CellGeometry:
    """Cell dimensions in mm; n is the spiral turn count."""

    x: float
    y: float
    t: float
    a: float  # inter-turn spacing, carried as metadata unless chosen as the spiral gap
    b: float
    v: float
    n: int
    g: float

    def __post_init__(self):
        for name in ("x", "y", "t", "a", "b", "v", "g"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise GeometryError(name.upper(), f"must be a positive length in mm, got {value}")
        if int(self.n) != self.n or self.n < 1:
            raise GeometryError("N", f"turn count must be an integer ≥ 1, got {self.n}")


@dataclass(frozen=True)
class StackSpec:
    """Substrate + MUT stack. Lengths in mm, permittivities relative."""

    eps_s: float
    h_s: float
    h_m: float
    eps_m: float
    w_ms: float

    def __post_init__(self):
        if not self.eps_s >= 1:
            raise GeometryError("eps_s", f"substrate permittivity must be ≥ 1, got {self.eps_s}")
        if not self.eps_m >= 1:
            raise GeometryError("eps_m", f"MUT permittivity must be ≥ 1, got {self.eps_m}")
        for name in ("h_s", "h_m", "w_ms"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise GeometryError(name, f"must be a positive length in mm, got {value}")

    @property
    def thin_regime_ok(self):
        return self.h_s / self.h_m < 1

    def with_mut(self, eps_m):
        return StackSpec(self.eps_s, self.h_s, self.h_m, eps_m, self.w_ms)


@dataclass(frozen=True)
class LumpedCell:
    l_sp: float
    c_sp: float
    l_l: float
    c_l: float
    m: float
    l_s: float
    c_s: float


@dataclass(frozen=True)
class LineTank:
    l_i: float
    c_i: float

    @property
    def f0(self):
        return resonance_frequency(self.l_i, self.c_i)


@dataclass
class CellSynthesis:
    """A synthesized cell plus the quantities needed to explain it."""

    cell: LumpedCell
    tank: LineTank
    eps_eff: float
    w_ms_mm: float
    a_avg_mm2: float
    spiral_gap_mm: float
    beta1: float
    beta2: float
    notes: list = field(default_factory=list)

    @property
    def eps_eff_rel(self):
        return self.eps_eff / constants.epsilon_0

    @property
    def frequency(self):
        return resonance_frequency(self.cell.l_s, self.cell.c_s)


# ------------------------------------------------------------
# 2️⃣ Material and special functions
# ------------------------------------------------------------
def effective_permittivity(stack):
    """Absolute effective permittivity (F/m) of the line with MUT on top."""
    root = (1 + 12 * stack.h_s / stack.w_ms) ** -0.5
    rel = (stack.eps_s + stack.eps_m) / 2 + (stack.eps_s - stack.eps_m) / 2 * root
    value = constants.epsilon_0 * rel
    if not np.isfinite(value) or value <= 0:
        raise GeometryError("stack", f"effective permittivity is not finite ({value})")
    return value


def relative_effective_permittivity(stack):
    return effective_permittivity(stack) / constants.epsilon_0


def elliptic_k(k):
    """Complete elliptic integral of the first kind K(k), modulus convention.

    scipy's ellipk takes the parameter m = k².
    """
    if not np.isfinite(k) or k < 0 or k >= 1:
        raise EllipticDomainError(f"elliptic modulus must satisfy 0 ≤ k < 1, got {k}")
    return float(ellipk(k * k))


# ------------------------------------------------------------
# 3️⃣ Element synthesizers
# ------------------------------------------------------------
def eh_ml_inductance(v, h_s, t):
    """Coupling-arm inductance (H). Lengths in mm; the bracket evaluates to nH."""
    ratio = 2 * v / (h_s + t)
    if ratio <= 1 + 1e-12:
        raise GeometryError("V", f"2·V must exceed H_S + T (2V = {2 * v:g} mm, H_S + T = {h_s + t:g} mm)")
    nh = 0.2 * v * (math.log(ratio) + 0.5 + 0.22 * (h_s + t) / v)
    return nh * NH


def spiral_inductance(x, y, n, h_s):
    if x <= 0 or y <= 0:
        raise GeometryError("X" if x <= 0 else "Y", "spiral dimensions must be positive")
    if h_s <= 0:
        raise GeometryError("h_s", "substrate thickness must be positive")
    if n < 1:
        raise GeometryError("N", f"turn count must be ≥ 1, got {n}")
    return constants.mu_0 * n ** 2 * (x * MM) * (y * MM) / (h_s * MM)


def spiral_gamma(geom):
    half_slot = geom.b / 2
    return half_slot / (half_slot + geom.t)


def spiral_capacitance_factor(geom, gap=None):
    """β2 in C_SP = β2·ε_eff, in metres."""
    gap = geom.g if gap is None else gap
    gamma = spiral_gamma(geom)
    ratio = elliptic_k(math.sqrt(1 - gamma ** 2)) / elliptic_k(gamma)
    q_mm = geom.x / (4 * (gap + geom.t) * geom.n ** 2 + 1) * (geom.x - (geom.n - 0.5) * (geom.b + geom.t))
    if q_mm <= 0:
        raise GeometryError("X", f"spiral too tight: X must exceed (N − 1/2)(B + T) = {(geom.n - 0.5) * (geom.b + geom.t):g} mm")
    return ratio * q_mm * MM


def spiral_capacitance(geom, eps_eff, gap=None):
    return spiral_capacitance_factor(geom, gap) * eps_eff


def coupling_capacitance(a_avg, g, eps_eff):
    """Arm-to-line capacitance (F); a_avg in mm², g in mm."""
    if g <= 0:
        raise GeometryError("G", f"coupling gap must be positive, got {g}")
    if a_avg < 0:
        raise GeometryError("a_avg", f"coupling area cannot be negative, got {a_avg}")
    return (a_avg * MM2) / (g * MM) * eps_eff


def default_coupling_area(geom):
    return geom.v * geom.t


def default_microstrip_width(t, w_fd):
    return (t + w_fd) / 2


# ------------------------------------------------------------
# 4️⃣ Composition and transforms
# ------------------------------------------------------------
def compose_cell(l_sp, c_sp, l_l, c_l, m):
    """Series combination of spiral and arm. m = 0 describes an uncoupled cell."""
    for name, value in (("l_sp", l_sp), ("c_sp", c_sp), ("l_l", l_l), ("c_l", c_l)):
        if not value > 0:
            raise InputValidationError(f"{name} must be positive, got {value}")
    if not m >= 0:
        raise InputValidationError(f"m must be non-negative, got {m}")
    l_s = l_sp + l_l / 2
    c_s = 1 / (1 / c_sp + 1 / c_l)
    return LumpedCell(l_sp=l_sp, c_sp=c_sp, l_l=l_l, c_l=c_l, m=m, l_s=l_s, c_s=c_s)


def resonance_frequency(l, c):
    l_arr, c_arr = np.asarray(l, dtype=float), np.asarray(c, dtype=float)
    if np.any(l_arr <= 0) or np.any(c_arr <= 0):
        raise InputValidationError("resonance needs positive inductance and capacitance")
    f = 1 / (2 * np.pi * np.sqrt(l_arr * c_arr))
    return float(f) if f.ndim == 0 else f


def to_line_tank(cell, omega0=None):
    own = 2 * math.pi * resonance_frequency(cell.l_s, cell.c_s)
    if omega0 is None:
        omega0 = own
    elif abs(omega0 - own) > 1e-9 * own:
        raise InputValidationError(f"omega0 {omega0:g} rad/s is not the cell's own resonance {own:g} rad/s")
    if cell.m <= 0:
        raise UncoupledCellError("cell has no mutual inductance to the line (m = 0)")
    coupling = cell.m ** 2 * omega0 ** 2
    return LineTank(l_i=cell.c_s * coupling, c_i=cell.l_s / coupling)


def default_mutual_inductance(l_s, tank_l):
    """M that makes the transformed tank inductance equal tank_l (l_i = M²/L_S)."""
    if not l_s > 0 or not tank_l > 0:
        raise InputValidationError("L_S and the target tank inductance must be positive")
    return math.sqrt(tank_l * l_s)


def theta_coefficient(l_s, beta1, beta2, alpha1):
    """Frequency–permittivity constant θ with f = 1/(2π√(θ·ε_M)).

    alpha1 maps ε_M to the absolute effective permittivity (ε_eff = α1·ε_M). It
    is only constant for a fixed stack; over a wide ε_M range it drifts.
    """
    for name, value in (("l_s", l_s), ("beta1", beta1), ("beta2", beta2), ("alpha1", alpha1)):
        if not value > 0:
            raise InputValidationError(f"{name} must be positive, got {value}")
    return l_s * (beta1 * beta2 / (beta1 + beta2)) * alpha1


def theta_from_frequency(f_b, eps_b=1.0):
    if not f_b > 0 or not eps_b > 0:
        raise InputValidationError("bare frequency and permittivity must be positive")
    return 1 / ((2 * math.pi * f_b) ** 2 * eps_b)


# ------------------------------------------------------------
# 5️⃣ End-to-end synthesis
# ------------------------------------------------------------
def synthesize_cell(geom, stack, a_avg=None, m=None, tank_l=DEFAULT_TANK_L_U, spiral_gap="coupling"):
    """Run every synthesizer for one cell and return the composite and its tank.

    When m is not given it is chosen so the tank inductance equals tank_l. That
    M depends on L_S only, so it stays fixed when the MUT changes.
    """
    if spiral_gap not in SPIRAL_GAP_CHOICES:
        raise InputValidationError(f"spiral_gap must be one of {SPIRAL_GAP_CHOICES}, got {spiral_gap!r}")
    if not stack.thin_regime_ok:
        log.warning("H_S/H_M = %.3f ≥ 1: effective-permittivity formula is outside its thin-substrate regime",
                    stack.h_s / stack.h_m)

    notes = []
    if a_avg is None:
        a_avg = default_coupling_area(geom)
        notes.append(f"A_AVG = V·T = {a_avg:g} mm²")
    else:
        notes.append(f"A_AVG = {a_avg:g} mm² (override)")
    notes.append(f"W_MS = {stack.w_ms:g} mm")
    gap = geom.g if spiral_gap == "coupling" else geom.a
    notes.append(f"spiral gap = {gap:g} mm ({spiral_gap})")

    eps_eff = effective_permittivity(stack)
    l_l = eh_ml_inductance(geom.v, stack.h_s, geom.t)
    l_sp = spiral_inductance(geom.x, geom.y, geom.n, stack.h_s)
    beta2 = spiral_capacitance_factor(geom, gap)
    beta1 = (a_avg * MM2) / (geom.g * MM)
    c_sp = beta2 * eps_eff
    c_l = coupling_capacitance(a_avg, geom.g, eps_eff)

    uncoupled = compose_cell(l_sp, c_sp, l_l, c_l, 0.0)
    if m is None:
        m = default_mutual_inductance(uncoupled.l_s, tank_l)
        notes.append(f"M = {m * 1e9:.4g} nH (default: tank L = {tank_l * 1e12:g} pH)")
    else:
        notes.append(f"M = {m * 1e9:.4g} nH (override)")
    cell = compose_cell(l_sp, c_sp, l_l, c_l, m)
    tank = to_line_tank(cell)

    log.debug("synthesized cell: L_SP=%.4g C_SP=%.4g L_L=%.4g C_L=%.4g L_S=%.4g C_S=%.4g",
              l_sp, c_sp, l_l, c_l, cell.l_s, cell.c_s)
    return CellSynthesis(cell=cell, tank=tank, eps_eff=eps_eff, w_ms_mm=stack.w_ms, a_avg_mm2=a_avg,
                         spiral_gap_mm=gap, beta1=beta1, beta2=beta2, notes=notes)
