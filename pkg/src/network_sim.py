"""
SpiralSense — Two-Port Network Simulation
-----------------------------------------
1. Builds the resonator-loaded line as a cascade of pair-cells:
   series (jωL/2 + Z_U) → shunt jωC → series (jωL/2 + Z_D).
2. Converts the cascaded ABCD matrices to S-parameters on a frequency grid.
3. Finds the transmission notches and measures null depth, 10-dB FBW and Q.

All arrays are evaluated for the whole grid at once; every grid point is
independent of the others.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from src.circuit_params import LineTank, resonance_frequency
from src.errors import (ExtractionError, GeometryError, InputValidationError, NumericalDegeneracyError,
                        UnresolvedBandError)

log = logging.getLogger(__name__)

IMPEDANCE_CLAMP = 1e12
DB_FLOOR = -200.0
BASELINE_DCTC_MM = 14.0
RECIPROCITY_TOL = 1e-9
DEFAULT_DEPTH_THRESHOLD_DB = -10.0


# ------------------------------------------------------------
# 1️⃣ Domain types
# ------------------------------------------------------------
@dataclass(frozen=True)
class ArrayLayout:
    """n_cells U/D pairs spaced d_ctc mm apart on the main line."""

    n_cells: int = 3
    d_ctc: float = BASELINE_DCTC_MM
    line_l: float = 0.2e-9
    line_c: float = 0.02e-12
    z0: float = 50.0

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise GeometryError("n_cells", f"must be an integer ≥ 1, got {self.n_cells}")
        if not self.d_ctc > 0:
            raise GeometryError("d_ctc", f"must be positive, got {self.d_ctc}")
        if not self.z0 > 0:
            raise GeometryError("z0", f"must be positive, got {self.z0}")
        if self.line_l < 0 or self.line_c < 0:
            raise GeometryError("line_l" if self.line_l < 0 else "line_c", "line elements cannot be negative")

    def section_elements(self):
        """Per-section (L, C) scaled linearly with spacing against the 14 mm baseline."""
        scale = self.d_ctc / BASELINE_DCTC_MM
        return self.line_l * scale, self.line_c * scale


@dataclass
class FrequencySweep:
    grid: np.ndarray
    s21: np.ndarray
    s11: np.ndarray
    z0: float = 50.0
    s22: np.ndarray = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.s21 = np.asarray(self.s21, dtype=complex)
        self.s11 = np.asarray(self.s11, dtype=complex)
        if self.s22 is not None:
            self.s22 = np.asarray(self.s22, dtype=complex)
        check_grid(self.grid)
        if self.s21.shape != self.grid.shape or self.s11.shape != self.grid.shape:
            raise InputValidationError("s21/s11 must have one value per grid point")
        if self.s22 is not None and self.s22.shape != self.grid.shape:
            raise InputValidationError("s22 must have one value per grid point")
        if not self.z0 > 0:
            raise InputValidationError(f"reference impedance must be positive, got {self.z0}")

    @property
    def s21_db(self):
        return magnitude_db(self.s21)

    @property
    def s11_db(self):
        return magnitude_db(self.s11)

    @property
    def coarse(self):
        return bool(self.warnings)

    def passivity_error(self):
        return float(np.max(np.abs(np.abs(self.s11) ** 2 + np.abs(self.s21) ** 2 - 1)))

    def __len__(self):
        return self.grid.size


@dataclass(frozen=True)
class NotchMetrics:
    f_notch: float
    null_depth: float
    fbw_10db: float
    q_factor: float
    resolved: bool = True


@dataclass(frozen=True)
class TankScenario:
    """Explicit tank and line values of one published operating point."""

    name: str
    tank_u: LineTank
    tank_d: LineTank
    line_l: float
    line_c: float
    grid_step: float
    grid_stop: float

    def layout(self, n_cells=3, d_ctc=BASELINE_DCTC_MM, z0=50.0):
        return ArrayLayout(n_cells=n_cells, d_ctc=d_ctc, line_l=self.line_l, line_c=self.line_c, z0=z0)

    def grid(self):
        return make_grid(self.grid_step, self.grid_stop, self.grid_step)


BARE_SCENARIO = TankScenario("bare", LineTank(9.15e-12, 19.77e-12), LineTank(5.37e-12, 14.75e-12),
                             line_l=0.2e-9, line_c=0.02e-12, grid_step=10e6, grid_stop=20e9)
HIGH_PERMITTIVITY_SCENARIO = TankScenario("high-eps", LineTank(101e-12, 45.05e-12), LineTank(52.3e-12, 47.55e-12),
                                          line_l=0.1e-9, line_c=0.2e-12, grid_step=2e6, grid_stop=5e9)
SCENARIOS = {s.name: s for s in (BARE_SCENARIO, HIGH_PERMITTIVITY_SCENARIO)}


# ------------------------------------------------------------
# 2️⃣ Grid and dB helpers
# ------------------------------------------------------------
def check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InputValidationError("frequency grid must be a nonempty 1-D array")
    if not np.all(np.isfinite(grid)):
        raise InputValidationError("frequency grid contains non-finite values")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise InputValidationError("frequency grid must be strictly increasing")
    return grid


def make_grid(start, stop, step):
    """Inclusive grid start, start+step, … ≤ stop (Hz), built from integer multiples."""
    if not step > 0 or not start > 0 or stop < start:
        raise InputValidationError(f"invalid grid: start={start}, stop={stop}, step={step}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def magnitude_db(values):
    mag = np.abs(np.asarray(values))
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag)
    return np.maximum(db, DB_FLOOR)


# ------------------------------------------------------------
# 3️⃣ Two-port algebra
# ------------------------------------------------------------
def branch_impedance(tank, line_half_l, omega):
    """Series impedance of one line half-section with a coupled tank (Ω)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise InputValidationError("angular frequency must be positive")
    denom = 1 - omega ** 2 * tank.l_i * tank.c_i
    with np.errstate(divide="ignore", invalid="ignore"):
        x_tank = omega * tank.l_i / denom
    x_tank = np.where(np.isfinite(x_tank), x_tank, IMPEDANCE_CLAMP)
    x_tank = np.clip(x_tank, -IMPEDANCE_CLAMP, IMPEDANCE_CLAMP)
    z = np.asarray(1j * (omega * line_half_l + x_tank))
    return complex(z) if z.ndim == 0 else z


def series(z):
    return ("series", z)


def shunt(y):
    return ("shunt", y)


def cascade_two_port(sections, omega):
    """Left-to-right product of section ABCD matrices, shape (len(omega), 2, 2).

    A section is ("series", Z) or ("shunt", Y); the value may be a scalar, an
    array over omega, or a callable of omega.
    """
    if not sections:
        raise InputValidationError("cascade needs at least one section")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    abcd = np.tile(np.eye(2, dtype=complex), (omega.size, 1, 1))
    for kind, value in sections:
        value = value(omega) if callable(value) else value
        value = np.broadcast_to(np.asarray(value, dtype=complex), omega.shape)
        element = np.tile(np.eye(2, dtype=complex), (omega.size, 1, 1))
        if kind == "series":
            element[:, 0, 1] = value
        elif kind == "shunt":
            element[:, 1, 0] = value
        else:
            raise InputValidationError(f"unknown section kind {kind!r}")
        abcd = abcd @ element
    return abcd


def reciprocity_error(abcd):
    """Largest |det − 1| scaled by the size of the determinant's terms."""
    ad = abcd[..., 0, 0] * abcd[..., 1, 1]
    bc = abcd[..., 0, 1] * abcd[..., 1, 0]
    scale = np.maximum(1.0, np.maximum(np.abs(ad), np.abs(bc)))
    return float(np.max(np.abs(ad - bc - 1) / scale))


def _abcd_denominator(abcd, z0):
    if not z0 > 0:
        raise InputValidationError(f"reference impedance must be positive, got {z0}")
    a, b, c, d = abcd[..., 0, 0], abcd[..., 0, 1], abcd[..., 1, 0], abcd[..., 1, 1]
    denom = a + b / z0 + c * z0 + d
    if np.any(~np.isfinite(denom)) or np.any(np.abs(denom) == 0):
        raise NumericalDegeneracyError("ABCD → S conversion hit a singular denominator")
    return a, b, c, d, denom


def s_parameters(abcd, z0):
    """(s11, s21) of a reciprocal two-port."""
    a, b, c, d, denom = _abcd_denominator(np.asarray(abcd, dtype=complex), z0)
    s11 = (a + b / z0 - c * z0 - d) / denom
    s21 = 2 / denom
    return s11, s21


def output_reflection(abcd, z0):
    a, b, c, d, denom = _abcd_denominator(np.asarray(abcd, dtype=complex), z0)
    return (-a + b / z0 - c * z0 + d) / denom


# ------------------------------------------------------------
# 4️⃣ Sweep simulation
# ------------------------------------------------------------
def pair_cell_sections(tank_u, tank_d, line_l, line_c):
    return [
        series(lambda w: branch_impedance(tank_u, line_l / 2, w)),
        shunt(lambda w: 1j * w * line_c),
        series(lambda w: branch_impedance(tank_d, line_l / 2, w)),
    ]


def _unresolved_tanks(sweep, tanks):
    messages = []
    db = sweep.s21_db
    step = np.diff(sweep.grid)
    for tank in tanks:
        f0 = tank.f0
        if f0 < sweep.grid[0] or f0 > sweep.grid[-1]:
            messages.append(f"tank resonance {f0 / 1e9:.4f} GHz lies outside the grid")
            continue
        i = int(np.clip(np.searchsorted(sweep.grid, f0), 1, sweep.grid.size - 1))
        lo, hi = max(i - 2, 0), min(i + 2, sweep.grid.size)
        if db[lo:hi].min() > DEFAULT_DEPTH_THRESHOLD_DB:
            local_step = step[min(i, step.size - 1)] if step.size else float("nan")
            messages.append(f"grid step {local_step / 1e6:.3g} MHz too coarse to resolve the notch at {f0 / 1e9:.4f} GHz")
    return messages


def simulate_sweep(cells, layout, grid):
    """Cascaded response of n_cells pair-cells.

    cells is a list of (tank_u, tank_d) pairs: either one pair reused for every
    cell or exactly layout.n_cells pairs.
    """
    grid = check_grid(grid)
    if np.any(grid <= 0):
        raise InputValidationError("frequency grid must be above 0 Hz")
    cells = list(cells)
    if len(cells) == 1:
        cells = cells * layout.n_cells
    if len(cells) != layout.n_cells:
        raise InputValidationError(f"expected 1 or {layout.n_cells} tank pairs, got {len(cells)}")

    line_l, line_c = layout.section_elements()
    sections = []
    for tank_u, tank_d in cells:
        sections.extend(pair_cell_sections(tank_u, tank_d, line_l, line_c))

    omega = 2 * np.pi * grid
    abcd = cascade_two_port(sections, omega)
    s11, s21 = s_parameters(abcd, layout.z0)
    sweep = FrequencySweep(grid=grid, s21=s21, s11=s11, z0=layout.z0, s22=output_reflection(abcd, layout.z0))

    distinct = {(t.l_i, t.c_i): t for pair in cells for t in pair}
    sweep.warnings.extend(_unresolved_tanks(sweep, distinct.values()))
    for message in sweep.warnings:
        log.warning(message)
    log.debug("simulated %d points, %d cells, reciprocity error %.3g", grid.size, layout.n_cells,
              reciprocity_error(abcd))
    return sweep


def simulate_scenario(scenario, n_cells=3, d_ctc=BASELINE_DCTC_MM, grid=None, z0=50.0):
    layout = scenario.layout(n_cells=n_cells, d_ctc=d_ctc, z0=z0)
    grid = scenario.grid() if grid is None else grid
    return simulate_sweep([(scenario.tank_u, scenario.tank_d)], layout, grid)


def scenario_frequencies(scenario):
    return resonance_frequency(scenario.tank_u.l_i, scenario.tank_u.c_i), \
        resonance_frequency(scenario.tank_d.l_i, scenario.tank_d.c_i)


# ------------------------------------------------------------
# 5️⃣ Notch metrics
# ------------------------------------------------------------
def _parabolic_vertex(x, y):
    """Vertex abscissa of the parabola through three points, kept inside [x0, x2]."""
    x0, x1, x2 = x
    y0, y1, y2 = y
    d01, d12 = (y1 - y0) / (x1 - x0), (y2 - y1) / (x2 - x1)
    curvature = (d12 - d01) / (x2 - x0)
    if curvature <= 0:
        return x1
    vertex = (x0 + x1) / 2 - d01 / (2 * curvature)
    return float(np.clip(vertex, x0, x2))


def _notch_index(sweep, f_notch):
    db = sweep.s21_db
    i = int(np.searchsorted(sweep.grid, f_notch))
    candidates = [k for k in (i - 1, i, i + 1) if 0 <= k < sweep.grid.size]
    return min(candidates, key=lambda k: db[k])


def _walk_to_shoulder(db, i, direction):
    k = i
    while 0 <= k + direction < db.size and db[k + direction] >= db[k]:
        k += direction
    return k


def _crossing(grid, db, i, level, direction):
    """Frequency where db first rises to `level` walking from i; None off-grid."""
    k = i
    while 0 <= k + direction < db.size:
        nxt = k + direction
        if db[nxt] >= level:
            frac = (level - db[k]) / (db[nxt] - db[k])
            return grid[k] + frac * (grid[nxt] - grid[k])
        k = nxt
    return None


def notch_bandwidths(sweep, notch):
    """(fbw_10db %, q_factor) around one notch.

    The −10 dB edges are absolute. The −3 dB edges are measured from the local
    passband level, interpolated at the notch between the two shoulder maxima.
    """
    db = sweep.s21_db
    grid = sweep.grid
    i = _notch_index(sweep, notch.f_notch)

    lo10 = _crossing(grid, db, i, -10.0, -1)
    hi10 = _crossing(grid, db, i, -10.0, +1)
    fbw = 100 * (hi10 - lo10) / notch.f_notch if lo10 is not None and hi10 is not None else float("nan")

    left, right = _walk_to_shoulder(db, i, -1), _walk_to_shoulder(db, i, +1)
    if right > left:
        reference = np.interp(notch.f_notch, [grid[left], grid[right]], [db[left], db[right]])
    else:
        reference = db[i]
    lo3 = _crossing(grid, db, i, reference - 3.0, -1)
    hi3 = _crossing(grid, db, i, reference - 3.0, +1)
    q = notch.f_notch / (hi3 - lo3) if lo3 is not None and hi3 is not None else float("nan")

    if np.isnan(fbw) or np.isnan(q):
        raise UnresolvedBandError(f"band edge of the notch at {notch.f_notch / 1e9:.4f} GHz lies outside the sweep",
                                  partial={"fbw_10db": fbw, "q_factor": q})
    return fbw, q


def find_notches(sweep, depth_threshold_db=DEFAULT_DEPTH_THRESHOLD_DB):
    """Local |S21| minima below the threshold, ordered by frequency."""
    if not depth_threshold_db < 0:
        raise InputValidationError(f"depth threshold must be below 0 dB, got {depth_threshold_db}")
    db = sweep.s21_db
    grid = sweep.grid
    peaks, _ = find_peaks(-db, height=-depth_threshold_db)

    notches = []
    for i in peaks:
        f_notch = _parabolic_vertex(grid[i - 1:i + 2], db[i - 1:i + 2])
        candidate = NotchMetrics(f_notch=f_notch, null_depth=float(db[i]), fbw_10db=float("nan"), q_factor=float("nan"))
        try:
            fbw, q = notch_bandwidths(sweep, candidate)
            resolved = True
        except UnresolvedBandError as err:
            log.warning("%s", err)
            fbw, q = err.partial["fbw_10db"], err.partial["q_factor"]
            resolved = False
        notches.append(NotchMetrics(f_notch=f_notch, null_depth=float(db[i]), fbw_10db=fbw, q_factor=q,
                                    resolved=resolved))
    log.debug("found %d notches below %.1f dB", len(notches), depth_threshold_db)
    return notches


def select_notch_pair(notches):
    """The two deepest notches, lower frequency first (U, D)."""
    if len(notches) < 2:
        raise ExtractionError(f"need two notches for a U/D pair, found {len(notches)}")
    deepest = sorted(notches, key=lambda n: n.null_depth)[:2]
    return tuple(sorted(deepest, key=lambda n: n.f_notch))


def notch_near(notches, f_target, rel_window=0.01):
    """Deepest notch within ±rel_window of f_target, or None."""
    near = [n for n in notches if abs(n.f_notch - f_target) <= rel_window * f_target]
    return min(near, key=lambda n: n.null_depth) if near else None
