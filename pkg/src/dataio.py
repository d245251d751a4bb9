"""
SpiralSense — Data Ingestion & Export
-------------------------------------
1. Touchstone v1 two-port files (.s2p): parse and write, RI / MA / DB.
2. Sweep CSV with a fixed six-column header.
3. YAML sensor configuration, validated on load.
4. Observation tables (measured notch pairs) and calibration records.

Parsers take text and return values; the *_file helpers only add disk access.
"""

import io
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np
import pandas as pd
import yaml
from dateutil import parser as dateparser
from pydantic import BaseModel, ConfigDict, ValidationError

from models.power_law_model import CalibrationCurve
from src.circuit_params import CellGeometry, StackSpec, default_microstrip_width, spiral_capacitance_factor
from src.errors import ConfigError, CsvFormatError, GeometryError, TouchstoneParseError
from src.network_sim import ArrayLayout, FrequencySweep, make_grid, magnitude_db
from src.sensing import NotchPairObservation

log = logging.getLogger(__name__)

# === File Paths ===
DEFAULT_CONFIG_FILE = "data/sensor_config.yaml"
MUT_LIBRARY_FILE = "data/mut_library.csv"

SWEEP_CSV_COLUMNS = ["freq_hz", "s21_re", "s21_im", "s21_db", "s11_re", "s11_im"]
OBSERVATION_COLUMNS = ["label", "f_u_ghz", "f_d_ghz"]

FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
FORMAT_CONVERTERS = {
    "ri": lambda r, i: r + 1j * i,
    "ma": lambda m, a: m * np.exp(1j * np.radians(a)),
    "db": lambda db, a: 10 ** (db / 20) * np.exp(1j * np.radians(a)),
}
FORMAT_SPLITTERS = {
    "ri": lambda s: (s.real, s.imag),
    "ma": lambda s: (np.abs(s), np.degrees(np.angle(s))),
    "db": lambda s: (magnitude_db(s), np.degrees(np.angle(s))),
}


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _read_text(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"❌ File not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write_text(path, text):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


# ------------------------------------------------------------
# 1️⃣ Touchstone v1
# ------------------------------------------------------------
@dataclass
class TouchstoneDocument:
    frequency_unit: str
    parameter: str
    data_format: str
    resistance: float
    frequencies: np.ndarray
    s: np.ndarray  # (n, 2, 2), s[:, i, j] = S(i+1)(j+1)

    def to_sweep(self):
        return FrequencySweep(grid=self.frequencies, s21=self.s[:, 1, 0], s11=self.s[:, 0, 0],
                              z0=self.resistance, s22=self.s[:, 1, 1])


def _parse_option_line(tokens, line_no):
    unit, parameter, data_format, resistance = "ghz", "s", "ma", 50.0
    k = 0
    while k < len(tokens):
        token = tokens[k]
        if token in FREQ_UNITS:
            unit = token
        elif token in ("s", "y", "z", "g", "h"):
            parameter = token
        elif token in FORMAT_CONVERTERS:
            data_format = token
        elif token == "r":
            if k + 1 >= len(tokens):
                raise TouchstoneParseError(line_no, "option 'R' needs a reference resistance")
            try:
                resistance = float(tokens[k + 1])
            except ValueError:
                raise TouchstoneParseError(line_no, f"bad reference resistance {tokens[k + 1]!r}") from None
            k += 1
        else:
            raise TouchstoneParseError(line_no, f"unknown option {token!r}")
        k += 1
    if parameter != "s":
        raise TouchstoneParseError(line_no, f"only S-parameters are supported, got {parameter.upper()}")
    if not resistance > 0:
        raise TouchstoneParseError(line_no, f"reference resistance must be positive, got {resistance}")
    return unit, parameter, data_format, resistance


def parse_touchstone_document(text):
    options = None
    rows = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            raise TouchstoneParseError(line_no, f"Touchstone v2 keyword {line.split()[0]} is not supported (v1 only)")
        if line.startswith("#"):
            if options is None:
                options = _parse_option_line(line[1:].lower().split(), line_no)
            else:
                log.debug("ignoring repeated option line %d", line_no)
            continue
        if options is None:
            raise TouchstoneParseError(line_no, "data row before the '#' option line")
        fields = line.split()
        if len(fields) != 9:
            raise TouchstoneParseError(line_no, f"expected 9 columns for a two-port row, got {len(fields)}")
        try:
            values = [float(v) for v in fields]
        except ValueError:
            raise TouchstoneParseError(line_no, f"non-numeric value in row: {line!r}") from None
        if rows and values[0] <= rows[-1][1][0]:
            raise TouchstoneParseError(line_no, "frequencies must be strictly increasing")
        rows.append((line_no, values))

    if options is None:
        raise TouchstoneParseError(None, "missing '#' option line")
    if not rows:
        raise TouchstoneParseError(None, "no data rows")

    unit, parameter, data_format, resistance = options
    data = np.array([values for _, values in rows], dtype=float)
    convert = FORMAT_CONVERTERS[data_format]
    s = np.empty((data.shape[0], 2, 2), dtype=complex)
    # v1 two-port column order: S11, S21, S12, S22
    s[:, 0, 0] = convert(data[:, 1], data[:, 2])
    s[:, 1, 0] = convert(data[:, 3], data[:, 4])
    s[:, 0, 1] = convert(data[:, 5], data[:, 6])
    s[:, 1, 1] = convert(data[:, 7], data[:, 8])
    return TouchstoneDocument(frequency_unit=unit, parameter=parameter, data_format=data_format,
                              resistance=resistance, frequencies=data[:, 0] * FREQ_UNITS[unit], s=s)


def parse_touchstone(text):
    return parse_touchstone_document(text).to_sweep()


def read_touchstone(path):
    return parse_touchstone(_read_text(path))


def write_touchstone(sweep, data_format="ri", unit="ghz"):
    """Two-port Touchstone v1 text; S12 = S21 and S22 falls back to S11."""
    data_format, unit = data_format.lower(), unit.lower()
    if data_format not in FORMAT_SPLITTERS:
        raise ConfigError("format", f"must be one of {sorted(FORMAT_SPLITTERS)}, got {data_format!r}")
    if unit not in FREQ_UNITS:
        raise ConfigError("unit", f"must be one of {sorted(FREQ_UNITS)}, got {unit!r}")
    split = FORMAT_SPLITTERS[data_format]
    s22 = sweep.s22 if sweep.s22 is not None else sweep.s11
    columns = [sweep.grid / FREQ_UNITS[unit]]
    for s in (sweep.s11, sweep.s21, sweep.s21, s22):
        columns.extend(split(s))

    buf = io.StringIO()
    buf.write("! SpiralSense two-port export\n")
    buf.write(f"# {unit.upper()} S {data_format.upper()} R {sweep.z0:g}\n")
    for row in np.column_stack(columns):
        buf.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def save_touchstone(sweep, path, data_format="ri"):
    return _write_text(path, write_touchstone(sweep, data_format=data_format))


# ------------------------------------------------------------
# 2️⃣ Sweep CSV
# ------------------------------------------------------------
def sweep_frame(sweep):
    return pd.DataFrame({
        "freq_hz": sweep.grid,
        "s21_re": sweep.s21.real,
        "s21_im": sweep.s21.imag,
        "s21_db": sweep.s21_db,
        "s11_re": sweep.s11.real,
        "s11_im": sweep.s11.imag,
    }, columns=SWEEP_CSV_COLUMNS)


def write_sweep_csv(sweep):
    return sweep_frame(sweep).to_csv(index=False, float_format="%.17g", lineterminator="\n")


def read_sweep_csv(text, z0=50.0):
    try:
        df = pd.read_csv(io.StringIO(text), float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise CsvFormatError(f"unreadable sweep CSV: {err}") from err
    if list(df.columns) != SWEEP_CSV_COLUMNS:
        raise CsvFormatError(f"sweep CSV header must be {','.join(SWEEP_CSV_COLUMNS)}, got {','.join(map(str, df.columns))}")
    try:
        df = df.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as err:
        raise CsvFormatError(f"sweep CSV holds a non-numeric value: {err}") from err
    return FrequencySweep(grid=df["freq_hz"].to_numpy(), s21=df["s21_re"].to_numpy() + 1j * df["s21_im"].to_numpy(),
                          s11=df["s11_re"].to_numpy() + 1j * df["s11_im"].to_numpy(), z0=z0)


def save_sweep_csv(sweep, path):
    return _write_text(path, write_sweep_csv(sweep))


# ------------------------------------------------------------
# 3️⃣ Sensor configuration
# ------------------------------------------------------------
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CellSection(_Section):
    x: float
    y: float
    t: float
    a: float
    b: float
    v: float
    g: float
    n: int = 2


class StackSection(_Section):
    eps_s: float
    h_s: float
    h_m: float
    w_fd: float
    eps_m: float = 1.0
    l_fd: float = 40.0


class LayoutSection(_Section):
    n_cells: int = 3
    d_ctc_mm: float = 14.0
    line_l_nh: float = 0.2
    line_c_pf: float = 0.02
    z0: float = 50.0


class SweepSection(_Section):
    start_ghz: float = 0.01
    stop_ghz: float = 20.0
    step_ghz: float = 0.01


class OverridesSection(_Section):
    a_avg_u_mm2: Optional[float] = None
    a_avg_d_mm2: Optional[float] = None
    w_ms_u_mm: Optional[float] = None
    w_ms_d_mm: Optional[float] = None
    m_u_nh: Optional[float] = None
    m_d_nh: Optional[float] = None
    spiral_gap: Literal["coupling", "turn_spacing"] = "coupling"


class ConfigDocument(_Section):
    cell_u: CellSection
    cell_d: CellSection
    stack: StackSection
    layout: LayoutSection = LayoutSection()
    sweep: SweepSection = SweepSection()
    overrides: OverridesSection = OverridesSection()


@dataclass(frozen=True)
class Overrides:
    a_avg_u: float = None
    a_avg_d: float = None
    w_ms_u: float = None
    w_ms_d: float = None
    m_u: float = None
    m_d: float = None
    spiral_gap: str = "coupling"


@dataclass(frozen=True)
class StackMaterials:
    """Substrate and MUT layers shared by both cells (mm, relative permittivities)."""

    eps_s: float
    h_s: float
    h_m: float
    eps_m: float = 1.0

    @property
    def thin_regime_ok(self):
        return self.h_s / self.h_m < 1

    def with_mut(self, eps_m):
        return replace(self, eps_m=eps_m)


@dataclass(frozen=True)
class SensorConfig:
    """Validated configuration. Per-cell StackSpecs come from `cell_stack`."""

    cell_u: CellGeometry
    cell_d: CellGeometry
    stack: StackMaterials
    w_fd: float
    layout: ArrayLayout
    sweep: tuple  # (start, stop, step) in Hz
    overrides: Overrides = field(default_factory=Overrides)
    l_fd: float = 40.0

    def cell(self, branch):
        return {"u": self.cell_u, "d": self.cell_d}[branch]

    def cell_stack(self, branch):
        """Stack for one cell; W_MS defaults to (T + W_Fd)/2."""
        override = getattr(self.overrides, f"w_ms_{branch}")
        w_ms = override if override is not None else default_microstrip_width(self.cell(branch).t, self.w_fd)
        return StackSpec(self.stack.eps_s, self.stack.h_s, self.stack.h_m, self.stack.eps_m, w_ms)

    def spiral_gap(self, branch):
        geom = self.cell(branch)
        return geom.a if self.overrides.spiral_gap == "turn_spacing" else geom.g

    def grid(self):
        return make_grid(*self.sweep)

    def with_mut(self, eps_m):
        return replace(self, stack=self.stack.with_mut(eps_m))


def _validation_field(err):
    first = err.errors()[0]
    path = ".".join(str(p) for p in first["loc"]) or "document"
    return path, first["msg"]


def _check_cells(config):
    """Formula validity ranges that involve both a cell and the stack."""
    for branch in ("u", "d"):
        geom = config.cell(branch)
        stack = config.cell_stack(branch)
        if not 2 * geom.v > stack.h_s + geom.t:
            raise ConfigError(f"cell_{branch}.v", f"2·V must exceed H_S + T "
                                                  f"(2V = {2 * geom.v:g} mm, H_S + T = {stack.h_s + geom.t:g} mm)")
        try:
            spiral_capacitance_factor(geom, config.spiral_gap(branch))
        except GeometryError as err:
            raise ConfigError(f"cell_{branch}.x", str(err).split(": ", 1)[1]) from err


def load_config(text):
    """Parse and validate a YAML sensor configuration."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError("document", f"not valid YAML: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("document", "top level must be a mapping of sections")
    try:
        doc = ConfigDocument.model_validate(raw)
    except ValidationError as err:
        raise ConfigError(*_validation_field(err)) from err

    section = "cell_u"
    try:
        cell_u = CellGeometry(**doc.cell_u.model_dump())
        section = "cell_d"
        cell_d = CellGeometry(**doc.cell_d.model_dump())
        section = "stack"
        # range checks of the shared layers, with W_Fd in the width slot
        StackSpec(eps_s=doc.stack.eps_s, h_s=doc.stack.h_s, h_m=doc.stack.h_m, eps_m=doc.stack.eps_m,
                  w_ms=doc.stack.w_fd)
        stack = StackMaterials(eps_s=doc.stack.eps_s, h_s=doc.stack.h_s, h_m=doc.stack.h_m, eps_m=doc.stack.eps_m)
        section = "layout"
        layout = ArrayLayout(n_cells=doc.layout.n_cells, d_ctc=doc.layout.d_ctc_mm, line_l=doc.layout.line_l_nh * 1e-9,
                             line_c=doc.layout.line_c_pf * 1e-12, z0=doc.layout.z0)
        section = "overrides"
        o = doc.overrides
        for name in ("a_avg_u_mm2", "a_avg_d_mm2", "w_ms_u_mm", "w_ms_d_mm", "m_u_nh", "m_d_nh"):
            value = getattr(o, name)
            if value is not None and not value > 0:
                raise GeometryError(name, f"must be positive, got {value}")
        overrides = Overrides(a_avg_u=o.a_avg_u_mm2, a_avg_d=o.a_avg_d_mm2, w_ms_u=o.w_ms_u_mm, w_ms_d=o.w_ms_d_mm,
                              m_u=None if o.m_u_nh is None else o.m_u_nh * 1e-9,
                              m_d=None if o.m_d_nh is None else o.m_d_nh * 1e-9, spiral_gap=o.spiral_gap)
    except GeometryError as err:
        name = err.field if section != "stack" or err.field != "w_ms" else "w_fd"
        raise ConfigError(f"{section}.{name.lower()}", str(err).split(": ", 1)[1]) from err

    s = doc.sweep
    if not (s.step_ghz > 0 and s.start_ghz > 0 and s.stop_ghz > s.start_ghz):
        raise ConfigError("sweep", f"need 0 < start < stop and step > 0, got {s.start_ghz}/{s.stop_ghz}/{s.step_ghz} GHz")

    config = SensorConfig(cell_u=cell_u, cell_d=cell_d, stack=stack, w_fd=doc.stack.w_fd, layout=layout,
                          sweep=(s.start_ghz * 1e9, s.stop_ghz * 1e9, s.step_ghz * 1e9),
                          overrides=overrides, l_fd=doc.stack.l_fd)
    _check_cells(config)
    if not stack.thin_regime_ok:
        log.warning("stack: H_S/H_M = %.3f ≥ 1 leaves the thin-substrate regime", stack.h_s / stack.h_m)
    return config


def load_config_file(path=DEFAULT_CONFIG_FILE):
    return load_config(_read_text(path))


# ------------------------------------------------------------
# 4️⃣ Observations and calibration records
# ------------------------------------------------------------
def _optional(value):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    if isinstance(value, str) and not value.strip():
        return None
    return value


def read_observations(text):
    """Observation CSV (label, eps_ref?, f_u_ghz, f_d_ghz, timestamp?) → list of NotchPairObservation."""
    try:
        df = pd.read_csv(io.StringIO(text), dtype={"label": str, "timestamp": str}, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise CsvFormatError(f"unreadable observation CSV: {err}") from err
    missing = [c for c in OBSERVATION_COLUMNS if c not in df.columns]
    if missing:
        raise CsvFormatError(f"observation CSV is missing column(s): {', '.join(missing)}")

    observations = []
    for row_no, row in enumerate(df.to_dict("records"), start=2):
        stamp = _optional(row.get("timestamp"))
        if stamp is not None:
            try:
                stamp = dateparser.parse(stamp)
            except (ValueError, OverflowError) as err:
                raise CsvFormatError(f"row {row_no}: bad timestamp {row['timestamp']!r}") from err
        eps_ref = _optional(row.get("eps_ref"))
        try:
            observations.append(NotchPairObservation(
                f_u=float(row["f_u_ghz"]) * 1e9, f_d=float(row["f_d_ghz"]) * 1e9,
                label=str(_optional(row["label"]) or f"row{row_no}"),
                eps_ref=None if eps_ref is None else float(eps_ref), timestamp=stamp))
        except (TypeError, ValueError) as err:
            raise CsvFormatError(f"row {row_no}: {err}") from err
    return observations


def read_observations_file(path):
    return read_observations(_read_text(path))


def read_mut_library(path=MUT_LIBRARY_FILE):
    df = pd.read_csv(io.StringIO(_read_text(path)))
    missing = [c for c in ("label", "eps") if c not in df.columns]
    if missing:
        raise CsvFormatError(f"MUT library is missing column(s): {', '.join(missing)}")
    return df


class CalibrationRecord(_Section):
    quantity: str
    units: str
    a: float
    b: float
    r2: float
    domain: tuple[float, float]
    eps_b: float = 1.0
    delta_f_b_hz: Optional[float] = None
    n_points: int = 0
    source: str = ""


def write_calibration_record(curve, source=""):
    record = CalibrationRecord(quantity=curve.quantity, units=curve.units, a=curve.a, b=curve.b, r2=curve.r2,
                               domain=curve.domain, eps_b=curve.eps_b, delta_f_b_hz=curve.delta_f_b,
                               n_points=curve.n_points, source=source)
    return json.dumps(record.model_dump(), indent=2, sort_keys=True) + "\n"


def read_calibration_record(text):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("calibration", f"not valid JSON: {err}") from err
    try:
        record = CalibrationRecord.model_validate(raw)
    except ValidationError as err:
        path, msg = _validation_field(err)
        raise ConfigError(f"calibration.{path}", msg) from err
    return CalibrationCurve(a=record.a, b=record.b, r2=record.r2, domain=record.domain, quantity=record.quantity,
                            units=record.units, eps_b=record.eps_b, delta_f_b=record.delta_f_b_hz,
                            n_points=record.n_points)


def read_calibration_file(path):
    return read_calibration_record(_read_text(path))


def save_calibration_record(curve, path, source=""):
    return _write_text(path, write_calibration_record(curve, source=source))
