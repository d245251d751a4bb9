import datetime
import json
import os

import numpy as np
import pytest

from models.power_law_model import CalibrationCurve
from src.circuit_params import DEFAULT_TANK_L_U, StackSpec, effective_permittivity, synthesize_cell
from src.dataio import (SWEEP_CSV_COLUMNS, load_config, load_config_file, parse_touchstone, parse_touchstone_document,
                        read_calibration_record, read_mut_library, read_observations, read_observations_file,
                        read_sweep_csv, read_touchstone, save_touchstone, write_calibration_record, write_sweep_csv,
                        write_touchstone)
from src.errors import ConfigError, CsvFormatError, TouchstoneParseError
from src.network_sim import BARE_SCENARIO, FrequencySweep, simulate_scenario
from tests.conftest import DATA_DIR

IDENTITY_ROW = "1.0 0 0 1 0 1 0 0 0"


@pytest.fixture(scope="module")
def bare_sweep():
    return simulate_scenario(BARE_SCENARIO)


class TestTouchstoneParsing:

    def test_real_imaginary(self):
        sweep = parse_touchstone("# GHz S RI R 50\n" + IDENTITY_ROW + "\n")
        assert sweep.grid[0] == 1e9
        assert sweep.s21[0] == 1 + 0j
        assert sweep.s11[0] == 0j

    def test_magnitude_angle(self):
        sweep = parse_touchstone("# MHz S MA R 50\n1000 0 0 0.5 90 0.5 90 0 0\n")
        assert sweep.grid[0] == pytest.approx(1e9)
        assert sweep.s21[0] == pytest.approx(0.5j, abs=1e-15)

    def test_decibel_angle(self):
        sweep = parse_touchstone("# GHz S DB R 50\n1.0 -200 0 -6.020599913279624 0 -6.020599913279624 0 -200 0\n")
        assert sweep.s21[0] == pytest.approx(0.5, rel=1e-12)

    def test_defaults_and_comments(self):
        text = "! measured on bench 2\n#\n1.5 0 0 1 0 1 0 0 0 ! inline note\n"
        doc = parse_touchstone_document(text)
        assert (doc.frequency_unit, doc.data_format, doc.resistance) == ("ghz", "ma", 50.0)
        assert doc.frequencies[0] == pytest.approx(1.5e9)

    def test_reference_resistance(self):
        sweep = parse_touchstone("# Hz S RI R 75\n1e9 0 0 1 0 1 0 0 0\n")
        assert sweep.z0 == 75.0

    def test_short_row_names_its_line(self):
        text = "# GHz S RI R 50\n" + IDENTITY_ROW + "\n2.0 0 0 1 0\n"
        with pytest.raises(TouchstoneParseError) as err:
            parse_touchstone(text)
        assert err.value.line == 3
        assert "line 3" in str(err.value)

    def test_non_numeric_value(self):
        with pytest.raises(TouchstoneParseError) as err:
            parse_touchstone("# GHz S RI R 50\n1.0 0 0 one 0 1 0 0 0\n")
        assert err.value.line == 2

    def test_missing_option_line(self):
        with pytest.raises(TouchstoneParseError):
            parse_touchstone(IDENTITY_ROW + "\n")

    def test_version_two_keywords(self):
        with pytest.raises(TouchstoneParseError) as err:
            parse_touchstone("[Version] 2.0\n# GHz S RI R 50\n" + IDENTITY_ROW + "\n")
        assert err.value.line == 1

    def test_frequencies_must_increase(self):
        with pytest.raises(TouchstoneParseError) as err:
            parse_touchstone("# GHz S RI R 50\n2.0 0 0 1 0 1 0 0 0\n" + IDENTITY_ROW + "\n")
        assert err.value.line == 3

    def test_only_s_parameters(self):
        with pytest.raises(TouchstoneParseError):
            parse_touchstone("# GHz Y RI R 50\n" + IDENTITY_ROW + "\n")

    def test_no_data(self):
        with pytest.raises(TouchstoneParseError):
            parse_touchstone("# GHz S RI R 50\n")


class TestTouchstoneWriting:

    def test_formats_describe_the_same_network(self, bare_sweep):
        parsed = {fmt: parse_touchstone(write_touchstone(bare_sweep, data_format=fmt)) for fmt in ("ri", "ma", "db")}
        for fmt in ("ma", "db"):
            np.testing.assert_allclose(parsed[fmt].s21, parsed["ri"].s21, rtol=1e-9, atol=1e-15)
            np.testing.assert_allclose(parsed[fmt].s11, parsed["ri"].s11, rtol=1e-9, atol=1e-15)
            np.testing.assert_allclose(parsed[fmt].grid, parsed["ri"].grid, rtol=1e-15)

    def test_header_and_reciprocal_columns(self, bare_sweep):
        text = write_touchstone(bare_sweep)
        lines = text.splitlines()
        assert lines[1] == "# GHZ S RI R 50"
        first = [float(v) for v in lines[2].split()]
        assert first[3:5] == first[5:7]

    def test_file_round_trip(self, bare_sweep, tmp_path):
        path = save_touchstone(bare_sweep, os.path.join(tmp_path, "nested", "bare.s2p"))
        reread = read_touchstone(path)
        np.testing.assert_allclose(reread.s21, bare_sweep.s21, rtol=1e-12, atol=1e-15)

    def test_unknown_format(self, bare_sweep):
        with pytest.raises(ConfigError):
            write_touchstone(bare_sweep, data_format="xy")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_touchstone(os.path.join(tmp_path, "absent.s2p"))


class TestSweepCsv:

    def test_header_and_floor(self):
        sweep = FrequencySweep(grid=[1e9, 2e9, 3e9], s21=[1, 0, 0.5j], s11=[0, 1, 0.5])
        text = write_sweep_csv(sweep)
        assert text.splitlines()[0] == ",".join(SWEEP_CSV_COLUMNS)
        assert text.splitlines()[2].split(",")[3] == "-200"

    def test_simulated_sweep_survives_csv(self, bare_sweep):
        reread = read_sweep_csv(write_sweep_csv(bare_sweep))
        assert np.max(np.abs(reread.s21 - bare_sweep.s21)) < 1e-9
        assert np.max(np.abs(reread.s11 - bare_sweep.s11)) < 1e-9

    def test_wrong_header(self):
        with pytest.raises(CsvFormatError):
            read_sweep_csv("f,s21_re,s21_im\n1,0,0\n")

    def test_non_numeric_cell(self):
        header = ",".join(SWEEP_CSV_COLUMNS)
        with pytest.raises(CsvFormatError):
            read_sweep_csv(f"{header}\n1e9,0.5,oops,-6,0.1,0.2\n2e9,0.5,0.1,-6,0.1,0.2\n")


class TestSensorConfig:

    def test_bundled_config(self, config_path):
        config = load_config_file(config_path)
        assert config.cell_u.x == 1.7
        assert config.cell_d.v == 2.1
        assert config.w_fd == 1.5
        assert config.cell_stack("u").w_ms == pytest.approx(0.85)
        assert config.layout.n_cells == 3
        assert config.grid()[-1] == pytest.approx(30e9)

    def test_default_m_reproduces_tank(self, config_text):
        config = load_config(config_text)
        assert config.overrides.m_u is None
        s = synthesize_cell(config.cell_u, config.cell_stack("u"), m=config.overrides.m_u)
        assert s.tank.l_i == pytest.approx(DEFAULT_TANK_L_U, rel=1e-12)

    def test_zero_thickness_names_field(self, config_text):
        with pytest.raises(ConfigError) as err:
            load_config(config_text.replace("t: 0.2", "t: 0.0"))
        assert err.value.field == "cell_u.t"

    def test_unknown_key_names_field(self, config_text):
        with pytest.raises(ConfigError) as err:
            load_config(config_text.replace("  n: 2\n\ncell_d", "  n: 2\n  width: 3\n\ncell_d"))
        assert err.value.field == "cell_u.width"

    def test_missing_key_names_field(self, config_text):
        with pytest.raises(ConfigError) as err:
            load_config(config_text.replace("  x: 1.19\n", ""))
        assert err.value.field == "cell_d.x"

    def test_microstrip_override(self, config_text):
        config = load_config(config_text.replace("  spiral_gap: coupling", "  spiral_gap: coupling\n  w_ms_u_mm: 1.2"))
        assert config.cell_stack("u").w_ms == 1.2
        assert config.cell_stack("d").w_ms == pytest.approx(0.82)

    def test_not_yaml(self):
        with pytest.raises(ConfigError):
            load_config("cell_u: [1, 2\n")

    def test_short_arm_names_v(self, config_text):
        with pytest.raises(ConfigError) as err:
            load_config(config_text.replace("v: 3.0", "v: 0.3"))
        assert err.value.field == "cell_u.v"
        assert "2·V must exceed H_S + T" in str(err.value)

    def test_tight_spiral_names_x(self, config_text):
        with pytest.raises(ConfigError) as err:
            load_config(config_text.replace("  x: 1.19\n", "  x: 0.3\n"))
        assert err.value.field == "cell_d.x"

    def test_spiral_gap_per_cell(self, config_text):
        config = load_config(config_text.replace("spiral_gap: coupling", "spiral_gap: turn_spacing"))
        assert config.spiral_gap("d") == pytest.approx(0.21)
        assert config.spiral_gap("u") == pytest.approx(0.3)

    def test_stack_holds_layers_only(self, config_text):
        config = load_config(config_text)
        assert not hasattr(config.stack, "w_ms")
        assert config.w_fd == 1.5
        assert effective_permittivity(config.cell_stack("u")) == pytest.approx(
            effective_permittivity(StackSpec(3.55, 0.508, 2.0, 1.0, 0.85)), rel=1e-12)
        assert config.with_mut(80.0).cell_stack("d").eps_m == 80.0
        assert config.with_mut(80.0).w_fd == 1.5

    def test_bad_sweep(self, config_text):
        with pytest.raises(ConfigError) as err:
            load_config(config_text.replace("step_ghz: 0.01", "step_ghz: -0.01"))
        assert err.value.field == "sweep"


class TestObservations:

    def test_bundled_calibration_set(self):
        observations = read_observations_file(os.path.join(DATA_DIR, "calibration_observations.csv"))
        assert len(observations) == 11
        assert observations[0].label == "bare"
        assert observations[0].eps_ref == 1.0
        assert observations[-1].f_u == pytest.approx(3.778984178e9)

    def test_timestamps_are_parsed(self):
        observations = read_observations_file(os.path.join(DATA_DIR, "chamber_drift.csv"))
        assert observations[0].timestamp == datetime.datetime(2025, 6, 10, 10, 0, 0)
        assert observations[0].eps_ref is None

    def test_missing_column(self):
        with pytest.raises(CsvFormatError):
            read_observations("label,f_u_ghz\nx,1.0\n")

    def test_misordered_row(self):
        with pytest.raises(CsvFormatError):
            read_observations("label,f_u_ghz,f_d_ghz\nx,3.0,2.0\n")

    def test_mut_library(self):
        library = read_mut_library(os.path.join(DATA_DIR, "mut_library.csv"))
        assert library.set_index("label").loc["water_25c", "eps"] == pytest.approx(78.3)


class TestCalibrationRecord:

    def test_record_round_trip(self, fdr_curve):
        curve = read_calibration_record(write_calibration_record(fdr_curve, source="unit"))
        assert curve == fdr_curve

    def test_record_is_deterministic(self, fdr_curve):
        text = write_calibration_record(fdr_curve)
        assert text == write_calibration_record(fdr_curve)
        assert list(json.loads(text)) == sorted(json.loads(text))

    def test_missing_coefficient(self, fdr_curve):
        raw = json.loads(write_calibration_record(fdr_curve))
        del raw["b"]
        with pytest.raises(ConfigError) as err:
            read_calibration_record(json.dumps(raw))
        assert err.value.field == "calibration.b"

    def test_not_json(self):
        with pytest.raises(ConfigError):
            read_calibration_record("a: 1")

    def test_curve_equality_keeps_metadata(self):
        curve = CalibrationCurve(a=60.2, b=-0.99, r2=0.99, domain=(5, 78.3), quantity="s_p", units="%")
        assert read_calibration_record(write_calibration_record(curve)).quantity == "s_p"
