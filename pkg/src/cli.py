"""
SpiralSense — Command-Line Pipeline
-----------------------------------
Subcommands:

    design        predict the bare notch pair from cell geometry
    simulate      simulate |S21| of the loaded line and report notches
    extract       measured .s2p → notch pair → permittivity
    calibrate     fit FDR_p / S_p power laws from labelled observations
    differential  check drift cancellation over a time series

Run with:
    python3 -m src.cli <subcommand> [options]

Exit status: 0 success, 1 invalid input, 2 computation failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.circuit_params import DEFAULT_TANK_L_D, DEFAULT_TANK_L_U, LineTank, synthesize_cell
from src.dataio import (DEFAULT_CONFIG_FILE, MUT_LIBRARY_FILE, load_config_file, read_calibration_file,
                        read_mut_library, read_observations_file, read_touchstone, save_calibration_record,
                        save_sweep_csv, save_touchstone)
from src.errors import ExtractionError, InputValidationError, SensorError
from src.network_sim import (BARE_SCENARIO, DEFAULT_DEPTH_THRESHOLD_DB, SCENARIOS, ArrayLayout, TankScenario,
                             find_notches, make_grid, scenario_frequencies, select_notch_pair, simulate_sweep)
from src.sensing import (BareReference, NotchPairObservation, differential_fdr, differential_value,
                         drift_cancellation_report, fit_power_law, invert_permittivity, proposed_sensitivity,
                         sensitivity_table)
from src.structure_study import CELL_COUNTS, SPACINGS_MM, cell_count_trends, recommend_layout, run_structure_study, \
    save_study, summarize_study

log = logging.getLogger(__name__)

OUTPUT_DIR = "outputs"


@dataclass
class CommandOutcome:
    status: int = 0
    paths: list = field(default_factory=list)
    results: dict = field(default_factory=dict)


def _save_frame(df, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    print(f"💾 Saved → {path}")
    return path


def _parse_float_list(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputValidationError(f"{what}: expected comma-separated numbers, got {text!r}") from None


# ------------------------------------------------------------
# 1️⃣ design
# ------------------------------------------------------------
def synthesize_pair(config):
    """Synthesize the U and D cells of a configuration."""
    ov = config.overrides
    return {
        "U": synthesize_cell(config.cell_u, config.cell_stack("u"), a_avg=ov.a_avg_u, m=ov.m_u,
                             tank_l=DEFAULT_TANK_L_U, spiral_gap=ov.spiral_gap),
        "D": synthesize_cell(config.cell_d, config.cell_stack("d"), a_avg=ov.a_avg_d, m=ov.m_d,
                             tank_l=DEFAULT_TANK_L_D, spiral_gap=ov.spiral_gap),
    }


def parse_bare(text, depth_threshold_db=DEFAULT_DEPTH_THRESHOLD_DB, eps_b=1.0):
    """'f_bu,f_bd' in GHz, or the path of a bare-state .s2p file."""
    if os.path.exists(text):
        pair = select_notch_pair(find_notches(read_touchstone(text), depth_threshold_db))
        return BareReference(pair[0].f_notch, pair[1].f_notch, eps_b)
    values = _parse_float_list(text, "--bare")
    if len(values) != 2:
        raise InputValidationError(f"--bare needs 'f_bu,f_bd' in GHz or an existing .s2p path, got {text!r}")
    return BareReference(values[0] * 1e9, values[1] * 1e9, eps_b)


def cmd_design(args):
    print(f"📂 Loading configuration from {args.config}")
    config = load_config_file(args.config)
    if args.eps_m is not None:
        config = config.with_mut(args.eps_m)
    cells = synthesize_pair(config)

    rows = []
    for branch, s in cells.items():
        c = s.cell
        rows.append({"branch": branch, "eps_eff_r": s.eps_eff_rel, "L_SP_nH": c.l_sp * 1e9, "C_SP_fF": c.c_sp * 1e15,
                     "L_L_nH": c.l_l * 1e9, "C_L_fF": c.c_l * 1e15, "M_nH": c.m * 1e9, "L_S_nH": c.l_s * 1e9,
                     "C_S_fF": c.c_s * 1e15, "tank_L_pH": s.tank.l_i * 1e12, "tank_C_pF": s.tank.c_i * 1e12,
                     "f_GHz": s.frequency / 1e9})
    table = pd.DataFrame(rows)
    f_u, f_d = cells["U"].frequency, cells["D"].frequency

    print(f"\n🧮 Synthesized elements (ε_M = {config.stack.eps_m:g}):")
    print(table.to_string(index=False, float_format=lambda v: f"{v:.6g}"))
    for branch, s in cells.items():
        print(f"   {branch}: " + "; ".join(s.notes))
    print(f"\n✅ Predicted notches: f_U = {f_u / 1e9:.4f} GHz, f_D = {f_d / 1e9:.4f} GHz, "
          f"f_D/f_U = {f_d / f_u:.4f}, Δf_B = {(f_d - f_u) / 1e9:.4f} GHz")
    if f_u >= f_d:
        print("⚠️ U notch is not below the D notch for this geometry")

    results = {"f_u": f_u, "f_d": f_d, "eps_eff_r": {b: s.eps_eff_rel for b, s in cells.items()}, "cells": cells}
    if args.bare:
        bare = parse_bare(args.bare)
        print(f"📏 Measured Δf_B = {bare.delta_f_b / 1e9:.4f} GHz "
              f"(theory − measured = {(f_d - f_u - bare.delta_f_b) / 1e6:+.1f} MHz)")
        results["delta_f_b_measured"] = bare.delta_f_b

    paths = [_save_frame(table, os.path.join(args.out, "design_elements.csv"))]
    return CommandOutcome(paths=paths, results=results)


# ------------------------------------------------------------
# 2️⃣ simulate
# ------------------------------------------------------------
def parse_tanks(text):
    """Preset name, or 'L_U pH, C_U pF, L_D pH, C_D pF[, line nH, line pF]' → TankScenario."""
    if text in SCENARIOS:
        return SCENARIOS[text]
    values = _parse_float_list(text, "--tanks")
    if len(values) not in (4, 6):
        raise InputValidationError(f"--tanks needs a preset ({', '.join(SCENARIOS)}) or 4 or 6 numbers, got {text!r}")
    if any(v <= 0 for v in values):
        raise InputValidationError("--tanks values must be positive")
    line_l, line_c = (values[4] * 1e-9, values[5] * 1e-12) if len(values) == 6 else \
        (BARE_SCENARIO.line_l, BARE_SCENARIO.line_c)
    return TankScenario("explicit", LineTank(values[0] * 1e-12, values[1] * 1e-12),
                        LineTank(values[2] * 1e-12, values[3] * 1e-12), line_l=line_l, line_c=line_c,
                        grid_step=BARE_SCENARIO.grid_step, grid_stop=BARE_SCENARIO.grid_stop)


def _resolve_simulation(args):
    """(scenario, layout, grid) from --tanks or the synthesized configuration."""
    if args.tanks:
        scenario = parse_tanks(args.tanks)
        base = scenario.layout()
        grid_defaults = (scenario.grid_step, scenario.grid_stop, scenario.grid_step)
    else:
        print(f"📂 Loading configuration from {args.config}")
        config = load_config_file(args.config)
        cells = synthesize_pair(config)
        base = config.layout
        scenario = TankScenario("synthesized", cells["U"].tank, cells["D"].tank, line_l=base.line_l,
                                line_c=base.line_c, grid_step=config.sweep[2], grid_stop=config.sweep[1])
        grid_defaults = config.sweep

    layout = ArrayLayout(n_cells=args.cells if args.cells is not None else base.n_cells,
                         d_ctc=args.dctc_mm if args.dctc_mm is not None else base.d_ctc,
                         line_l=base.line_l, line_c=base.line_c, z0=base.z0)
    start = args.grid_start * 1e9 if args.grid_start is not None else grid_defaults[0]
    stop = args.grid_stop * 1e9 if args.grid_stop is not None else grid_defaults[1]
    step = args.grid_step * 1e9 if args.grid_step is not None else grid_defaults[2]
    return scenario, layout, make_grid(start, stop, step)


def _notch_frame(notches):
    return pd.DataFrame([{"f_notch_hz": n.f_notch, "null_depth_db": n.null_depth, "fbw_10db_pct": n.fbw_10db,
                          "q_factor": n.q_factor, "resolved": n.resolved} for n in notches],
                        columns=["f_notch_hz", "null_depth_db", "fbw_10db_pct", "q_factor", "resolved"])


def cmd_simulate(args):
    scenario, layout, grid = _resolve_simulation(args)
    f_u0, f_d0 = scenario_frequencies(scenario)
    print(f"⚙️ Simulating {layout.n_cells} cell pair(s) at {layout.d_ctc:g} mm over {grid.size} points "
          f"({grid[0] / 1e9:g}–{grid[-1] / 1e9:g} GHz)")
    sweep = simulate_sweep([(scenario.tank_u, scenario.tank_d)], layout, grid)
    for message in sweep.warnings:
        print(f"⚠️ {message}")
    notches = find_notches(sweep, args.threshold_db)

    frame = _notch_frame(notches)
    print(f"\n📉 {len(notches)} notch(es) below {args.threshold_db:g} dB:")
    if not frame.empty:
        print(frame.to_string(index=False, float_format=lambda v: f"{v:.6g}"))
    if any(not n.resolved for n in notches):
        print("⚠️ Some band edges fall outside the sweep; their FBW/Q are partial")

    results = {"notches": notches, "sweep": sweep, "coarse": sweep.coarse}
    print(f"🧮 Tank resonances: f_U = {f_u0 / 1e9:.4f} GHz, f_D = {f_d0 / 1e9:.4f} GHz "
          f"(Δf_B theory = {(f_d0 - f_u0) / 1e9:.4f} GHz)")
    if len(notches) >= 2:
        pair = select_notch_pair(notches)
        results["pair"] = pair
        print(f"✅ Simulated pair: {pair[0].f_notch / 1e9:.4f} / {pair[1].f_notch / 1e9:.4f} GHz "
              f"(Δf_B sim = {(pair[1].f_notch - pair[0].f_notch) / 1e9:.4f} GHz, "
              f"Q = {pair[0].q_factor:.4g} / {pair[1].q_factor:.4g})")

    paths = [save_sweep_csv(sweep, os.path.join(args.out, "sweep.csv"))]
    print(f"💾 Saved → {paths[0]}")
    paths.append(_save_frame(frame, os.path.join(args.out, "notches.csv")))
    if args.touchstone:
        paths.append(save_touchstone(sweep, os.path.join(args.out, "sweep.s2p"), data_format=args.format))
        print(f"💾 Saved → {paths[-1]}")

    if args.study:
        cell_counts = [int(v) for v in _parse_float_list(args.study_cells, "--study-cells")] \
            if args.study_cells else list(CELL_COUNTS)
        spacings = _parse_float_list(args.study_spacings, "--study-spacings") \
            if args.study_spacings else list(SPACINGS_MM)
        print(f"\n🔬 Structure study: cells {cell_counts}, spacings {spacings} mm")
        study = run_structure_study(scenario, cell_counts=cell_counts, spacings=spacings, grid=grid,
                                    depth_threshold_db=args.threshold_db)
        summary = summarize_study(study)
        print(summary.to_string(index=False, float_format=lambda v: f"{v:.6g}"))
        baseline = layout.d_ctc if layout.d_ctc in spacings else spacings[len(spacings) // 2]
        trends = cell_count_trends(study, d_ctc=baseline)
        for branch, trend in trends.items():
            mark = "✅" if trend["depth_deepens"] and trend["fbw_widens"] else "⚠️"
            print(f"{mark} {branch}: null depth deepens = {trend['depth_deepens']}, FBW widens = {trend['fbw_widens']}"
                  f" (d_ctc = {baseline:g} mm)")
        recommended = recommend_layout(study, d_ctc=baseline)
        if recommended:
            print(f"🏆 Recommended layout: {recommended[0]} cells at {recommended[1]:g} mm")
        results.update({"study": study, "summary": summary, "trends": trends, "recommended": recommended})
        paths.append(save_study(study, os.path.join(args.out, "structure_study.csv")))
        print(f"💾 Saved → {paths[-1]}")
        paths.append(_save_frame(summary, os.path.join(args.out, "structure_summary.csv")))

    return CommandOutcome(paths=paths, results=results)


# ------------------------------------------------------------
# 3️⃣ extract
# ------------------------------------------------------------
def cmd_extract(args):
    print(f"📂 Reading measured sweep {args.s2p}")
    sweep = read_touchstone(args.s2p)
    notches = find_notches(sweep, args.threshold_db)
    if len(notches) < 2:
        raise ExtractionError(f"found {len(notches)} notch(es) below {args.threshold_db:g} dB in {args.s2p}; need 2")
    pair = select_notch_pair(notches)
    obs = NotchPairObservation(pair[0].f_notch, pair[1].f_notch, label=os.path.basename(args.s2p))
    bare = parse_bare(args.bare, args.threshold_db, args.eps_b)
    curve = read_calibration_file(args.calibration)
    if curve.quantity != "fdr_p":
        raise InputValidationError(f"calibration record holds {curve.quantity!r}; extraction needs an 'fdr_p' curve")

    d_p = abs(differential_value(obs) - bare.delta_f_b)
    eps = invert_permittivity(d_p, curve, bare.eps_b)
    if eps != bare.eps_b:
        _, fdr_p = differential_fdr(obs, bare, eps)
    else:
        fdr_p = 0.0
    s_p = proposed_sensitivity(fdr_p, bare.delta_f_b)
    in_domain = curve.covers(eps)

    print(f"📉 Notch pair: f_U = {obs.f_u / 1e9:.4f} GHz ({pair[0].null_depth:.1f} dB), "
          f"f_D = {obs.f_d / 1e9:.4f} GHz ({pair[1].null_depth:.1f} dB)")
    print(f"📏 Bare reference: {bare.f_bu / 1e9:.4f} / {bare.f_bd / 1e9:.4f} GHz, Δf_B = {bare.delta_f_b / 1e9:.4f} GHz")
    print(f"✅ D_p = {d_p / 1e9:.4f} GHz → ε = {eps:.3f} "
          f"(calibrated {curve.domain[0]:g}–{curve.domain[1]:g}), FDR_p = {fdr_p / 1e6:.2f} MHz, S_p = {s_p:.3f}%")

    frame = pd.DataFrame([{"label": obs.label, "f_u_hz": obs.f_u, "f_d_hz": obs.f_d,
                           "depth_u_db": pair[0].null_depth, "depth_d_db": pair[1].null_depth,
                           "f_bu_hz": bare.f_bu, "f_bd_hz": bare.f_bd, "d_p_hz": d_p, "eps": eps,
                           "fdr_p_hz": fdr_p, "s_p_pct": s_p, "domain_min": curve.domain[0],
                           "domain_max": curve.domain[1], "in_domain": in_domain}])
    path = _save_frame(frame, os.path.join(args.out, "extraction.csv"))
    return CommandOutcome(paths=[path], results={"eps": eps, "d_p": d_p, "fdr_p": fdr_p, "s_p": s_p, "pair": pair,
                                                 "in_domain": in_domain})


# ------------------------------------------------------------
# 4️⃣ calibrate
# ------------------------------------------------------------
def _fill_from_library(observations, library_path):
    if not library_path or not os.path.exists(library_path):
        return observations
    library = read_mut_library(library_path)
    eps_by_label = dict(zip(library["label"], library["eps"]))
    filled = []
    for obs in observations:
        if obs.eps_ref is None and obs.label in eps_by_label:
            log.debug("ε for %s taken from the MUT library", obs.label)
            obs = NotchPairObservation(obs.f_u, obs.f_d, obs.label, float(eps_by_label[obs.label]), obs.timestamp)
        filled.append(obs)
    return filled


def _bare_from_observations(observations, eps_b=1.0):
    for obs in observations:
        if obs.eps_ref == eps_b:
            return BareReference.from_observation(obs, eps_b)
    raise InputValidationError(f"no bare row (eps_ref = {eps_b:g}) among the observations; pass --bare")


def cmd_calibrate(args):
    print(f"📂 Loading observations from {args.observations}")
    observations = _fill_from_library(read_observations_file(args.observations), args.library)
    bare = parse_bare(args.bare, eps_b=args.eps_b) if args.bare else _bare_from_observations(observations, args.eps_b)
    table = sensitivity_table(observations, bare)
    if len(table) < 3:
        raise InputValidationError(f"calibration needs at least 3 labelled MUT observations, got {len(table)}")
    print(f"✅ {len(table)} labelled observations, Δf_B = {bare.delta_f_b / 1e9:.4f} GHz")
    print(table[["label", "eps", "d_p_hz", "fdr_p_hz", "s_p_pct"]]
          .to_string(index=False, float_format=lambda v: f"{v:.6g}"))

    source = os.path.basename(args.observations)
    eps = table["eps"].to_numpy()
    fdr_curve = fit_power_law(np.column_stack([eps, table["fdr_p_hz"]]), quantity="fdr_p", units="Hz",
                              eps_b=bare.eps_b, delta_f_b=bare.delta_f_b)
    sp_curve = fit_power_law(np.column_stack([eps, table["s_p_pct"]]), quantity="s_p", units="%",
                             eps_b=bare.eps_b, delta_f_b=bare.delta_f_b)
    print(f"\n📈 FDR_p = {fdr_curve.a / 1e9:.4f} GHz · ε^{fdr_curve.b:.4f}  (R² = {fdr_curve.r2:.4f})")
    print(f"📈 S_p   = {sp_curve.a:.4f} % · ε^{sp_curve.b:.4f}  (R² = {sp_curve.r2:.4f})")

    paths = [
        save_calibration_record(fdr_curve, os.path.join(args.out, "calibration_fdr_p.json"), source=source),
        save_calibration_record(sp_curve, os.path.join(args.out, "calibration_s_p.json"), source=source),
    ]
    for path in paths:
        print(f"💾 Saved → {path}")
    paths.append(_save_frame(table, os.path.join(args.out, "sensitivity_table.csv")))
    return CommandOutcome(paths=paths, results={"fdr_p": fdr_curve, "s_p": sp_curve, "table": table})


# ------------------------------------------------------------
# 5️⃣ differential
# ------------------------------------------------------------
def cmd_differential(args):
    """Rows sharing a label form one time series; each series gets its own verdict."""
    print(f"📂 Loading time series from {args.observations}")
    observations = read_observations_file(args.observations)
    if len(observations) < 2:
        raise InputValidationError(f"drift report needs at least 2 observations, got {len(observations)}")
    groups = {}
    for obs in observations:
        groups.setdefault(obs.label, []).append(obs)

    reports, frames = {}, []
    for label, series in groups.items():
        report = drift_cancellation_report(series, rtol=args.rtol)
        reports[label] = report
        frames.append(report.table.assign(spread_hz=report.spread, passed=report.passed))
        print(f"\n🧪 {label}: {len(series)} observations, DIFF = {report.table['diff_hz'].iloc[0] / 1e9:.6f} GHz, "
              f"common-mode drift removed = {report.common_mode / 1e6:.3f} MHz")
        if report.passed:
            print(f"✅ PASS: DIFF spread {report.spread:.3g} Hz; common-mode drift cancelled")
        else:
            print(f"⚠️ FAIL: differential-mode residual of {report.spread / 1e6:.3f} MHz survives cancellation")

    path = _save_frame(pd.concat(frames, ignore_index=True), os.path.join(args.out, "drift_report.csv"))
    return CommandOutcome(paths=[path], results={"reports": reports,
                                                 "passed": all(r.passed for r in reports.values())})


# ------------------------------------------------------------
# 6️⃣ Main
# ------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    """Usage errors become InputValidationError so they exit with status 1."""

    def error(self, message):
        raise InputValidationError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="spiralsense", description="Differential spiral-resonator sensor toolkit")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p):
        p.add_argument("--out", default=OUTPUT_DIR, help="output directory")

    def add_threshold(p):
        p.add_argument("--threshold-db", type=float, default=DEFAULT_DEPTH_THRESHOLD_DB,
                       help="notch detection level (dB)")

    p = sub.add_parser("design", help="predict the bare notch pair from geometry")
    p.add_argument("--config", default=DEFAULT_CONFIG_FILE)
    p.add_argument("--eps-m", type=float, default=None, help="MUT permittivity (overrides the config)")
    p.add_argument("--bare", default=None, help="measured bare pair 'f_bu,f_bd' (GHz) or .s2p")
    add_out(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="simulate |S21| and report notches")
    p.add_argument("--config", default=DEFAULT_CONFIG_FILE)
    p.add_argument("--tanks", default=None,
                   help=f"preset ({', '.join(SCENARIOS)}) or 'L_U,C_U,L_D,C_D[,line_nH,line_pF]' in pH/pF")
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--dctc-mm", type=float, default=None)
    p.add_argument("--grid-start", type=float, default=None, help="GHz")
    p.add_argument("--grid-stop", type=float, default=None, help="GHz")
    p.add_argument("--grid-step", type=float, default=None, help="GHz")
    p.add_argument("--touchstone", action="store_true", help="also write sweep.s2p")
    p.add_argument("--format", default="ri", choices=["ri", "ma", "db"])
    p.add_argument("--study", action="store_true", help="run the cell-count / spacing study")
    p.add_argument("--study-cells", default=None, help="comma-separated cell counts")
    p.add_argument("--study-spacings", default=None, help="comma-separated spacings (mm)")
    add_threshold(p)
    add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="permittivity from a measured .s2p")
    p.add_argument("--s2p", required=True)
    p.add_argument("--bare", required=True, help="'f_bu,f_bd' (GHz) or bare-state .s2p")
    p.add_argument("--calibration", required=True, help="FDR_p calibration record (JSON)")
    p.add_argument("--eps-b", type=float, default=1.0)
    add_threshold(p)
    add_out(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("calibrate", help="fit FDR_p and S_p power laws")
    p.add_argument("observations", help="CSV: label, eps_ref, f_u_ghz, f_d_ghz[, timestamp]")
    p.add_argument("--bare", default=None, help="'f_bu,f_bd' (GHz) or bare-state .s2p")
    p.add_argument("--library", default=MUT_LIBRARY_FILE, help="MUT library used to fill missing eps_ref")
    p.add_argument("--eps-b", type=float, default=1.0)
    add_out(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("differential", help="drift-cancellation report")
    p.add_argument("observations", help="CSV: label, f_u_ghz, f_d_ghz, timestamp")
    p.add_argument("--rtol", type=float, default=1e-9)
    add_out(p)
    p.set_defaults(func=cmd_differential)
    return parser


def run(argv=None):
    """Parse argv and run one subcommand; errors propagate."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(levelname)s %(name)s: %(message)s", force=True)
    else:
        logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


def main(argv=None):
    try:
        return run(argv).status
    except SensorError as err:
        print(f"❌ {err}", file=sys.stderr)
        return err.exit_status
    except OSError as err:
        message = str(err)
        print(message if message.startswith("❌") else f"❌ {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
