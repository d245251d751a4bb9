"""
SpiralSense — Structure Study
-----------------------------
1. Simulates a tank scenario over a grid of cell counts and spacings.
2. Measures the U and D notches of every layout.
3. Summarizes notch drift, null depth and FBW per cell count.
4. Recommends the fewest cells that reach a target null depth.
"""

import logging
import os

import numpy as np
import pandas as pd

from src.network_sim import (BASELINE_DCTC_MM, DEFAULT_DEPTH_THRESHOLD_DB, find_notches, notch_near,
                             scenario_frequencies, simulate_scenario)

log = logging.getLogger(__name__)

OUTPUT_FILE = "outputs/structure_study.csv"
CELL_COUNTS = range(2, 9)
SPACINGS_MM = tuple(range(6, 27, 2))
STUDY_COLUMNS = ["n_cells", "d_ctc_mm", "branch", "f_notch", "null_depth_db", "fbw_10db", "q_factor", "resolved"]


# ------------------------------------------------------------
# 1️⃣ Sweep the layouts
# ------------------------------------------------------------
def run_structure_study(scenario, cell_counts=CELL_COUNTS, spacings=SPACINGS_MM, grid=None,
                        depth_threshold_db=DEFAULT_DEPTH_THRESHOLD_DB):
    """One row per (n_cells, d_ctc, branch) with the notch nearest the branch's tank resonance."""
    targets = dict(zip(("U", "D"), scenario_frequencies(scenario)))
    rows = []
    for n_cells in cell_counts:
        for d_ctc in spacings:
            sweep = simulate_scenario(scenario, n_cells=n_cells, d_ctc=d_ctc, grid=grid)
            notches = find_notches(sweep, depth_threshold_db)
            for branch, f0 in targets.items():
                notch = notch_near(notches, f0)
                if notch is None:
                    log.warning("no %s notch near %.4f GHz for %d cells at %g mm", branch, f0 / 1e9, n_cells, d_ctc)
                    rows.append({"n_cells": n_cells, "d_ctc_mm": d_ctc, "branch": branch, "f_notch": np.nan,
                                 "null_depth_db": np.nan, "fbw_10db": np.nan, "q_factor": np.nan,
                                 "resolved": False})
                    continue
                rows.append({"n_cells": n_cells, "d_ctc_mm": d_ctc, "branch": branch, "f_notch": notch.f_notch,
                             "null_depth_db": notch.null_depth, "fbw_10db": notch.fbw_10db,
                             "q_factor": notch.q_factor, "resolved": notch.resolved})
    study = pd.DataFrame(rows, columns=STUDY_COLUMNS)
    log.debug("structure study: %d layouts", len(study) // 2)
    return study


# ------------------------------------------------------------
# 2️⃣ Summaries
# ------------------------------------------------------------
def summarize_study(study):
    """Per branch and cell count: notch drift across spacings, mean depth and FBW."""
    summary = (
        study.groupby(["branch", "n_cells"], as_index=False)
             .agg(f_min=("f_notch", "min"), f_max=("f_notch", "max"),
                  mean_depth_db=("null_depth_db", "mean"), mean_fbw_10db=("fbw_10db", "mean"))
    )
    summary["f_spread"] = summary["f_max"] - summary["f_min"]
    return summary.sort_values(["branch", "n_cells"], ascending=[False, True]).reset_index(drop=True)


def cell_count_trends(study, d_ctc=BASELINE_DCTC_MM):
    """Whether depth deepens and FBW widens strictly with each added cell, per branch."""
    at_spacing = study[study["d_ctc_mm"] == d_ctc].sort_values("n_cells")
    trends = {}
    for branch, group in at_spacing.groupby("branch"):
        trends[branch] = {
            "depth_deepens": bool(np.all(np.diff(group["null_depth_db"].to_numpy()) < 0)),
            "fbw_widens": bool(np.all(np.diff(group["fbw_10db"].to_numpy()) > 0)),
        }
    return trends


def recommend_layout(study, min_depth_db=-60.0, d_ctc=BASELINE_DCTC_MM):
    """Fewest cells at spacing d_ctc whose U and D nulls both reach min_depth_db."""
    at_spacing = study[study["d_ctc_mm"] == d_ctc]
    worst = at_spacing.groupby("n_cells")["null_depth_db"].max()
    deep_enough = worst[worst <= min_depth_db]
    if deep_enough.empty:
        return None
    return int(deep_enough.index.min()), d_ctc


# ------------------------------------------------------------
# 3️⃣ Save results
# ------------------------------------------------------------
def save_study(df, path=OUTPUT_FILE):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    df.to_csv(path, index=False, float_format="%.10g")
    return path
