"""
Side studies on top of an offline run: Theta methods, SCM diagnostics,
effectivity/time scatter data and the plot-data files of the reports.
"""

import logging
import time
from pathlib import Path
from typing import Dict, List

import numpy as np

from hierrb.config import ExperimentConfig
from hierrb.core.affine import exact_coercivity, exact_inf_sup
from hierrb.core.greedy import M_RULES
from hierrb.core.saturation import INITIAL_GUESSES, compute_theta
from hierrb.core.scm import min_theta_lower_bound, scm_bounds, scm_gap, scm_offline, require_converged
from hierrb.core.truth_cache import TruthCache
from hierrb.exceptions import EmptyPartitionError, StabilityBoundError
from hierrb.handlers.offline import gap_header, gap_rows, save_scm, theta_variants
from hierrb.handlers.online import open_run
from hierrb.utils.export import read_csv, write_csv, write_plot_data, write_workbook
from hierrb.utils.helpers import parallel_map

logger = logging.getLogger(__name__)

THETA_STUDY_HEADER = ["rule", "N", "M", "method", "initial_guess", "Theta", "iterations", "seconds"]


# ============ THETA ============

def run_theta_study(cfg: ExperimentConfig, workers: int = None) -> Path:
    """
    Theta_{N,M} of every Lagrange rule by the exact training ratio and by
    Dinkelbach with each initial guess, with iteration counts and timings
    """
    out, model, basis, rm, rd = open_run(cfg)
    train = cfg.training_set(model)
    solutions = TruthCache(model, train, out / "cache", workers).solutions
    tol = cfg.estimators.exclusion_tol

    variants = [("train_ratio", "zero")] + [("dinkelbach", guess) for guess in INITIAL_GUESSES]
    rows = []
    for rule in cfg.estimators.m_rules:
        d = M_RULES[rule]
        for n in range(1, min(cfg.greedy.n_max, basis.size - d) + 1):
            for method, guess in variants:
                start = time.perf_counter()
                try:
                    result = compute_theta(model, rm, basis, n, n + d, train, solutions, method, tol,
                                           initial_guess=guess, rd=rd)
                except EmptyPartitionError as e:
                    logger.warning(f"{rule}, N={n}: {e}")
                    break
                seconds = time.perf_counter() - start
                iterations = sum(len(it) for it in result.iterates)
                rows.append([rule, n, n + d, method, guess, result.theta, iterations, seconds])

    return write_csv(out / "theta_study.csv", THETA_STUDY_HEADER, rows)


# ============ SCM ============

def run_scm_study(cfg: ExperimentConfig, workers: int = None) -> Dict[str, Path]:
    """
    SCM on the SCM training set: gap history, and per training point the
    SCM bounds next to the exact constant and the min-theta bound

    The reports are written before a non-converged SCM raises ScmConvergenceError.
    """
    model = cfg.build_model()
    train = cfg.scm_training_set(model)
    out = cfg.output_directory()
    state = scm_offline(model, train, cfg.scm, workers)
    save_scm(out / "scm_study_state.npz", state)

    norm_mu = np.asarray(state.reference_mu) if state.reference_mu is not None else None
    exact = exact_coercivity if state.mode == "coercive" else exact_inf_sup
    mu_ref = np.asarray(model.metadata.get("product_mu", model.reference_mu), dtype=float)
    beta_ref = exact(model, mu_ref, norm_mu)

    def row(mu):
        lb, ub = scm_bounds(state, mu)
        try:
            min_theta = min_theta_lower_bound(model, mu, mu_ref, beta_ref)
        except StabilityBoundError:
            min_theta = None
        return [*mu, lb, exact(model, mu, norm_mu), ub, scm_gap(lb, ub), min_theta]

    rows = parallel_map(row, train.points, workers)
    header = [f"mu_{j + 1}" for j in range(model.domain.dim)] + ["lb", "exact", "ub", "gap", "min_theta"]
    reports = {
        "scm_gap": write_csv(out / "scm_study_gap.csv", gap_header(model), gap_rows(state)),
        "scm_bounds": write_csv(out / "scm_study_bounds.csv", header, rows),
    }
    violations = sum(1 for r in rows if r[-5] > r[-4] * (1 + 1e-9) or r[-4] > r[-3] * (1 + 1e-9))
    if violations:
        logger.warning(f"SCM bounds violated at {violations} training points")
    require_converged(state)
    return reports


# ============ SCATTER / FIGURES ============

def _float(cell: str):
    return float(cell) if cell != "" else None


def scatter_rows(header: List[str], rows: List[List[str]], estimator: str) -> List[list]:
    """(time, effectivity) per evaluated parameter; rows without a defined effectivity are skipped"""
    col = {name: j for j, name in enumerate(header)}
    points = []
    for row in rows:
        err = _float(row[col["err"]])
        if estimator == "std":
            t, value = _float(row[col["t_std"]]), _float(row[col["delta_std"]])
            eta = value / err if value is not None and err and err > 0 and row[col["flag"]] != "zero_error" else None
        else:
            t, eta = _float(row[col["t_hier"]]), _float(row[col["eta"]])
        if t is not None and eta is not None:
            points.append([t, eta])
    return points


def run_scatter(cfg: ExperimentConfig) -> Dict[str, Path]:
    """Scatter data (time, eta) of the standard estimator and of every hierarchical variant"""
    out = cfg.output_directory()
    figures = out / "figures"
    files = {}
    for i, variant in enumerate(theta_variants(cfg)):
        header, rows = read_csv(out / f"effectivity_{variant}.csv")
        if i == 0:
            files["scatter_std"] = write_plot_data(figures / "scatter_std.dat", ["time", "eta"],
                                                   scatter_rows(header, rows, "std"))
        name = f"scatter_hier_{variant}"
        files[name] = write_plot_data(figures / f"{name}.dat", ["time", "eta"], scatter_rows(header, rows, "hier"))
    return files


def emit_figures(cfg: ExperimentConfig) -> Dict[str, Path]:
    """
    Plot-data files (N err std hier per estimator variant, N M Theta per
    Theta table, time eta scatter) and summary.xlsx with every CSV report
    """
    out = cfg.output_directory()
    figures = out / "figures"
    files = {}
    for variant in theta_variants(cfg):
        _, rows = read_csv(out / f"errors_{variant}.csv")
        files[f"errors_{variant}"] = write_plot_data(figures / f"errors_{variant}.dat", ["N", "err", "std", "hier"],
                                                     [[int(r[0]), *(_float(c) for c in r[1:])] for r in rows])
        _, rows = read_csv(out / f"theta_{variant}.csv")
        files[f"theta_{variant}"] = write_plot_data(figures / f"theta_{variant}.dat", ["N", "M", "Theta"],
                                                    [[int(r[0]), int(r[1]), float(r[2])] for r in rows])
    files.update(run_scatter(cfg))

    sheets = {}
    for path in sorted(out.glob("*.csv")):
        header, rows = read_csv(path)
        sheets[path.stem] = (header, [[_cell(c) for c in r] for r in rows])
    files["summary"] = write_workbook(out / "summary.xlsx", sheets)
    return files


def _cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text
