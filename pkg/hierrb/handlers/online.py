"""
Online evaluation: per parameter and basis size the truth error, the
standard estimator, the hierarchical estimator (raw and certified), the
effectivity and the online wall time of both estimators.
"""

import logging
from pathlib import Path
from typing import Dict, List

import numpy as np

from hierrb.config import ExperimentConfig
from hierrb.core.basis import rb_solve
from hierrb.core.estimators import (EFFECTIVITY_HEADER, ResidualData, delta_hier, delta_std, delta_std_certified,
                                    effectivity, residual_dual_norm)
from hierrb.core.greedy import M_RULES, stability_bound
from hierrb.core.truth_cache import TruthCache, truth_errors
from hierrb.exceptions import ArtifactError
from hierrb.handlers.offline import Manifest, load_scm, load_space, read_theta_table, theta_variants
from hierrb.utils.container import load_container
from hierrb.utils.export import write_csv
from hierrb.utils.helpers import median_time, parallel_map

logger = logging.getLogger(__name__)

AGGREGATE_HEADER = ["N", "err", "std", "hier"]


def open_run(cfg: ExperimentConfig):
    """(run directory, truth model, basis, reduced model, residual data) of a complete offline run"""
    out = cfg.output_directory()
    manifest = Manifest.read(out)
    if manifest is None or not manifest.complete:
        raise ArtifactError(f"no complete offline run in {out}")
    if manifest.config_hash != cfg.config_hash():
        raise ArtifactError(f"offline run in {out} belongs to another config")

    model = cfg.build_model()
    if manifest.model and manifest.model != model.fingerprint():
        raise ArtifactError("truth model differs from the one of the offline run")
    basis, rm, _ = load_space(out / "basis.npz", model)
    arrays, meta = load_container(out / "residual.npz")
    rd = ResidualData.from_arrays(arrays, model, meta.get("reference_mu"))
    return out, model, basis, rm, rd


def _pairs(cfg: ExperimentConfig, out: Path, model, basis, rm, variant: str):
    """(N, M, reduced model holding both spaces) for one estimator variant"""
    if variant in M_RULES:
        d = M_RULES[variant]
        return [(n, n + d, rm) for n in range(1, min(cfg.greedy.n_max, basis.size - d) + 1)]
    if variant == "greedy":
        space, rm_m, _ = load_space(out / "basis_hier_m.npz", model)
        return [(basis.size, space.size, rm_m)]
    k = int(variant.removeprefix("taylor_K"))
    pairs = []
    for n in range(1, min(cfg.greedy.n_max, basis.size) + 1):
        space, rm_k, _ = load_space(out / f"taylor_K{k}_N{n}.npz", model)
        if space.size > n:
            pairs.append((n, space.size, rm_k))
    return pairs


def run_online_eval(cfg: ExperimentConfig, sample: str = "test", workers: int = None) -> Dict[str, Path]:
    """
    Evaluate every estimator variant of a complete offline run

    Args:
        cfg: experiment config (the run directory follows from it)
        sample: "test" (random test set) or "train" (training set, where the
            effectivity bound must hold and a violation raises)
        workers: thread count of the per-parameter map

    Returns:
        {report name: path}
    """
    if sample not in ("test", "train"):
        raise ValueError(f"unknown sample '{sample}', expected test or train")
    out, model, basis, rm, rd = open_run(cfg)

    scm_state = load_scm(out / "scm_state.npz", model) if cfg.estimators.beta_source == "scm" else None
    beta = stability_bound(model, cfg.estimators.beta_source, scm_state)
    precomputed = cfg.estimators.beta_source == "exact_eig"

    on_training = sample == "train"
    samples = cfg.training_set(model) if on_training else cfg.test_set(model)
    if not on_training:
        samples.to_csv(out / "test.csv")
    cache = TruthCache(model, samples, out / "cache", workers)
    solutions = cache.solutions
    norms = cache.norms
    betas = parallel_map(beta, samples.points, workers) if precomputed else None
    repeats = cfg.timing.repeats

    reports = {}
    for variant in theta_variants(cfg):
        thetas = read_theta_table(out, variant)
        pairs = [(n, m, rm_pair) for n, m, rm_pair in _pairs(cfg, out, model, basis, rm, variant) if n in thetas]

        def evaluate(i):
            mu = samples[i]
            b = betas[i] if precomputed else None
            rows = []
            for n, m, rm_pair in pairs:
                c_n = rb_solve(rm_pair, mu, n)
                # every comparison space keeps X_N as its leading columns
                err = float(truth_errors(model, solutions[:, [i]], mu[None, :], basis, c_n[None, :])[0])

                if precomputed:
                    d_std, t_std = median_time(lambda: residual_dual_norm(rd, mu, c_n, model, basis) / b, repeats)
                else:
                    d_std, t_std = median_time(lambda: delta_std(rd, mu, c_n, beta(mu), model, basis), repeats)
                # equals d_std unless the X-product depends on mu
                d_cert = delta_std_certified(rd, mu, c_n, b if precomputed else beta(mu))

                def hier():
                    return delta_hier(rm_pair, mu, rb_solve(rm_pair, mu, n), rb_solve(rm_pair, mu, m))

                d_hier, t_hier = median_time(hier, repeats)
                record = effectivity(mu, n, m, err, d_hier, thetas[n], d_std, t_std, t_hier,
                                     on_training=on_training, zero_tol=1e-10 * norms[i], delta_std_cert=d_cert)
                rows.append(record.as_row())
            return rows

        logger.info(f"evaluating {variant}: {len(pairs)} (N, M) pairs on {len(samples)} {sample} parameters")
        rows = [row for chunk in parallel_map(evaluate, range(len(samples)), workers) for row in chunk]
        rows.sort(key=lambda r: (r[model.domain.dim], tuple(r[: model.domain.dim])))

        header = [f"mu_{j + 1}" for j in range(model.domain.dim)] + EFFECTIVITY_HEADER
        suffix = "_train" if on_training else ""
        name = f"effectivity_{variant}{suffix}"
        reports[name] = write_csv(out / f"{name}.csv", header, rows)
        name = f"errors_{variant}{suffix}"
        reports[name] = write_csv(out / f"{name}.csv", AGGREGATE_HEADER, aggregate(rows, model.domain.dim))
    return reports


def aggregate(rows: List[list], dim: int) -> List[list]:
    """Mean truth error, standard and certified hierarchical estimator per N"""
    by_n = {}
    for row in rows:
        n = row[dim]
        err, d_std, d_cert = row[dim + 2], row[dim + 3], row[dim + 6]
        by_n.setdefault(n, []).append((err, d_std, d_cert))
    table = []
    for n in sorted(by_n):
        values = by_n[n]
        err = float(np.mean([v[0] for v in values]))
        std = float(np.mean([v[1] for v in values])) if all(v[1] is not None for v in values) else None
        hier = float(np.mean([v[2] for v in values])) if all(v[2] is not None for v in values) else None
        table.append([n, err, std, hier])
    return table
