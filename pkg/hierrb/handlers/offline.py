"""
Offline phase of an experiment: truth cache, SCM, greedy basis, reduced
model, residual data, comparison spaces and Theta tables, all written to the
run directory together with manifest.json.
"""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import scipy

import hierrb
from hierrb.config import ExperimentConfig
from hierrb.core.affine import TruthModel
from hierrb.core.basis import ReducedBasis, ReducedModel, project
from hierrb.core.estimators import ResidualData
from hierrb.core.greedy import M_RULES, strong_greedy, weak_greedy_hier, weak_greedy_std
from hierrb.core.saturation import compute_theta
from hierrb.core.scm import ScmState, require_converged, scm_offline
from hierrb.core.taylor import TaylorConfig, build_taylor_space
from hierrb.core.truth_cache import TruthCache
from hierrb.database import Database
from hierrb.exceptions import ArtifactError, EmptyPartitionError, SaturationError
from hierrb.utils.container import load_container, save_container
from hierrb.utils.export import SMALL_EXPORT_LIMIT, export_vectors_csv, write_csv

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
THETA_HEADER = ["N", "M", "Theta", "valid"]


@dataclass
class Manifest:
    config_hash: str
    versions: dict
    model: str = ""
    phases: Dict[str, float] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    complete: bool = False
    message: str = ""

    def write(self, directory: Path):
        directory.mkdir(parents=True, exist_ok=True)
        (directory / MANIFEST).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True))

    @classmethod
    def read(cls, directory: Path) -> Optional["Manifest"]:
        path = Path(directory) / MANIFEST
        if not path.exists():
            return None
        try:
            return cls(**json.loads(path.read_text()))
        except (ValueError, TypeError) as e:
            raise ArtifactError(f"unreadable manifest {path}: {e}") from e


def versions() -> dict:
    return {"hierrb": hierrb.__version__, "numpy": np.__version__, "scipy": scipy.__version__}


# ============ ARTIFACTS ============

def save_space(path: Path, basis: ReducedBasis, rm: ReducedModel, meta: dict = None) -> Path:
    """Basis and its reduced blocks in one container"""
    arrays = {**basis.to_arrays(), **rm.to_arrays()}
    return save_container(path, arrays, {**basis.meta(), **(meta or {})})


def load_space(path: Path, model: TruthModel):
    arrays, meta = load_container(path)
    return ReducedBasis.from_arrays(arrays, meta), ReducedModel.from_arrays(arrays, model), meta


def theta_variants(cfg: ExperimentConfig) -> List[str]:
    variants = list(cfg.estimators.m_rules)
    variants += [f"taylor_K{k}" for k in cfg.estimators.taylor_orders]
    if cfg.greedy.sampling == "weak_hier":
        variants.append("greedy")
    return variants


def read_theta_table(directory: Path, variant: str) -> Dict[int, float]:
    """{N: Theta} from theta_<variant>.csv"""
    path = Path(directory) / f"theta_{variant}.csv"
    if not path.exists():
        raise ArtifactError(f"Theta table missing: {path}")
    lines = path.read_text().splitlines()[1:]
    table = {}
    for line in lines:
        n, _, theta, _ = line.split(",")
        table[int(n)] = float(theta)
    return table


class _Run:
    """Phase timing and artifact bookkeeping of one offline run"""

    def __init__(self, directory: Path, manifest: Manifest):
        self.directory = directory
        self.manifest = manifest
        self.dim = None

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        logger.info(f"offline phase '{name}' started")
        yield
        self.manifest.phases[name] = time.perf_counter() - start
        logger.info(f"offline phase '{name}' done in {self.manifest.phases[name]:.2f}s")

    def artifact(self, path: Path) -> Path:
        self.manifest.artifacts.append(str(Path(path).relative_to(self.directory)))
        return path


# ============ THETA TABLES ============

def lagrange_theta_table(model, basis, rm, train, solutions, rule, cfg, rd=None) -> List[list]:
    d = M_RULES[rule]
    rows = []
    for n in range(1, basis.size - d + 1):
        try:
            result = compute_theta(model, rm, basis, n, n + d, train, solutions, cfg.estimators.theta_method,
                                   cfg.estimators.exclusion_tol, initial_guess=cfg.estimators.initial_guess, rd=rd)
        except EmptyPartitionError as e:
            logger.warning(f"Theta_{{{n},{n + d}}} undefined: {e}")
            continue
        rows.append([n, n + d, result.theta, result.valid])
    return rows


def taylor_spaces(model, basis, k, n_max, drop_tol, snapshots, workers):
    """Comparison space of every N: first N snapshots plus their derivatives up to order k"""
    params = basis.snapshot_params()
    for n in range(1, min(n_max, basis.size) + 1):
        space = build_taylor_space(model, params[:n], TaylorConfig(k, model.domain.dim), basis.prefix(n),
                                   drop_tol, solutions=snapshots[:n], workers=workers)
        yield n, space


# ============ OFFLINE ============

def run_offline(cfg: ExperimentConfig, db: Database = None, force: bool = False, workers: int = None) -> Manifest:
    """
    Run the offline phase of `cfg`

    A complete run with the same config hash in the same directory is reused
    unless force is set. A failing run leaves a manifest with complete=false
    and a failed registry entry; the error is re-raised.
    """
    out = cfg.output_directory()
    config_hash = cfg.config_hash()
    existing = Manifest.read(out)
    if existing is not None and existing.complete and existing.config_hash == config_hash and not force:
        logger.info(f"offline run {config_hash[:12]} already complete in {out}, skipped")
        return existing

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    manifest = Manifest(config_hash, versions())
    manifest.write(out)
    run = _Run(out, manifest)
    record = db.start_run(config_hash, cfg.problem.name, cfg.greedy.sampling, str(out)) if db else None
    started = time.perf_counter()

    try:
        _offline_phases(cfg, run, db, record.id if record else None, workers)
    except Exception as e:
        if isinstance(e, SaturationError) and e.trace is not None:
            _write_trace(run, e.trace, run.dim)
        manifest.complete = False
        manifest.message = f"{type(e).__name__}: {e}"
        manifest.write(out)
        if db:
            db.finish_run(record.id, "failed", manifest.message, time.perf_counter() - started)
        raise

    manifest.complete = True
    manifest.write(out)
    if db:
        db.finish_run(record.id, "complete", None, time.perf_counter() - started)
    logger.info(f"offline run {config_hash[:12]} complete: {len(manifest.artifacts)} artifacts in {out}")
    return manifest


def _write_trace(run: _Run, trace, dim: int):
    run.artifact(write_csv(run.directory / "greedy_trace.csv", trace.header(dim), trace.rows()))
    if trace.theta_log:
        run.artifact(write_csv(run.directory / "theta_log.csv", ["N", "k", "M", "Theta"], trace.theta_log))


def _offline_phases(cfg: ExperimentConfig, run: _Run, db: Optional[Database], run_id: Optional[int], workers):
    out = run.directory
    est = cfg.estimators

    with run.phase("truth"):
        model = cfg.build_model()
        run.manifest.model = model.fingerprint()
        run.dim = model.domain.dim
        train = cfg.training_set(model)
        train.to_csv(run.artifact(out / "train.csv"))
        cache = TruthCache(model, train, out / "cache", workers)
        cache.load_or_compute()

    scm_state = None
    if est.beta_source == "scm":
        with run.phase("scm"):
            scm_state = scm_offline(model, cfg.scm_training_set(model), cfg.scm, workers)
            save_scm(run.artifact(out / "scm_state.npz"), scm_state)
            run.artifact(write_csv(out / "scm_gap.csv", gap_header(model), gap_rows(scm_state)))
            require_converged(scm_state)

    basis_m, theta_greedy = None, None
    with run.phase("greedy"):
        g = cfg.greedy
        # Lagrange pairs need M - N extra columns beyond n_max
        extra = max([M_RULES[r] for r in est.m_rules], default=0)
        if g.sampling == "strong":
            basis, trace = strong_greedy(model, train, g.n_max + extra, g.tol, cache, g.drop_tol, workers)
        elif g.sampling == "weak_std":
            basis, trace = weak_greedy_std(model, train, g.n_max + extra, g.tol, est.beta_source, scm_state,
                                           cache, g.drop_tol, workers)
        else:
            basis, basis_m, theta_greedy, trace = weak_greedy_hier(
                model, train, g.n_max, g.tol, g.k_max, g.enrichment, g.accumulate_derivatives,
                est.theta_method, cache, g.drop_tol, workers,
            )
        _write_trace(run, trace, model.domain.dim)
        if db:
            db.add_greedy_steps(run_id, trace.steps)

    with run.phase("reduced"):
        rm = project(model, basis)
        save_space(run.artifact(out / "basis.npz"), basis, rm, {"problem": cfg.problem.model_dump()})
        rd = ResidualData.build(model, basis)
        save_container(run.artifact(out / "residual.npz"), rd.to_arrays(),
                       {"reference_mu": list(rd.reference_mu) if rd.reference_mu is not None else None})
        if model.dofs <= SMALL_EXPORT_LIMIT:
            export_vectors_csv(run.artifact(out / "basis.csv"), basis.vectors, model.coordinates)
        if basis_m is not None:
            save_space(run.artifact(out / "basis_hier_m.npz"), basis_m, project(model, basis_m),
                       {"theta": theta_greedy})

    entries = []
    with run.phase("theta"):
        solutions = cache.solutions
        for rule in est.m_rules:
            rows = lagrange_theta_table(model, basis, rm, train, solutions, rule, cfg, rd)
            run.artifact(write_csv(out / f"theta_{rule}.csv", THETA_HEADER, rows))
            entries += [(rule, n, m, theta) for n, m, theta, _ in rows]

        snapshots = [cache.solution(train_index(train, mu)) for mu in basis.snapshot_params()]
        for k in est.taylor_orders:
            rows = []
            for n, space in taylor_spaces(model, basis, k, g.n_max, g.drop_tol, snapshots, workers):
                rm_k = project(model, space)
                save_space(run.artifact(out / f"taylor_K{k}_N{n}.npz"), space, rm_k)
                if space.size == n:
                    continue
                try:
                    result = compute_theta(model, rm_k, space, n, space.size, train, solutions,
                                           est.theta_method, est.exclusion_tol)
                except EmptyPartitionError as e:
                    logger.warning(f"Taylor K={k}, N={n}: {e}")
                    continue
                rows.append([n, space.size, result.theta, result.valid])
            run.artifact(write_csv(out / f"theta_taylor_K{k}.csv", THETA_HEADER, rows))
            entries += [(f"taylor_K{k}", n, m, theta) for n, m, theta, _ in rows]

        if basis_m is not None:
            rows = [[basis.size, basis_m.size, theta_greedy, theta_greedy < 1]]
            run.artifact(write_csv(out / "theta_greedy.csv", THETA_HEADER, rows))
            entries.append(("greedy", basis.size, basis_m.size, theta_greedy))

    if db:
        db.add_thetas(run_id, entries)


def train_index(train, mu) -> int:
    d = np.linalg.norm(train.points - np.asarray(mu), axis=1)
    k = int(np.argmin(d))
    if d[k] > 1e-12 * (1.0 + np.linalg.norm(mu)):
        raise ArtifactError(f"snapshot parameter {tuple(mu)} is not a training point")
    return k


# ============ SCM ARTIFACTS ============

def save_scm(path: Path, state: ScmState) -> Path:
    return save_container(path, state.to_arrays(), state.meta())


def load_scm(path: Path, model: TruthModel) -> ScmState:
    arrays, meta = load_container(path)
    return ScmState.from_arrays(arrays, meta, model)


def gap_header(model: TruthModel) -> list:
    return ["K", *[f"mu_{j + 1}" for j in range(model.domain.dim)], "gap"]


def gap_rows(state: ScmState) -> List[list]:
    return [[k, *mu, gap] for k, mu, gap in state.gap_history]
