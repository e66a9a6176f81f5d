"""
Offline basis construction.

strong_greedy selects by the truth error, weak_greedy_std by the residual
estimator and weak_greedy_hier (hierarchical estimator with Taylor
enrichment until saturation holds) by Delta_{N,M}. Ties in every argmax go
to the lowest training index.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from hierrb.core.affine import TruthModel, exact_inf_sup, truth_solve
from hierrb.core.basis import ReducedBasis, SnapshotTag, describe, orthonormalize_pod, project, rb_solve_many
from hierrb.core.estimators import ResidualData, delta_hier_many, residual_dual_norms
from hierrb.core.param_space import SampleSet
from hierrb.core.saturation import compute_theta
from hierrb.core.scm import ScmState, min_theta_lower_bound, mu_norm_lower_bound, require_converged
from hierrb.core.taylor import TaylorConfig, build_taylor_space
from hierrb.core.truth_cache import TruthCache, truth_errors
from hierrb.exceptions import (BasisExtensionError, DuplicateSelectionError, EmptyPartitionError,
                               EnrichmentError, SaturationError, StabilityBoundError)
from hierrb.utils.helpers import format_mu, mu_key, parallel_map

logger = logging.getLogger(__name__)

BETA_SOURCES = ("exact_eig", "scm", "min_theta")
ENRICHMENTS = ("taylor", "lagrange")
M_RULES = {"N+1": 1, "N+2": 2, "N+3": 3}


@dataclass(frozen=True)
class GreedyStep:
    """
    One greedy iteration: mu was added as the n-th snapshot because it
    maximized the selector (selector_value) over the (n-1)-dimensional space;
    max_value is the maximum of the selector over the training set for the
    new n-dimensional space
    """
    n: int
    mu: tuple
    selector_value: Optional[float]
    max_value: float
    theta: Optional[float] = None
    k_n: Optional[int] = None
    seconds: float = 0.0

    def as_row(self) -> list:
        return [self.n, *self.mu, self.selector_value, self.max_value, self.theta, self.k_n, self.seconds]


@dataclass
class GreedyTrace:
    sampling: str
    selector: str
    steps: List[GreedyStep] = field(default_factory=list)
    theta_log: List[Tuple[int, int, int, float]] = field(default_factory=list)  # (N, k, M, Theta)
    stop_reason: str = ""

    @staticmethod
    def header(dim: int) -> list:
        return ["N", *[f"mu_{j + 1}" for j in range(dim)], "selector", "max_value", "theta", "K_N", "t_offline"]

    @property
    def selected(self) -> List[tuple]:
        return [s.mu for s in self.steps]

    @property
    def max_values(self) -> np.ndarray:
        return np.array([s.max_value for s in self.steps])

    def add(self, step: GreedyStep):
        self.steps.append(step)
        theta = f", Theta={step.theta:.4g}, K_N={step.k_n}" if step.theta is not None else ""
        logger.info(f"{self.sampling} greedy N={step.n}: mu={format_mu(step.mu)}, "
                    f"max {self.selector} {step.max_value:.4e}{theta}")

    def rows(self) -> List[list]:
        return [s.as_row() for s in self.steps]


def nearest_to_midpoint(train: SampleSet) -> int:
    """Training index closest (in width-scaled distance) to the domain midpoint"""
    d = np.linalg.norm((train.points - train.domain.midpoint) / train.domain.widths, axis=1)
    return int(np.argmin(d))


def stability_bound(model: TruthModel, source: str, scm_state: ScmState = None) -> Callable:
    """mu -> lower bound of the inf-sup constant in the X(mu) norm"""
    if source == "exact_eig":
        return lambda mu: exact_inf_sup(model, mu)
    if source == "scm":
        if scm_state is None:
            raise ValueError("beta source 'scm' needs an SCM state")
        require_converged(scm_state)
        return lambda mu: mu_norm_lower_bound(scm_state, model, mu)
    if source == "min_theta":
        mu_ref = np.asarray(model.metadata.get("product_mu", model.reference_mu), dtype=float)
        beta_ref = exact_inf_sup(model, mu_ref)
        return lambda mu: min_theta_lower_bound(model, mu, mu_ref, beta_ref)
    raise ValueError(f"unknown beta source '{source}', expected one of {BETA_SOURCES}")


def _add_snapshot(model, basis, mu, solution, drop_tol) -> Optional[ReducedBasis]:
    tag = SnapshotTag(basis.size + 1, mu_key(mu))
    try:
        return orthonormalize_pod(solution, model, drop_tol, basis, [tag])
    except BasisExtensionError:
        logger.warning(f"snapshot at {format_mu(mu)} is linearly dependent on the basis")
        return None


# ============ STRONG / WEAK STD ============

def strong_greedy(model: TruthModel, train: SampleSet, n_max: int, tol: float = 0.0,
                  cache: TruthCache = None, drop_tol: float = 1e-10,
                  workers: int = None) -> Tuple[ReducedBasis, GreedyTrace]:
    """
    Greedy selection by the truth error ||u(mu) - u_N(mu)||_X over `train`

    Stops when the maximum error is <= tol, after n_max snapshots, or when
    the maximizer is already a snapshot parameter.
    """
    cache = cache or TruthCache(model, train, workers=workers)
    solutions = cache.solutions
    basis = ReducedBasis.empty(model)
    trace = GreedyTrace("strong", "truth_error")
    start = time.perf_counter()

    values = cache.norms
    while basis.size < n_max:
        k = int(np.argmax(values))
        if values[k] <= tol:
            trace.stop_reason = "tol"
            break
        mu = mu_key(train[k])
        if mu in trace.selected:
            logger.info(f"strong greedy reselects {format_mu(mu)}, stopping")
            trace.stop_reason = "duplicate"
            break
        extended = _add_snapshot(model, basis, mu, solutions[:, k], drop_tol)
        if extended is None:
            trace.stop_reason = "dependent"
            break
        basis = extended

        rm = project(model, basis)
        coeffs = rb_solve_many(rm, train.points, basis.size)
        selector_value, values = float(values[k]), truth_errors(model, solutions, train.points, basis, coeffs)
        trace.add(GreedyStep(basis.size, mu, selector_value, float(np.max(values)),
                             seconds=time.perf_counter() - start))
    else:
        trace.stop_reason = "n_max"

    logger.info(f"strong greedy finished ({trace.stop_reason}): {describe(basis)}")
    return basis, trace


def weak_greedy_std(model: TruthModel, train: SampleSet, n_max: int, tol: float = 0.0,
                    beta_source: str = "exact_eig", scm_state: ScmState = None,
                    cache: TruthCache = None, drop_tol: float = 1e-10,
                    workers: int = None) -> Tuple[ReducedBasis, GreedyTrace]:
    """
    Greedy selection by Delta_std = ||R(mu)||_{X(mu)'} / beta_LB(mu)

    Only the selected parameters are solved in the truth space (cached
    solutions are used when a cache is given). A mu-dependent X-product
    makes the residual norm a truth-space Riesz solve per training parameter.

    Raises:
        ScmConvergenceError: beta_source is scm and the SCM state did not converge
        StabilityBoundError: a nonpositive stability bound on the training set
    """
    beta = stability_bound(model, beta_source, scm_state)
    betas = np.array(parallel_map(beta, train.points, workers))
    if np.any(betas <= 0):
        k = int(np.argmin(betas))
        raise StabilityBoundError(f"stability bound {betas[k]:.3e} at {format_mu(train[k])} is not positive")

    basis = ReducedBasis.empty(model)
    rd = ResidualData.build(model, basis)
    trace = GreedyTrace("weak_std", f"delta_std[{beta_source}]")
    start = time.perf_counter()

    values = residual_dual_norms(rd, train.points, np.zeros((len(train), 0)), model, basis, workers) / betas
    while basis.size < n_max:
        k = int(np.argmax(values))
        if values[k] <= tol:
            trace.stop_reason = "tol"
            break
        mu = mu_key(train[k])
        if mu in trace.selected:
            logger.info(f"weak greedy reselects {format_mu(mu)}, stopping")
            trace.stop_reason = "duplicate"
            break
        solution = cache.solution(k) if cache is not None else truth_solve(model, mu)
        extended = _add_snapshot(model, basis, mu, solution, drop_tol)
        if extended is None:
            trace.stop_reason = "dependent"
            break
        basis = extended
        rd = rd.extend(model, basis)

        rm = project(model, basis)
        coeffs = rb_solve_many(rm, train.points, basis.size)
        norms = residual_dual_norms(rd, train.points, coeffs, model, basis, workers)
        selector_value, values = float(values[k]), norms / betas
        trace.add(GreedyStep(basis.size, mu, selector_value, float(np.max(values)),
                             seconds=time.perf_counter() - start))
    else:
        trace.stop_reason = "n_max"

    logger.info(f"weak greedy (std) finished ({trace.stop_reason}): {describe(basis)}")
    return basis, trace


# ============ HIERARCHICAL ============

def _saturated_space(model, basis_n, train, solutions, k_max, accumulate, drop_tol, theta_method,
                     trace, workers):
    """Raise the Taylor order at the newest snapshot until Theta_{N,M} < 1 or k = k_max"""
    n = basis_n.size
    params = basis_n.snapshot_params()
    basis_m, result = None, None
    for k in range(1, k_max + 1):
        orders = k if accumulate else tuple([0] * (n - 1) + [k])
        cfg = TaylorConfig(orders, model.domain.dim)
        try:
            candidate = build_taylor_space(model, params, cfg, basis_n, drop_tol, workers=workers)
        except EnrichmentError as e:
            logger.warning(f"N={n}, k={k}: {e}")
            continue
        if candidate.size == n:
            continue
        basis_m = candidate
        rm_m = project(model, basis_m)
        result = compute_theta(model, rm_m, basis_m, n, basis_m.size, train, solutions, method=theta_method)
        trace.theta_log.append((n, k, basis_m.size, result.theta))
        if result.valid:
            return basis_m, rm_m, result.theta, k
    if basis_m is None:
        raise EnrichmentError(f"no derivative snapshot survived up to order {k_max} at N={n}")
    raise SaturationError(result.theta, f"Theta_{{{n},{basis_m.size}}} = {result.theta:.6g} >= 1 "
                                        f"after Taylor order {k_max}", trace)


def weak_greedy_hier(model: TruthModel, train: SampleSet, n_max: int, tol: float = 0.0,
                     k_max: int = 4, enrichment: str = "taylor", accumulate_derivatives: bool = False,
                     theta_method: str = "train_ratio", cache: TruthCache = None,
                     drop_tol: float = 1e-10, workers: int = None):
    """
    Weak greedy with the hierarchical estimator

    taylor: after adding u(mu_N), derivative snapshots of order k = 1, 2, ...
    at mu_N (at every snapshot parameter with accumulate_derivatives) are
    appended until Theta_{N,M} < 1 on the training set; mu_{N+1} maximizes
    Delta_{N,M}. lagrange: the naive pairing X_M = X_{N+1} of one Lagrange
    basis, where reselection of a parameter is an error.

    Returns:
        (X_N basis, X_M basis, Theta_{N,M}, trace)

    Raises:
        SaturationError: Theta >= 1 with Taylor order k_max (the trace is attached)
        EnrichmentError: every derivative snapshot was dropped
        DuplicateSelectionError: lagrange pairing selected a parameter twice
    """
    if enrichment not in ENRICHMENTS:
        raise ValueError(f"unknown enrichment '{enrichment}', expected one of {ENRICHMENTS}")
    cache = cache or TruthCache(model, train, workers=workers)
    if enrichment == "lagrange":
        return _lagrange_pair_greedy(model, train, n_max, tol, cache, drop_tol, theta_method)

    solutions = cache.solutions
    trace = GreedyTrace("weak_hier", "delta_hier")
    start = time.perf_counter()

    k = nearest_to_midpoint(train)
    selector_value = None
    basis_n = ReducedBasis.empty(model)
    basis_m, theta = None, None
    while basis_n.size < n_max:
        mu = mu_key(train[k])
        extended = _add_snapshot(model, basis_n, mu, solutions[:, k], drop_tol)
        if extended is None:
            trace.stop_reason = "dependent"
            break
        basis_n = extended
        try:
            basis_m, rm_m, theta, k_n = _saturated_space(model, basis_n, train, solutions, k_max,
                                                         accumulate_derivatives, drop_tol, theta_method,
                                                         trace, workers)
        except EmptyPartitionError:
            logger.info(f"X_N reproduces every training solution at N={basis_n.size}")
            trace.stop_reason = "exact"
            break

        coeffs_n = rb_solve_many(rm_m, train.points, basis_n.size)
        coeffs_m = rb_solve_many(rm_m, train.points, basis_m.size)
        values = delta_hier_many(rm_m, train.points, coeffs_n, coeffs_m)
        trace.add(GreedyStep(basis_n.size, mu, selector_value, float(np.max(values)), theta, k_n,
                             time.perf_counter() - start))

        k = int(np.argmax(values))
        selector_value = float(values[k])
        if selector_value < tol:
            trace.stop_reason = "tol"
            break
        if mu_key(train[k]) in trace.selected:
            logger.warning(f"Delta_N,M is maximal at the snapshot parameter {format_mu(train[k])}, stopping")
            trace.stop_reason = "duplicate"
            break
    else:
        trace.stop_reason = "n_max"

    logger.info(f"hierarchical greedy finished ({trace.stop_reason}): X_N {describe(basis_n)}, "
                f"M={basis_m.size if basis_m is not None else '-'}")
    return basis_n, basis_m, theta, trace


def _lagrange_pair_greedy(model, train, n_max, tol, cache, drop_tol, theta_method):
    solutions = cache.solutions
    trace = GreedyTrace("weak_hier_lagrange", "delta_hier")
    start = time.perf_counter()

    first = nearest_to_midpoint(train)
    d = np.linalg.norm((train.points - train[first]) / train.domain.widths, axis=1)
    second = int(np.argmax(d))
    basis = ReducedBasis.empty(model)
    for k in (first, second):
        basis = orthonormalize_pod(solutions[:, k], model, drop_tol, basis,
                                   [SnapshotTag(basis.size + 1, mu_key(train[k]))])
    selected = [mu_key(train[first]), mu_key(train[second])]

    theta = None
    selector_value = None
    while basis.size - 1 <= n_max:
        n = basis.size - 1
        rm = project(model, basis)
        result = compute_theta(model, rm, basis, n, n + 1, train, solutions, method=theta_method)
        theta = result.theta
        trace.theta_log.append((n, 0, n + 1, theta))
        if not result.valid:
            logger.warning(f"Lagrange pair N={n}: saturation does not hold (Theta={theta:.4g})")
        coeffs_n = rb_solve_many(rm, train.points, n)
        coeffs_m = rb_solve_many(rm, train.points, n + 1)
        values = delta_hier_many(rm, train.points, coeffs_n, coeffs_m)
        trace.add(GreedyStep(n, selected[n - 1], selector_value, float(np.max(values)), theta, 0,
                             time.perf_counter() - start))

        k = int(np.argmax(values))
        selector_value = float(values[k])
        if selector_value < tol or n == n_max:
            trace.stop_reason = "tol" if selector_value < tol else "n_max"
            break
        mu = mu_key(train[k])
        if mu in selected:
            raise DuplicateSelectionError(
                mu, f"Lagrange pairing selected {format_mu(mu)} again at N={n}: Delta_N,N+1 is maximal "
                    f"where both spaces already interpolate; use Taylor enrichment"
            )
        basis = orthonormalize_pod(solutions[:, k], model, drop_tol, basis, [SnapshotTag(basis.size + 1, mu)])
        selected.append(mu)

    n = basis.size - 1
    return basis.prefix(n), basis, theta, trace


def build_lagrange_pair(basis: ReducedBasis, n: int, m_rule: str = "N+1") -> Tuple[ReducedBasis, ReducedBasis]:
    """X_N and X_M as prefixes of one greedy-ordered basis"""
    if m_rule not in M_RULES:
        raise ValueError(f"unknown M rule '{m_rule}', expected one of {sorted(M_RULES)}")
    m = n + M_RULES[m_rule]
    if n < 1 or m > basis.size:
        raise ValueError(f"pair N={n}, M={m} needs a basis of size >= {m}, have {basis.size}")
    return basis.prefix(n), basis.prefix(m)
