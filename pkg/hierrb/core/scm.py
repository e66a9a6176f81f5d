"""
Successive Constraint Method.

The stability constant is a minimum over Rayleigh quotients,

    s(mu) = min_v sum_t c_t(mu) y_t(v),   y_t(v) = v^H T_t v / v^H G v,

with real coefficient functions c_t and Hermitian terms T_t. In coercive
mode the terms are the Hermitian parts of A_q and s = alpha. In
infsup_squared mode they are the expanded products of A(mu)^H G^{-1} A(mu)
and s = beta^2. The lower bound relaxes y to a box cut by the exact values
at the constraint set, the upper bound minimizes over the y vectors of the
stored eigenvectors.

Everything is measured in the reference norm G = X(mu_ref).
"""

import logging
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from typing import List, Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linprog

from hierrb.core.affine import (TruthModel, assemble_operator, normal_pencil, solve_real_factor,
                                symmetric_pencil)
from hierrb.core.param_space import SampleSet
from hierrb.exceptions import ScmConvergenceError, StabilityBoundError
from hierrb.utils.helpers import format_mu, parallel_map

logger = logging.getLogger(__name__)

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class ScmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m_alpha: int = Field(30, ge=1)  # nearest constraint points used in the LP
    m_plus: int = Field(20, ge=0)  # nearest positivity points
    k_max: int = Field(3000, ge=1)
    tol: float = Field(1e-6, gt=0)
    mode: Literal["auto", "coercive", "infsup_squared"] = "auto"
    grid: Optional[List[int]] = None  # own training grid, the greedy training set otherwise


# ============ TERMS ============

def _product_terms(model: TruthModel, train: SampleSet, cutoff: float = 1e-14):
    """(kind, q, q') for |theta_q|^2, Re and Im of conj(theta_q) theta_q'; identically vanishing terms dropped"""
    theta = np.array([model.theta_a_values(mu) for mu in train.points])  # (K, Q)
    terms = []
    for q in range(model.Q_a):
        terms.append(("diag", q, q))
    for q in range(model.Q_a):
        for p in range(q + 1, model.Q_a):
            c = np.conj(theta[:, q]) * theta[:, p]
            scale = max(float(np.max(np.abs(c))), np.finfo(float).tiny)
            if np.max(np.abs(c.real)) > cutoff * scale:
                terms.append(("re", q, p))
            if np.max(np.abs(c.imag)) > cutoff * scale:
                terms.append(("im", q, p))
    return tuple(terms)


def term_coefficients(mode: str, terms: tuple, theta: np.ndarray) -> np.ndarray:
    """Real coefficients c_t(mu) from the operator coefficients theta_q(mu)"""
    if mode == "coercive":
        return np.real(theta[[q for _, q, _ in terms]])
    out = np.empty(len(terms))
    for t, (kind, q, p) in enumerate(terms):
        c = np.conj(theta[q]) * theta[p]
        out[t] = np.real(c) if kind in ("diag", "re") else np.imag(c)
    return out


def _rayleigh_y(model: TruthModel, mode: str, terms: tuple, G, lu_G, v: np.ndarray) -> np.ndarray:
    """y_t(v) for a vector with v^H G v = 1 (normalized here anyway)"""
    v = v / np.sqrt(np.real(np.vdot(v, G @ v)))
    if mode == "coercive":
        return np.array([np.real(np.vdot(v, model.A_q[q] @ v)) for _, q, _ in terms])
    Av = [model.A_q[q] @ v for q in range(model.Q_a)]
    W = [solve_real_factor(lu_G, a) for a in Av]
    y = np.empty(len(terms))
    for t, (kind, q, p) in enumerate(terms):
        z = np.vdot(Av[q], W[p])
        y[t] = np.real(z) if kind == "diag" else 2 * np.real(z) if kind == "re" else -2 * np.imag(z)
    return y


# ============ STATE ============

@dataclass
class ScmState:
    """Offline SCM data; bound queries never touch the truth model"""
    mode: str
    terms: tuple
    box_lower: np.ndarray
    box_upper: np.ndarray
    theta_a: tuple
    train_points: np.ndarray
    widths: np.ndarray
    config: ScmConfig
    reference_mu: Optional[tuple] = None
    constraint_points: List[np.ndarray] = dataclass_field(default_factory=list)
    constraint_values: List[float] = dataclass_field(default_factory=list)
    constraint_y: List[np.ndarray] = dataclass_field(default_factory=list)
    gap_history: List[Tuple[int, tuple, float]] = dataclass_field(default_factory=list)
    converged: bool = False

    def coefficients(self, mu) -> np.ndarray:
        theta = np.array([t(np.atleast_1d(mu)) for t in self.theta_a])
        return term_coefficients(self.mode, self.terms, theta)

    def _nearest(self, points: np.ndarray, mu, count: int) -> np.ndarray:
        if count <= 0 or len(points) == 0:
            return np.array([], dtype=int)
        d = np.linalg.norm((points - mu) / self.widths, axis=1)
        return np.argsort(d, kind="stable")[:count]

    def to_arrays(self) -> dict:
        return {
            "box_lower": self.box_lower,
            "box_upper": self.box_upper,
            "train_points": self.train_points,
            "constraint_points": np.array(self.constraint_points).reshape(-1, self.train_points.shape[1]),
            "constraint_values": np.array(self.constraint_values),
            "constraint_y": np.array(self.constraint_y).reshape(-1, len(self.terms)),
        }

    def meta(self) -> dict:
        return {
            "mode": self.mode,
            "terms": [list(t) for t in self.terms],
            "config": self.config.model_dump(),
            "reference_mu": list(self.reference_mu) if self.reference_mu is not None else None,
            "gap_history": [[k, list(mu), gap] for k, mu, gap in self.gap_history],
            "converged": self.converged,
        }

    @classmethod
    def from_arrays(cls, arrays: dict, meta: dict, model: TruthModel) -> "ScmState":
        domain = model.domain
        return cls(
            mode=meta["mode"],
            terms=tuple((kind, int(q), int(p)) for kind, q, p in meta["terms"]),
            box_lower=arrays["box_lower"],
            box_upper=arrays["box_upper"],
            theta_a=model.theta_a,
            train_points=arrays["train_points"],
            widths=domain.widths,
            config=ScmConfig(**meta["config"]),
            reference_mu=tuple(meta["reference_mu"]) if meta["reference_mu"] is not None else None,
            constraint_points=list(arrays["constraint_points"]),
            constraint_values=list(arrays["constraint_values"]),
            constraint_y=list(arrays["constraint_y"]),
            gap_history=[(int(k), tuple(mu), float(g)) for k, mu, g in meta["gap_history"]],
            converged=bool(meta["converged"]),
        )


def _resolve_mode(model: TruthModel, mode: str) -> str:
    if mode != "auto":
        return mode
    return "coercive" if model.field == "real" and model.product.is_fixed else "infsup_squared"


def _box(model: TruthModel, mode: str, terms: tuple, G) -> Tuple[np.ndarray, np.ndarray]:
    lower, upper = np.empty(len(terms)), np.empty(len(terms))
    if mode == "coercive":
        for t, (_, q, _) in enumerate(terms):
            S = 0.5 * (model.A_q[q] + model.A_q[q].conj().T)
            psd = q in model.psd_terms
            res = symmetric_pencil(S, G, smallest=not psd)
            lower[t] = 0.0 if psd else res.lam_min
            upper[t] = res.lam_max
        return lower, upper

    gamma = np.array([np.sqrt(max(normal_pencil(sp.csc_matrix(A), G).lam_max, 0.0)) for A in model.A_q])
    for t, (kind, q, p) in enumerate(terms):
        if kind == "diag":
            lower[t], upper[t] = 0.0, gamma[q] ** 2
        else:
            lower[t], upper[t] = -2 * gamma[q] * gamma[p], 2 * gamma[q] * gamma[p]
    return lower, upper


def _exact(model: TruthModel, mode: str, terms: tuple, G, lu_G, mu) -> Tuple[float, np.ndarray]:
    """Stability value and y vector of its minimizing eigenvector at a constraint point"""
    A = assemble_operator(model, mu)
    if mode == "coercive":
        res = symmetric_pencil(0.5 * (A + A.conj().T), G, mu, vectors=True)
    else:
        res = normal_pencil(A, G, mu, vectors=True)
    return res.lam_min, _rayleigh_y(model, mode, terms, G, lu_G, res.v_min)


# ============ BOUNDS ============

def _lower_value(state: ScmState, mu) -> float:
    """LP lower bound of s(mu) (alpha or beta^2 level)"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    lo, hi = state.box_lower, state.box_upper
    width = hi - lo
    c = state.coefficients(mu)
    box_only = float(np.sum(np.minimum(c * lo, c * hi)))
    if not state.constraint_points:
        return box_only

    rows, rhs = [], []
    points = np.array(state.constraint_points)
    for k in state._nearest(points, mu, state.config.m_alpha):
        ck = state.coefficients(points[k])
        rows.append(-(ck * width))
        rhs.append(float(ck @ lo) - state.constraint_values[k])
    for k in state._nearest(state.train_points, mu, state.config.m_plus):
        ck = state.coefficients(state.train_points[k])
        rows.append(-(ck * width))
        rhs.append(float(ck @ lo))

    A_ub = np.array(rows)
    b_ub = np.array(rhs)
    scale = np.maximum(np.max(np.abs(A_ub), axis=1), np.finfo(float).tiny)
    res = linprog(c * width, A_ub=A_ub / scale[:, None], b_ub=b_ub / scale,
                  bounds=[(0.0, 1.0)] * len(c), method="highs", options=LP_OPTIONS)
    if res.status != 0:
        logger.warning(f"SCM LP at {format_mu(mu)} failed ({res.message}), using the box bound")
        return box_only
    logger.debug(f"SCM LP at {format_mu(mu)}: {res.nit} iterations")
    return float(c @ lo + res.fun)


def _upper_value(state: ScmState, mu) -> float:
    if not state.constraint_y:
        return float("inf")
    c = state.coefficients(mu)
    return float(np.min(np.array(state.constraint_y) @ c))


def _to_stability(state: ScmState, value: float) -> float:
    if state.mode == "infsup_squared":
        return float(np.sqrt(max(value, 0.0)))
    return value


def scm_upper_bound(state: ScmState, mu) -> float:
    return _to_stability(state, _upper_value(state, mu))


def scm_lower_bound(state: ScmState, mu) -> float:
    """Lower bound of the stability constant (alpha, or beta) in the reference norm; never above the upper bound"""
    lb = _lower_value(state, mu)
    ub = _upper_value(state, mu)
    return _to_stability(state, min(lb, ub))


def scm_bounds(state: ScmState, mu) -> Tuple[float, float]:
    lb, ub = _lower_value(state, mu), _upper_value(state, mu)
    return _to_stability(state, min(lb, ub)), _to_stability(state, ub)


def mu_norm_lower_bound(state: ScmState, model: TruthModel, mu) -> float:
    """SCM lower bound converted from the reference norm to the X(mu) norm (divided by c_up)"""
    lb = scm_lower_bound(state, mu)
    if state.reference_mu is None:
        return lb
    _, c_up = model.product.equivalence(np.atleast_1d(mu), np.asarray(state.reference_mu))
    return lb / c_up


def scm_gap(lb: float, ub: float) -> float:
    """1 - LB^2 / UB^2 with nonpositive lower bounds counted as gap 1"""
    if not ub > 0 or not np.isfinite(ub):
        return 1.0
    return 1.0 - (max(lb, 0.0) / ub) ** 2


# ============ OFFLINE ============

def scm_offline(model: TruthModel, train: SampleSet, cfg: ScmConfig = None, workers: int = None) -> ScmState:
    """
    Greedy constraint selection over `train`

    Adds the training point with the largest gap 1 - LB^2/UB^2 until the
    largest gap is below cfg.tol or cfg.k_max constraints are used. Running
    out of constraints is recorded (state.converged = False), not raised.
    """
    cfg = cfg or ScmConfig()
    mode = _resolve_mode(model, cfg.mode)
    if mode == "coercive" and model.field != "real":
        raise StabilityBoundError("coercive SCM needs real coefficients")

    reference_mu = None if model.product.is_fixed else tuple(model.reference_mu)
    G = model.product.matrix(reference_mu)
    lu_G = model.product.factorization(reference_mu)
    if mode == "coercive":
        terms = tuple(("diag", q, q) for q in range(model.Q_a))
    else:
        terms = _product_terms(model, train)

    lower, upper = _box(model, mode, terms, G)
    state = ScmState(mode, terms, lower, upper, model.theta_a, np.array(train.points),
                     model.domain.widths, cfg, reference_mu)
    logger.info(f"SCM ({mode}) with {len(terms)} terms on {len(train)} points")

    candidate = 0
    for k in range(1, cfg.k_max + 1):
        mu = train.points[candidate]
        value, y = _exact(model, mode, terms, G, lu_G, mu)
        state.constraint_points.append(np.array(mu))
        state.constraint_values.append(value)
        state.constraint_y.append(y)

        bounds = parallel_map(lambda p: scm_bounds(state, p), train.points, workers)
        gaps = np.array([scm_gap(lb, ub) for lb, ub in bounds])
        candidate = int(np.argmax(gaps))
        gap = float(gaps[candidate])
        state.gap_history.append((k, tuple(float(x) for x in train.points[candidate]), gap))
        logger.info(f"SCM K={k}: max gap {gap:.3e} at {format_mu(train.points[candidate])}")

        if gap <= cfg.tol:
            state.converged = True
            break
        if any(np.array_equal(train.points[candidate], p) for p in state.constraint_points):
            logger.warning(f"SCM stalled: largest gap {gap:.3e} at a constraint point")
            break

    if not state.converged:
        logger.warning(f"SCM did not converge: gap {state.gap_history[-1][2]:.3e} after "
                       f"{len(state.constraint_points)} constraints (target {cfg.tol:.1e})")
    return state


def require_converged(state: ScmState) -> ScmState:
    if not state.converged:
        raise ScmConvergenceError(state, f"SCM gap {state.gap_history[-1][2]:.3e} above {state.config.tol:.1e} "
                                         f"after {len(state.constraint_points)} constraints")
    return state


def min_theta_lower_bound(model: TruthModel, mu, mu_ref, beta_ref: float) -> float:
    """beta_ref * min_q theta_q(mu) / theta_q(mu_ref) for parametrically coercive forms"""
    theta = model.theta_a_values(mu)
    theta_ref = model.theta_a_values(mu_ref)
    if np.any(np.abs(np.imag(theta)) > 0) or np.any(np.real(theta) <= 0) or np.any(np.real(theta_ref) <= 0):
        raise StabilityBoundError(f"min-theta bound needs positive real coefficients at {format_mu(mu)}")
    return float(beta_ref * np.min(np.real(theta) / np.real(theta_ref)))
