"""
A posteriori error estimators: the residual based standard estimator and the
hierarchical estimator Delta_{N,M} = ||u_M - u_N||_X with its saturation
certified bound.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from hierrb.core.affine import TruthModel, assemble_operator, assemble_rhs, dual_norm, riesz_representer
from hierrb.core.basis import ReducedBasis, ReducedModel
from hierrb.exceptions import EffectivityBoundError, SaturationError, StabilityBoundError
from hierrb.utils.helpers import format_mu, parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResidualData:
    """
    Cross Gramian of the Riesz representers of F_q and A_q xi_j

    The representers are ordered [F_1..F_Qf, A_1 xi_1..A_Qa xi_1, A_1 xi_2, ...]
    so the data for the first n basis columns is a leading block. Representers
    are taken in the reference inner product G(mu_ref), which equals the
    X-product when it is fixed.
    """
    gram: np.ndarray
    theta_f: tuple
    theta_a: tuple
    sigma: tuple
    reference_mu: Optional[tuple] = None
    representers: Optional[np.ndarray] = None

    @property
    def n_f(self) -> int:
        return len(self.theta_f)

    @property
    def n_a(self) -> int:
        return len(self.theta_a)

    @property
    def size(self) -> int:
        return (self.gram.shape[0] - self.n_f) // self.n_a

    @classmethod
    def build(cls, model: TruthModel, basis: ReducedBasis) -> "ResidualData":
        empty = cls(np.zeros((0, 0), dtype=model.dtype), model.theta_f, model.theta_a,
                    tuple(s for s, _ in model.product.terms), basis.product_mu)
        return empty.extend(model, basis)

    @classmethod
    def from_arrays(cls, arrays: dict, model: TruthModel, reference_mu=None) -> "ResidualData":
        return cls(np.asarray(arrays["gram"]), model.theta_f, model.theta_a,
                   tuple(s for s, _ in model.product.terms), reference_mu)

    def extend(self, model: TruthModel, basis: ReducedBasis) -> "ResidualData":
        """Add the basis columns beyond self.size, reusing the stored representers"""
        fresh = self.gram.shape[0] == 0
        if not fresh and self.representers is None:
            raise ValueError("residual data loaded without representers cannot be extended")

        sources = [np.asarray(F, dtype=model.dtype) for F in model.F_q] if fresh else []
        for j in range(0 if fresh else self.size, basis.size):
            xi = basis.vectors[:, j]
            sources.extend(np.asarray(A @ xi, dtype=model.dtype) for A in model.A_q)
        if not sources:
            return self

        L = np.column_stack(sources)
        R = np.column_stack([riesz_representer(model, s, self.reference_mu) for s in sources])
        if fresh:
            gram = R.conj().T @ L
            representers = R
        else:
            # (r_i, r_j)_G = r_i^H L_j
            cross = self.representers.conj().T @ L
            gram = np.block([[self.gram, cross], [cross.conj().T, R.conj().T @ L]])
            representers = np.column_stack([self.representers, R])
        gram = 0.5 * (gram + gram.conj().T)
        logger.debug(f"residual data for {basis.size} columns ({gram.shape[0]} representers)")
        return ResidualData(gram, self.theta_f, self.theta_a, self.sigma, self.reference_mu, representers)

    def weights(self, mu, coeffs) -> np.ndarray:
        theta_f = np.array([t(mu) for t in self.theta_f])
        theta_a = np.array([t(mu) for t in self.theta_a])
        return np.concatenate([theta_f, -np.outer(np.asarray(coeffs), theta_a).ravel()])

    def quadratic_form(self, w: np.ndarray) -> float:
        k = len(w)
        return float(np.real(np.vdot(w, self.gram[:k, :k] @ w)))

    def equivalence(self, mu) -> Tuple[float, float]:
        """(c_low, c_up) of the X(mu) product relative to the reference product"""
        if self.reference_mu is None:
            return 1.0, 1.0
        mu_ref = np.asarray(self.reference_mu)
        ratios = np.array([float(np.real(s(mu))) / float(np.real(s(mu_ref))) for s in self.sigma])
        return float(np.min(ratios)), float(np.max(ratios))

    def to_arrays(self) -> dict:
        return {"gram": self.gram}


def reference_norm(rd: ResidualData, mu, coeffs) -> float:
    """Residual dual norm in the reference product"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    coeffs = np.asarray(coeffs)
    if len(coeffs) > rd.size:
        raise ValueError(f"{len(coeffs)} coefficients, residual data holds {rd.size} columns")
    value = rd.quadratic_form(rd.weights(mu, coeffs))
    if value < 0:
        logger.debug(f"residual quadratic form {value:.3e} at {format_mu(mu)} clamped to 0")
    return float(np.sqrt(max(value, 0.0)))


def dual_norm_bounds(rd: ResidualData, mu, coeffs) -> Tuple[float, float]:
    """Lower and upper bound of the residual dual norm in the X(mu) product"""
    ref = reference_norm(rd, mu, coeffs)
    c_low, c_up = rd.equivalence(mu)
    return ref / np.sqrt(c_up), ref / np.sqrt(c_low)


def residual_dual_norm_bound(rd: ResidualData, mu, coeffs) -> float:
    """Online certified upper bound of ||F(mu) - A(mu) u_N||_{X(mu)'}, exact for fixed products"""
    return dual_norm_bounds(rd, mu, coeffs)[1]


def direct_residual_norm(model: TruthModel, basis: ReducedBasis, mu, coeffs) -> float:
    """Truth-space residual dual norm (assemble, Riesz solve, X(mu)-norm)"""
    coeffs = np.asarray(coeffs)
    u = basis.vectors[:, : len(coeffs)] @ coeffs
    r = assemble_rhs(model, mu) - assemble_operator(model, mu) @ u
    return dual_norm(model, r, None if model.product.is_fixed else mu)


def residual_dual_norm(rd: ResidualData, mu, coeffs, model: TruthModel = None,
                       basis: ReducedBasis = None) -> float:
    """
    ||F(mu) - A(mu) u_N||_{X(mu)'}

    Fixed products use the Gramian. A mu-dependent product has no affine
    Riesz map, so the residual is formed in the truth space and needs the
    model and basis.
    """
    if rd.reference_mu is None:
        return reference_norm(rd, mu, coeffs)
    if model is None or basis is None:
        raise ValueError("the residual norm in a mu-dependent product needs the truth model and basis")
    return direct_residual_norm(model, basis, mu, coeffs)


def _reference_norms(rd: ResidualData, mus: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    theta_f = np.array([[t(mu) for t in rd.theta_f] for mu in mus])
    theta_a = np.array([[t(mu) for t in rd.theta_a] for mu in mus])
    products = (coeffs[:, :, None] * theta_a[:, None, :]).reshape(len(mus), coeffs.shape[1] * rd.n_a)
    W = np.concatenate([theta_f, -products], axis=1)
    k = W.shape[1]
    values = np.real(np.einsum("ki,ij,kj->k", W.conj(), rd.gram[:k, :k], W))
    if np.any(values < 0):
        logger.debug(f"{np.count_nonzero(values < 0)} negative residual quadratic forms clamped "
                     f"(min {values.min():.3e})")
    return np.sqrt(np.maximum(values, 0.0))


def residual_dual_norms(rd: ResidualData, mus, coeffs, model: TruthModel = None,
                        basis: ReducedBasis = None, workers: int = None) -> np.ndarray:
    """Batched residual_dual_norm, one row of coefficients per parameter"""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    coeffs = np.atleast_2d(coeffs)
    if rd.reference_mu is None:
        return _reference_norms(rd, mus, coeffs)
    if model is None or basis is None:
        raise ValueError("the residual norm in a mu-dependent product needs the truth model and basis")
    values = parallel_map(lambda k: direct_residual_norm(model, basis, mus[k], coeffs[k]),
                          range(len(mus)), workers)
    return np.array(values, dtype=float)


def residual_dual_norm_bounds(rd: ResidualData, mus, coeffs) -> np.ndarray:
    """Batched residual_dual_norm_bound"""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    c_low = np.array([rd.equivalence(mu)[0] for mu in mus])
    return _reference_norms(rd, mus, np.atleast_2d(coeffs)) / np.sqrt(c_low)


def delta_hier_many(rm: ReducedModel, mus, coeffs_n, coeffs_m) -> np.ndarray:
    """Batched delta_hier over rows of coefficients"""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    coeffs_m = np.atleast_2d(coeffs_m)
    coeffs_n = np.atleast_2d(coeffs_n)
    m, n = coeffs_m.shape[1], coeffs_n.shape[1]
    if n >= m:
        raise ValueError(f"coarse dimension {n} must be below the fine dimension {m}")
    D = -coeffs_m.astype(np.result_type(coeffs_m, coeffs_n))
    D[:, :n] += coeffs_n
    values = np.zeros(len(mus))
    for sigma, block in zip(rm.sigma, rm.gram_red_r):
        coeff = np.array([float(np.real(sigma(mu))) for mu in mus])
        values += coeff * np.real(np.einsum("ki,ij,kj->k", D.conj(), block[:m, :m], D))
    return np.sqrt(np.maximum(values, 0.0))


def _check_beta(mu, beta_lb: float):
    if not beta_lb > 0:
        raise StabilityBoundError(f"stability lower bound {beta_lb} at {format_mu(mu)} is not positive")


def delta_std(rd: ResidualData, mu, coeffs, beta_lb: float, model: TruthModel = None,
              basis: ReducedBasis = None) -> float:
    _check_beta(mu, beta_lb)
    return residual_dual_norm(rd, mu, coeffs, model, basis) / beta_lb


def delta_std_certified(rd: ResidualData, mu, coeffs, beta_lb: float) -> float:
    """Online Delta_std with the residual norm replaced by its equivalence-constant upper bound"""
    _check_beta(mu, beta_lb)
    return residual_dual_norm_bound(rd, mu, coeffs) / beta_lb


def delta_hier(rm: ReducedModel, mu, coeffs_n, coeffs_m) -> float:
    """sqrt(d^H G_red(mu) d) with d the zero-padded coefficient difference"""
    coeffs_m = np.asarray(coeffs_m)
    coeffs_n = np.asarray(coeffs_n)
    m = len(coeffs_m)
    if len(coeffs_n) >= m:
        raise ValueError(f"coarse dimension {len(coeffs_n)} must be below the fine dimension {m}")
    d = -coeffs_m.astype(np.result_type(coeffs_m, coeffs_n))
    d[: len(coeffs_n)] += coeffs_n
    value = float(np.real(np.vdot(d, rm.gramian(mu, m) @ d)))
    if value < 0:
        logger.debug(f"hierarchical quadratic form {value:.3e} at {format_mu(mu)} clamped to 0")
    return float(np.sqrt(max(value, 0.0)))


def delta_hier_certified(delta: float, theta: float) -> float:
    if theta < 0:
        raise ValueError(f"saturation constant must be nonnegative, got {theta}")
    if theta >= 1:
        raise SaturationError(theta)
    return delta / (1.0 - theta)


@dataclass(frozen=True)
class EffectivityRecord:
    mu: tuple
    n: int
    m: int
    truth_error: float
    delta_std: Optional[float]
    delta_hier: float
    delta_hier_cert: Optional[float]
    eta: Optional[float]
    delta_std_cert: Optional[float] = None
    t_std: Optional[float] = None
    t_hier: Optional[float] = None
    theta: Optional[float] = None
    flag: str = ""

    def as_row(self) -> list:
        return [*self.mu, self.n, self.m, self.truth_error, self.delta_std, self.delta_std_cert,
                self.delta_hier, self.delta_hier_cert, self.eta, self.t_std, self.t_hier, self.flag]


def effectivity(mu, n: int, m: int, truth_error: float, delta_hier_value: float, theta: float,
                delta_std_value: float = None, t_std: float = None, t_hier: float = None,
                on_training: bool = False, zero_tol: float = 0.0, slack: float = 1e-9,
                delta_std_cert: float = None) -> EffectivityRecord:
    """
    Effectivity eta = Delta_{N,M} / ((1 - Theta) e_N) of the certified estimator

    On training parameters (where Theta was computed) eta must lie in
    [1, (1 + Theta) / (1 - Theta)]; a violation raises. Elsewhere it is only
    flagged.
    """
    mu = tuple(float(x) for x in np.atleast_1d(mu))
    cert = delta_hier_value / (1.0 - theta) if theta < 1 else None
    flag, eta = "", None

    if theta >= 1:
        flag = "theta_invalid"
    elif truth_error <= zero_tol:
        flag = "zero_error"
    else:
        eta = cert / truth_error
        upper = (1.0 + theta) / (1.0 - theta)
        if eta < 1.0 - slack or eta > upper * (1.0 + slack):
            if on_training:
                raise EffectivityBoundError(
                    f"effectivity {eta:.6g} outside [1, {upper:.6g}] at training parameter {format_mu(mu)}"
                )
            logger.warning(f"effectivity {eta:.4g} outside [1, {upper:.4g}] at {format_mu(mu)} (N={n}, M={m})")
            flag = "outside_bound"

    return EffectivityRecord(mu, n, m, float(truth_error), delta_std_value, float(delta_hier_value),
                             cert, eta, delta_std_cert, t_std, t_hier, theta, flag)


EFFECTIVITY_HEADER = ["N", "M", "err", "delta_std", "delta_std_cert", "delta_hier", "delta_hier_cert", "eta",
                      "t_std", "t_hier", "flag"]
