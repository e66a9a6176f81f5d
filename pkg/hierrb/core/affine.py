"""
Affine-decomposed truth models.

A TruthModel stores the parameter-independent pieces A_q, F_q of

    A(mu) = sum_q theta_a[q](mu) A_q,      F(mu) = sum_q theta_f[q](mu) F_q

together with the X-inner product, which is either a fixed SPD matrix or an
affine family sum_r sigma_r(mu) G_r with PSD G_r and positive sigma_r.
"""

import logging
import math
import threading
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hierrb.core.param_space import ParameterDomain
from hierrb.exceptions import EigenSolveError, MissingParameterError, TruthSolveError
from hierrb.utils.helpers import array_fingerprint, dense_limit, mu_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThetaFunction:
    """Parameter coefficient theta(mu) with classical partial derivatives"""
    evaluator: Callable
    derivative_evaluator: Optional[Callable] = None
    name: str = ""
    is_constant: bool = False

    def __call__(self, mu):
        return self.evaluator(np.atleast_1d(np.asarray(mu, dtype=float)))

    def derivative(self, mu, direction: int, order: int):
        """order-th partial derivative in coordinate `direction` (0-based)"""
        if order == 0:
            return self(mu)
        if self.is_constant:
            return 0.0
        if self.derivative_evaluator is None:
            raise NotImplementedError(f"theta '{self.name}' has no derivatives")
        return self.derivative_evaluator(np.atleast_1d(np.asarray(mu, dtype=float)), direction, order)

    @classmethod
    def constant(cls, value, name: str = "") -> "ThetaFunction":
        return cls(lambda mu: value, None, name or f"{value}", is_constant=True)

    @classmethod
    def monomial(cls, index: int, power: int, coefficient=1.0, name: str = "") -> "ThetaFunction":
        """theta(mu) = coefficient * mu[index]**power"""

        def value(mu):
            return coefficient * mu[index] ** power

        def derivative(mu, direction, order):
            if direction != index or order > power:
                return 0.0 * coefficient
            return coefficient * math.perm(power, order) * mu[index] ** (power - order)

        return cls(value, derivative, name or f"{coefficient}*mu{index + 1}^{power}")


class InnerProduct:
    """X-inner product sum_r sigma_r(mu) G_r (a single constant term when fixed)"""

    def __init__(self, terms: Sequence[Tuple[ThetaFunction, sp.spmatrix]], name: str = "X"):
        self.terms = tuple((sigma, sp.csc_matrix(G)) for sigma, G in terms)
        self.name = name
        self._cache = {}
        self._lock = threading.Lock()

    @classmethod
    def fixed(cls, matrix, name: str = "X") -> "InnerProduct":
        return cls([(ThetaFunction.constant(1.0, "1"), matrix)], name)

    @property
    def is_fixed(self) -> bool:
        return all(sigma.is_constant for sigma, _ in self.terms)

    @property
    def blocks(self):
        return [G for _, G in self.terms]

    def coefficients(self, mu=None) -> np.ndarray:
        if mu is None:
            if not self.is_fixed:
                raise MissingParameterError(f"inner product '{self.name}' depends on mu")
            mu = np.zeros(1)
        return np.array([float(np.real(sigma(mu))) for sigma, _ in self.terms])

    def matrix(self, mu=None) -> sp.csc_matrix:
        coeffs = self.coefficients(mu)
        G = coeffs[0] * self.terms[0][1]
        for c, (_, Gr) in zip(coeffs[1:], self.terms[1:]):
            G = G + c * Gr
        return sp.csc_matrix(G)

    def factorization(self, mu=None):
        key = "fixed" if self.is_fixed else mu_key(mu) if mu is not None else None
        if key is None:
            raise MissingParameterError(f"inner product '{self.name}' depends on mu")
        with self._lock:
            lu = self._cache.get(key)
        if lu is not None:
            return lu
        lu = spla.splu(self.matrix(mu))
        with self._lock:
            if len(self._cache) > 32:
                self._cache.clear()
            # first factorization wins when two threads race on one key
            return self._cache.setdefault(key, lu)

    def equivalence(self, mu, mu_ref) -> Tuple[float, float]:
        """(c_low, c_up) with c_low G(mu_ref) <= G(mu) <= c_up G(mu_ref)"""
        if self.is_fixed:
            return 1.0, 1.0
        ratios = self.coefficients(mu) / self.coefficients(mu_ref)
        return float(np.min(ratios)), float(np.max(ratios))


@dataclass(frozen=True)
class TruthModel:
    """Truth discretization with affine operator and right-hand side"""
    name: str
    domain: ParameterDomain
    A_q: tuple
    F_q: tuple
    theta_a: tuple
    theta_f: tuple
    product: InnerProduct
    field: str = "real"
    psd_terms: tuple = ()
    coordinates: Optional[np.ndarray] = None
    metadata: dict = dataclass_field(default_factory=dict)

    @property
    def dofs(self) -> int:
        return self.A_q[0].shape[0]

    @property
    def dtype(self):
        return np.complex128 if self.field == "complex" else np.float64

    @property
    def reference_mu(self) -> np.ndarray:
        """Parameter at which a mu-dependent inner product is frozen for orthonormalization"""
        return self.domain.midpoint

    @property
    def Q_a(self) -> int:
        return len(self.A_q)

    @property
    def Q_f(self) -> int:
        return len(self.F_q)

    def theta_a_values(self, mu) -> np.ndarray:
        return np.array([t(mu) for t in self.theta_a], dtype=self.dtype)

    def theta_f_values(self, mu) -> np.ndarray:
        return np.array([t(mu) for t in self.theta_f], dtype=self.dtype)

    def fingerprint(self) -> str:
        blocks = [A.toarray().ravel() if A.shape[0] < 50 else A.data for A in self.A_q]
        return array_fingerprint(*blocks, *self.F_q, np.array(self.domain.lower), np.array(self.domain.upper))


def assemble_operator(model: TruthModel, mu) -> sp.csc_matrix:
    """sum_q theta_a[q](mu) A_q"""
    theta = model.theta_a_values(mu)
    A = theta[0] * model.A_q[0]
    for t, Aq in zip(theta[1:], model.A_q[1:]):
        A = A + t * Aq
    return sp.csc_matrix(A, dtype=model.dtype)


def assemble_rhs(model: TruthModel, mu) -> np.ndarray:
    """sum_q theta_f[q](mu) F_q"""
    theta = model.theta_f_values(mu)
    F = np.zeros(model.dofs, dtype=model.dtype)
    for t, Fq in zip(theta, model.F_q):
        F += t * Fq
    return F


class TruthSolver:
    """Sparse LU of A(mu), reused for several right-hand sides (Taylor snapshots)"""

    def __init__(self, model: TruthModel, mu):
        self.model = model
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        self.operator = assemble_operator(model, self.mu)
        try:
            self._lu = spla.splu(self.operator)
        except RuntimeError as e:
            raise TruthSolveError(self.mu, f"factorization failed ({e})") from e

    def solve(self, rhs: np.ndarray, check: bool = True) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=self.model.dtype)
        u = self._lu.solve(rhs)
        if check:
            scale = np.linalg.norm(rhs)
            residual = np.linalg.norm(self.operator @ u - rhs)
            if not np.all(np.isfinite(u)) or (scale > 0 and residual > 1e-8 * scale):
                raise TruthSolveError(self.mu, f"near-singular system (relative residual {residual / scale:.2e})")
        return u

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=self.model.dtype), trans="H")


def truth_solve(model: TruthModel, mu) -> np.ndarray:
    solver = TruthSolver(model, mu)
    return solver.solve(assemble_rhs(model, mu))


def solve_real_factor(lu, x: np.ndarray) -> np.ndarray:
    """Solve with a real sparse LU; complex right-hand sides are split into parts"""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return lu.solve(np.ascontiguousarray(x.real)) + 1j * lu.solve(np.ascontiguousarray(x.imag))
    return lu.solve(np.asarray(x, dtype=float))


def riesz_representer(model: TruthModel, functional: np.ndarray, mu=None) -> np.ndarray:
    """v with X_gram(mu) v = functional"""
    functional = np.asarray(functional)
    if functional.shape != (model.dofs,):
        raise ValueError(f"functional of length {functional.shape} for {model.dofs} dofs")
    return solve_real_factor(model.product.factorization(mu), functional)


def dual_norm(model: TruthModel, functional: np.ndarray, mu=None) -> float:
    """||functional||_{X'} = sqrt(v^H functional) with v the Riesz representer"""
    v = riesz_representer(model, functional, mu)
    return float(np.sqrt(max(np.real(np.vdot(v, functional)), 0.0)))


class PencilResult(NamedTuple):
    lam_min: float
    lam_max: float
    v_min: Optional[np.ndarray]


def normal_pencil(A, G, mu=None, vectors: bool = False) -> PencilResult:
    """
    Extreme eigenvalues of A^H G^{-1} A v = lambda G v

    Dense for sizes up to HIERRB_DENSE_LIMIT, otherwise ARPACK with
    shift-invert at zero for the smallest eigenvalue.
    """
    n = A.shape[0]
    dtype = np.result_type(A.dtype, np.float64)

    if n <= dense_limit():
        Ad, Gd = A.toarray(), G.toarray()
        S = Ad.conj().T @ sla.cho_solve(sla.cho_factor(Gd), Ad)
        S = 0.5 * (S + S.conj().T)
        try:
            w, V = sla.eigh(S, Gd)
        except sla.LinAlgError as e:
            raise EigenSolveError(mu, str(e)) from e
        return PencilResult(float(w[0]), float(w[-1]), V[:, 0] if vectors else None)

    A = sp.csc_matrix(A, dtype=dtype)
    G = sp.csc_matrix(G, dtype=dtype)
    lu_G = spla.splu(G)

    def apply_S(x):
        return A.conj().T @ lu_G.solve(np.asarray(A @ x, dtype=dtype))

    def apply_G_inv(x):
        return lu_G.solve(np.asarray(x, dtype=dtype))

    S_op = spla.LinearOperator((n, n), matvec=apply_S, dtype=dtype)
    G_inv = spla.LinearOperator((n, n), matvec=apply_G_inv, dtype=dtype)
    try:
        lu_A = spla.splu(A)
    except RuntimeError:
        lu_A = None

    try:
        lam_max = spla.eigsh(S_op, k=1, M=G, Minv=G_inv, which="LM", return_eigenvectors=False)
        if lu_A is None:
            # singular A: the smallest eigenvalue is zero
            return PencilResult(0.0, float(np.real(lam_max[0])), None)

        def apply_S_inv(x):
            y = lu_A.solve(np.asarray(x, dtype=dtype), trans="H")
            return lu_A.solve(np.asarray(G @ y, dtype=dtype))

        S_inv = spla.LinearOperator((n, n), matvec=apply_S_inv, dtype=dtype)
        w, V = spla.eigsh(S_op, k=1, M=G, sigma=0.0, OPinv=S_inv, which="LM")
    except spla.ArpackNoConvergence as e:
        raise EigenSolveError(mu) from e
    return PencilResult(float(np.real(w[0])), float(np.real(lam_max[0])), V[:, 0] if vectors else None)


def symmetric_pencil(S, G, mu=None, vectors: bool = False, smallest: bool = True) -> PencilResult:
    """Extreme eigenvalues of S v = lambda G v for Hermitian S (lam_min is nan when not requested)"""
    n = S.shape[0]
    if n <= dense_limit():
        try:
            w, V = sla.eigh(S.toarray(), G.toarray())
        except sla.LinAlgError as e:
            raise EigenSolveError(mu, str(e)) from e
        return PencilResult(float(w[0]), float(w[-1]), V[:, 0] if vectors else None)

    S = sp.csc_matrix(S)
    G = sp.csc_matrix(G, dtype=S.dtype)
    try:
        lam_max = spla.eigsh(S, k=1, M=G, which="LA", return_eigenvectors=False)
        if not smallest:
            return PencilResult(float("nan"), float(np.real(lam_max[0])), None)
        try:
            w, V = spla.eigsh(S, k=1, M=G, sigma=0.0, which="LM")
        except RuntimeError:
            # singular S, no shift-invert at zero
            w, V = spla.eigsh(S, k=1, M=G, which="SA")
    except spla.ArpackNoConvergence as e:
        raise EigenSolveError(mu) from e
    return PencilResult(float(np.real(w[0])), float(np.real(lam_max[0])), V[:, 0] if vectors else None)


def _norm_matrix(model: TruthModel, mu, norm_mu):
    return model.product.matrix(norm_mu if norm_mu is not None else mu)


def exact_inf_sup(model: TruthModel, mu, norm_mu=None) -> float:
    """beta(mu) = sqrt(lambda_min) of the normal-equation pencil.

    The X-norm is taken at `norm_mu` when given (fixed reference norm),
    otherwise at mu.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    lam_min = normal_pencil(assemble_operator(model, mu), _norm_matrix(model, mu, norm_mu), mu).lam_min
    return float(np.sqrt(max(lam_min, 0.0)))


def exact_continuity(model: TruthModel, mu, norm_mu=None) -> float:
    """gamma(mu) = sqrt(lambda_max) of the same pencil"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    lam_max = normal_pencil(assemble_operator(model, mu), _norm_matrix(model, mu, norm_mu), mu).lam_max
    return float(np.sqrt(max(lam_max, 0.0)))


def exact_stability(model: TruthModel, mu, norm_mu=None) -> Tuple[float, float]:
    """(beta, gamma) from one eigen decomposition"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    res = normal_pencil(assemble_operator(model, mu), _norm_matrix(model, mu, norm_mu), mu)
    return float(np.sqrt(max(res.lam_min, 0.0))), float(np.sqrt(max(res.lam_max, 0.0)))


def exact_coercivity(model: TruthModel, mu, norm_mu=None) -> float:
    """alpha(mu) = smallest eigenvalue of the Hermitian part of A(mu) relative to X"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    A = assemble_operator(model, mu)
    return symmetric_pencil(0.5 * (A + A.conj().T), _norm_matrix(model, mu, norm_mu), mu).lam_min


def x_norms(model: TruthModel, vectors: np.ndarray, mus) -> np.ndarray:
    """Column-wise ||v_j||_{X(mu_j)}; a fixed product ignores mus"""
    vectors = np.asarray(vectors)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    squared = np.zeros(vectors.shape[1])
    mus = np.atleast_2d(np.asarray(mus, dtype=float)) if mus is not None else None
    for sigma, G in model.product.terms:
        q = np.real(np.sum(vectors.conj() * (G @ vectors), axis=0))
        if sigma.is_constant:
            coeff = np.full(vectors.shape[1], float(np.real(sigma(np.zeros(1)))))
        else:
            coeff = np.array([float(np.real(sigma(mu))) for mu in mus])
        squared += coeff * q
    return np.sqrt(np.maximum(squared, 0.0))
