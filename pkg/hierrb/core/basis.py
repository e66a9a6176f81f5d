"""
Reduced bases, Galerkin projection and online solves.

Bases are X-orthonormal and nested: every prefix of the column list is the
basis of a smaller reduced space, so X_N and X_M share one matrix.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from hierrb.core.affine import TruthModel
from hierrb.exceptions import BasisExtensionError, ReducedSolveError
from hierrb.utils.helpers import format_mu

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SnapshotTag:
    """Origin of a basis column: snapshot parameter number n (1-based) and the
    derivative direction/order (0/0 for a plain solution snapshot)"""
    n: int
    mu: tuple
    direction: int = 0
    order: int = 0

    @property
    def is_lagrange(self) -> bool:
        return self.order == 0

    def as_row(self) -> list:
        return [self.n, *self.mu, self.direction, self.order]


@dataclass(frozen=True)
class ReducedBasis:
    vectors: np.ndarray
    tags: tuple
    product: str = "X"
    product_mu: Optional[tuple] = None

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] != len(self.tags):
            raise ValueError(f"{self.vectors.shape} basis matrix with {len(self.tags)} tags")

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @property
    def dofs(self) -> int:
        return self.vectors.shape[0]

    def prefix(self, n: int) -> "ReducedBasis":
        if not 0 <= n <= self.size:
            raise ValueError(f"prefix of length {n} from a basis of size {self.size}")
        return ReducedBasis(self.vectors[:, :n], self.tags[:n], self.product, self.product_mu)

    def snapshot_params(self) -> List[np.ndarray]:
        """Parameters of the plain solution snapshots, in selection order"""
        return [np.asarray(t.mu) for t in self.tags if t.is_lagrange]

    def gramian(self, model: TruthModel) -> np.ndarray:
        G = model.product.matrix(self.product_mu)
        return self.vectors.conj().T @ (G @ self.vectors)

    def to_arrays(self) -> dict:
        dim = len(self.tags[0].mu) if self.tags else 0
        tags = np.array([t.as_row() for t in self.tags], dtype=float).reshape(-1, dim + 3)
        return {"vectors": self.vectors, "tags": tags}

    def meta(self) -> dict:
        return {"product": self.product,
                "product_mu": list(self.product_mu) if self.product_mu is not None else None}

    @classmethod
    def from_arrays(cls, arrays: dict, meta: dict) -> "ReducedBasis":
        rows = np.atleast_2d(arrays["tags"])
        tags = tuple(SnapshotTag(int(r[0]), tuple(float(x) for x in r[1:-2]), int(r[-2]), int(r[-1]))
                     for r in rows if len(r))
        product_mu = tuple(meta["product_mu"]) if meta.get("product_mu") is not None else None
        return cls(np.asarray(arrays["vectors"]), tags, meta.get("product", "X"), product_mu)

    @classmethod
    def empty(cls, model: TruthModel) -> "ReducedBasis":
        mu_ref = None if model.product.is_fixed else tuple(model.reference_mu)
        return cls(np.zeros((model.dofs, 0), dtype=model.dtype), (), model.product.name, mu_ref)


def orthonormalize_pod(snapshots, model: TruthModel, drop_tol: float = 1e-10,
                       base: Optional[ReducedBasis] = None,
                       tags: Optional[Sequence[SnapshotTag]] = None) -> ReducedBasis:
    """
    Extend `base` by X-orthonormalized snapshots

    Existing columns are kept as they are; new snapshots are orthogonalized
    against them and among themselves in the given order (two Gram-Schmidt
    passes). A snapshot whose remainder has X-norm <= drop_tol * sigma_1,
    sigma_1 being the leading singular value of the snapshot batch, is dropped.

    Args:
        snapshots: truth vectors, shape (dofs,) or (dofs, k)
        model: truth model providing the X-inner product
        drop_tol: relative drop tolerance
        base: basis to extend (empty when None)
        tags: one tag per snapshot

    Returns:
        The extended basis

    Raises:
        BasisExtensionError: every new snapshot was dropped
    """
    if drop_tol <= 0:
        raise ValueError("drop tolerance must be positive")
    S = np.asarray(snapshots)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[1] == 0:
        raise ValueError("no snapshots given")
    base = base if base is not None else ReducedBasis.empty(model)
    if tags is None:
        tags = [SnapshotTag(base.size + j + 1, ()) for j in range(S.shape[1])]
    if len(tags) != S.shape[1]:
        raise ValueError(f"{len(tags)} tags for {S.shape[1]} snapshots")

    G = model.product.matrix(base.product_mu)
    dtype = np.result_type(S.dtype, base.vectors.dtype, model.dtype)

    batch_gram = S.conj().T @ (G @ S)
    sigma_1 = float(np.sqrt(max(sla.eigvalsh(0.5 * (batch_gram + batch_gram.conj().T))[-1], 0.0)))

    kept_tags = list(base.tags)
    Xi = base.vectors.astype(dtype)
    GXi = G @ Xi

    for j in range(S.shape[1]):
        v = S[:, j].astype(dtype)
        for _ in range(2):
            if Xi.shape[1]:
                v = v - Xi @ (GXi.conj().T @ v)
        norm = float(np.sqrt(max(np.real(np.vdot(v, G @ v)), 0.0)))
        if sigma_1 == 0.0 or norm <= drop_tol * sigma_1:
            logger.warning(f"snapshot {tags[j]} dropped (remainder {norm:.3e}, sigma_1 {sigma_1:.3e})")
            continue
        v = v / norm
        kept_tags.append(tags[j])
        Xi = np.column_stack([Xi, v])
        GXi = np.column_stack([GXi, G @ v])

    if len(kept_tags) == base.size:
        raise BasisExtensionError(base, f"all {S.shape[1]} new snapshots are linearly dependent")

    logger.debug(f"basis extended from {base.size} to {len(kept_tags)} columns")
    return ReducedBasis(Xi, tuple(kept_tags), base.product, base.product_mu)


@dataclass(frozen=True)
class ReducedModel:
    """Parameter independent reduced blocks of a Galerkin projection"""
    A_red_q: np.ndarray  # (Q_a, M, M)
    F_red_q: np.ndarray  # (Q_f, M)
    gram_red_r: np.ndarray  # (R, M, M)
    theta_a: tuple
    theta_f: tuple
    sigma: tuple
    problem: str = ""

    @property
    def size(self) -> int:
        return self.A_red_q.shape[1]

    @property
    def dtype(self):
        return np.result_type(self.A_red_q.dtype, self.F_red_q.dtype)

    def _check(self, n):
        n = self.size if n is None else int(n)
        if not 1 <= n <= self.size:
            raise ValueError(f"reduced dimension {n} outside 1..{self.size}")
        return n

    def operator(self, mu, n: int = None) -> np.ndarray:
        n = self._check(n)
        theta = np.array([t(mu) for t in self.theta_a])
        return np.tensordot(theta, self.A_red_q[:, :n, :n], axes=1)

    def rhs(self, mu, n: int = None) -> np.ndarray:
        n = self._check(n)
        theta = np.array([t(mu) for t in self.theta_f])
        return np.tensordot(theta, self.F_red_q[:, :n], axes=1)

    def gramian(self, mu=None, n: int = None) -> np.ndarray:
        """G_red(mu) = sum_r sigma_r(mu) gram_red_r"""
        n = self._check(n)
        if mu is None:
            mu = np.zeros(1)
        coeffs = np.array([float(np.real(s(mu))) for s in self.sigma])
        return np.tensordot(coeffs, self.gram_red_r[:, :n, :n], axes=1)

    def to_arrays(self) -> dict:
        return {"A_red_q": self.A_red_q, "F_red_q": self.F_red_q, "gram_red_r": self.gram_red_r}

    @classmethod
    def from_arrays(cls, arrays: dict, model: TruthModel) -> "ReducedModel":
        """Rebuild from stored blocks; coefficient functions come from the rebuilt truth model"""
        return cls(
            np.asarray(arrays["A_red_q"]),
            np.asarray(arrays["F_red_q"]),
            np.asarray(arrays["gram_red_r"]),
            model.theta_a,
            model.theta_f,
            tuple(s for s, _ in model.product.terms),
            model.name,
        )


def project(model: TruthModel, basis: ReducedBasis) -> ReducedModel:
    if basis.size > model.dofs:
        raise ValueError(f"basis of size {basis.size} exceeds {model.dofs} truth dofs")
    Xi = basis.vectors
    XiH = Xi.conj().T
    A_red = np.stack([XiH @ (A @ Xi) for A in model.A_q])
    F_red = np.stack([XiH @ F for F in model.F_q])
    gram_red = np.stack([XiH @ (G @ Xi) for G in model.product.blocks])
    return ReducedModel(
        A_red, F_red, gram_red,
        model.theta_a, model.theta_f, tuple(s for s, _ in model.product.terms), model.name,
    )


def rb_solve(rm: ReducedModel, mu, n: int = None) -> np.ndarray:
    """Coefficients of u_n(mu) in the first n basis columns"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = rm._check(n)
    try:
        u = sla.solve(rm.operator(mu, n), rm.rhs(mu, n), check_finite=False)
    except (sla.LinAlgError, ValueError) as e:
        raise ReducedSolveError(mu, n) from e
    if not np.all(np.isfinite(u)):
        raise ReducedSolveError(mu, n)
    return u


def rb_solve_many(rm: ReducedModel, mus, n: int = None) -> np.ndarray:
    """Batched rb_solve, one row of coefficients per parameter"""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    n = rm._check(n)
    theta_a = np.array([[t(mu) for t in rm.theta_a] for mu in mus])
    theta_f = np.array([[t(mu) for t in rm.theta_f] for mu in mus])
    A = np.einsum("kq,qij->kij", theta_a, rm.A_red_q[:, :n, :n])
    F = np.einsum("kq,qi->ki", theta_f, rm.F_red_q[:, :n])
    try:
        U = np.linalg.solve(A, F[..., None])[..., 0]
    except np.linalg.LinAlgError:
        # locate the failing parameter
        return np.stack([rb_solve(rm, mu, n) for mu in mus])
    bad = ~np.all(np.isfinite(U), axis=1)
    if np.any(bad):
        raise ReducedSolveError(mus[np.argmax(bad)], n)
    return U


def reconstruct(basis: ReducedBasis, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] > basis.size:
        raise ValueError(f"{coeffs.shape[0]} coefficients for a basis of size {basis.size}")
    return basis.vectors[:, : coeffs.shape[0]] @ coeffs


def describe(basis: ReducedBasis) -> str:
    lagrange = ", ".join(format_mu(mu) for mu in basis.snapshot_params())
    return f"{basis.size} columns, snapshots at {lagrange or '-'}"
