"""
Taylor snapshots: pure parameter derivatives d^k u / d mu_i^k of the truth
solution, obtained by differentiating A(mu) u(mu) = F(mu):

    A(mu) u^(k) = d^k F - sum_{m=1..k} C(k, m) d^m A u^(k-m)

All orders at one parameter reuse the LU of A(mu).
"""

import logging
from dataclasses import dataclass
from math import comb
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from hierrb.core.affine import TruthModel, TruthSolver, assemble_rhs
from hierrb.core.basis import ReducedBasis, SnapshotTag, orthonormalize_pod
from hierrb.exceptions import BasisExtensionError, EnrichmentError
from hierrb.utils.helpers import format_mu, parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaylorConfig:
    """Derivative order K_n per snapshot parameter (one int for all, or a list)"""
    orders: Union[int, Tuple[int, ...]]
    dim: int

    def __post_init__(self):
        orders = (self.orders,) if np.isscalar(self.orders) else tuple(self.orders)
        if any(int(k) < 0 for k in orders):
            raise ValueError(f"derivative orders must be nonnegative, got {orders}")
        if self.dim < 1:
            raise ValueError("parameter dimension must be positive")

    def order_for(self, n: int) -> int:
        """K_n for the 1-based snapshot number n"""
        if np.isscalar(self.orders):
            return int(self.orders)
        return int(self.orders[n - 1]) if n <= len(self.orders) else 0

    def nominal_size(self, n_snapshots: int) -> int:
        """M = sum_n (1 + K_n P) before dropping"""
        return sum(1 + self.order_for(n) * self.dim for n in range(1, n_snapshots + 1))


def _derivative_sum(thetas, blocks, mu, direction: int, order: int, vector=None):
    total = None
    for theta, block in zip(thetas, blocks):
        coeff = theta.derivative(mu, direction, order)
        if coeff == 0:
            continue
        term = coeff * (block @ vector if vector is not None else block)
        total = term if total is None else total + term
    return total


def taylor_snapshot(model: TruthModel, mu, direction: int, order: int, lower: Sequence[np.ndarray],
                    solver: TruthSolver = None) -> np.ndarray:
    """
    order-th derivative of u in coordinate `direction` (1-based)

    Args:
        model: truth model
        mu: parameter
        direction: coordinate i in 1..P
        order: k >= 1
        lower: u^(0), ..., u^(k-1) at mu for the same direction
        solver: factorization of A(mu) to reuse

    Returns:
        u^(k)
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if not 1 <= direction <= model.domain.dim:
        raise ValueError(f"direction {direction} outside 1..{model.domain.dim}")
    if order < 1 or len(lower) < order:
        raise ValueError(f"order {order} needs {order} lower-order snapshots, got {len(lower)}")
    solver = solver or TruthSolver(model, mu)
    axis = direction - 1

    rhs = np.zeros(model.dofs, dtype=model.dtype)
    d_f = _derivative_sum(model.theta_f, model.F_q, mu, axis, order)
    if d_f is not None:
        rhs += d_f
    for m in range(1, order + 1):
        d_a = _derivative_sum(model.theta_a, model.A_q, mu, axis, m, lower[order - m])
        if d_a is not None:
            rhs -= comb(order, m) * d_a
    return solver.solve(rhs)


def taylor_snapshots(model: TruthModel, mu, max_order: int,
                     solution: np.ndarray = None) -> Dict[Tuple[int, int], np.ndarray]:
    """All pure derivatives up to max_order at mu, keyed by (direction, order)"""
    solver = TruthSolver(model, mu)
    u0 = solution if solution is not None else solver.solve(assemble_rhs(model, mu))
    result = {}
    for i in range(1, model.domain.dim + 1):
        chain = [u0]
        for k in range(1, max_order + 1):
            chain.append(taylor_snapshot(model, mu, i, k, chain, solver))
            result[(i, k)] = chain[-1]
    return result


def build_taylor_space(model: TruthModel, snapshot_params: Sequence, cfg: TaylorConfig, base: ReducedBasis,
                       drop_tol: float = 1e-10, solutions: Optional[Sequence[np.ndarray]] = None,
                       workers: int = None) -> ReducedBasis:
    """
    Append derivative snapshots up to K_n at every mu_n to `base`

    `base` must span the solution snapshots at snapshot_params; its columns
    stay a prefix of the result.

    Raises:
        EnrichmentError: every derivative snapshot was dropped
    """
    params = [np.atleast_1d(np.asarray(mu, dtype=float)) for mu in snapshot_params]
    jobs = [(n, mu) for n, mu in enumerate(params, start=1) if cfg.order_for(n) > 0]
    if not jobs:
        return base

    def derivatives(job):
        n, mu = job
        u0 = solutions[n - 1] if solutions is not None else None
        return n, mu, taylor_snapshots(model, mu, cfg.order_for(n), u0)

    vectors: List[np.ndarray] = []
    tags: List[SnapshotTag] = []
    for n, mu, snaps in parallel_map(derivatives, jobs, workers):
        for (i, k), v in sorted(snaps.items(), key=lambda item: (item[0][1], item[0][0])):
            vectors.append(v)
            tags.append(SnapshotTag(n, tuple(float(x) for x in mu), i, k))

    try:
        extended = orthonormalize_pod(np.column_stack(vectors), model, drop_tol, base, tags)
    except BasisExtensionError as e:
        raise EnrichmentError(
            f"all {len(vectors)} derivative snapshots at {', '.join(format_mu(mu) for _, mu in jobs)} were dropped"
        ) from e

    nominal = base.size + len(vectors)
    logger.info(f"taylor space: M = {extended.size} (nominal {nominal}, orders "
                f"{[cfg.order_for(n) for n, _ in jobs]})")
    return extended
