"""
1-D Helmholtz problem with wavenumber mu:

    -u'' - mu^2 u = r  in (0, 1),   u(0) = 0,   u'(1) + i mu u(1) = g

Spectral elements of arbitrary degree on Gauss-Lobatto-Legendre nodes.
The energy norm ||v||_{1,mu}^2 = mu^2 ||v||^2 + ||v'||^2 makes the
X-inner product parameter dependent.
"""

import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
import numpy.polynomial.legendre as leg
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from hierrb.core.affine import InnerProduct, ThetaFunction, TruthModel
from hierrb.core.param_space import ParameterDomain

logger = logging.getLogger(__name__)


class HelmholtzConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    elements: int = Field(100, ge=1)
    degree: int = Field(6, ge=1)
    source: float = 1.0  # r
    robin: float = 0.0  # g
    lower: Tuple[float] = (1.0,)
    upper: Tuple[float] = (5.0,)


@lru_cache(maxsize=None)
def gll_element(degree: int):
    """Reference GLL nodes and exact local mass/stiffness on [-1, 1]"""
    inner = leg.Legendre.basis(degree).deriv().roots() if degree > 1 else np.array([])
    nodes = np.concatenate([[-1.0], np.sort(np.real(inner)), [1.0]])

    # Lagrange basis through the nodes, expressed in Legendre coefficients
    vandermonde = leg.legvander(nodes, degree)
    coeffs = np.linalg.inv(vandermonde)

    xq, wq = leg.leggauss(degree + 2)
    phi = leg.legvander(xq, degree) @ coeffs
    dphi = np.stack([leg.legval(xq, leg.legder(coeffs[:, a])) for a in range(degree + 1)], axis=1)

    mass = phi.T @ (wq[:, None] * phi)
    stiffness = dphi.T @ (wq[:, None] * dphi)
    return nodes, mass, stiffness


def assemble_1d(cfg: HelmholtzConfig):
    """Global K, M, B on all nodes plus node coordinates"""
    p, E = cfg.degree, cfg.elements
    ref_nodes, ref_mass, ref_stiff = gll_element(p)
    h = 1.0 / E

    n = E * p + 1
    left = np.arange(E) * h
    coords = np.concatenate([(left[:, None] + 0.5 * h * (ref_nodes[None, :-1] + 1.0)).ravel(), [1.0]])

    dofs = np.arange(E)[:, None] * p + np.arange(p + 1)[None, :]
    rows = np.repeat(dofs, p + 1, axis=1).ravel()
    cols = np.tile(dofs, (1, p + 1)).ravel()
    M = sp.csr_matrix((np.tile(0.5 * h * ref_mass.ravel(), E), (rows, cols)), shape=(n, n))
    K = sp.csr_matrix((np.tile(2.0 / h * ref_stiff.ravel(), E), (rows, cols)), shape=(n, n))
    B = sp.csr_matrix(([1.0], ([n - 1], [n - 1])), shape=(n, n))
    return K, M, B, coords


def build_helmholtz_1d(cfg: HelmholtzConfig) -> TruthModel:
    K, M, B, coords = assemble_1d(cfg)
    free = np.arange(1, len(coords))
    K, M, B = (sp.csc_matrix(A[free][:, free]) for A in (K, M, B))

    F_q, theta_f = [], []
    if cfg.source != 0.0 or cfg.robin == 0.0:
        F_q.append(M @ np.ones(len(free)))
        theta_f.append(ThetaFunction.constant(complex(cfg.source), "r"))
    if cfg.robin != 0.0:
        F_q.append(np.eye(1, len(free), len(free) - 1).ravel())
        theta_f.append(ThetaFunction.constant(complex(cfg.robin), "g"))

    product = InnerProduct(
        [(ThetaFunction.monomial(0, 2, 1.0, "mu^2"), M), (ThetaFunction.constant(1.0, "1"), K)],
        name="H1(mu)",
    )
    model = TruthModel(
        name="helmholtz",
        domain=ParameterDomain(cfg.lower, cfg.upper),
        A_q=(K, M, B),
        F_q=tuple(np.asarray(f, dtype=complex) for f in F_q),
        theta_a=(
            ThetaFunction.constant(1.0 + 0j, "1"),
            ThetaFunction.monomial(0, 2, -1.0 + 0j, "-mu^2"),
            ThetaFunction.monomial(0, 1, 1j, "i*mu"),
        ),
        theta_f=tuple(theta_f),
        product=product,
        field="complex",
        psd_terms=(0, 1, 2),
        coordinates=coords[free][:, None],
        metadata={"elements": cfg.elements, "degree": cfg.degree, "source": cfg.source, "robin": cfg.robin},
    )
    logger.info(f"helmholtz: {cfg.elements} elements of degree {cfg.degree}, {model.dofs} dofs")
    return model


def exact_solution(cfg: HelmholtzConfig, mu: float, x) -> np.ndarray:
    """Closed-form solution for constant r and g"""
    mu = float(np.atleast_1d(mu)[0])
    x = np.asarray(x, dtype=float)
    r, g = cfg.source, cfg.robin
    a = r / mu**2
    b = (g + a * mu * np.sin(mu) - 1j * mu * a * np.cos(mu) + 1j * r / mu) / (mu * np.exp(1j * mu))
    return -r / mu**2 + a * np.cos(mu * x) + b * np.sin(mu * x)
