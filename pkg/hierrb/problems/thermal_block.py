"""
Thermal block on the unit square.

-div(alpha(x; mu) grad u) = 0 with alpha = mu_1 on the odd blocks and mu_2 on
the even blocks of a 3x3 checkerboard, flux g_N = 1 on the bottom edge,
insulated sides and u = 0 on the top edge. P1 elements on a uniform
triangulation.
"""

import logging
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, field_validator

from hierrb.core.affine import InnerProduct, ThetaFunction, TruthModel
from hierrb.core.param_space import ParameterDomain
from hierrb.exceptions import MeshError

logger = logging.getLogger(__name__)

BLOCKS = 3


class ThermalBlockConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    cells: int = 33  # mesh cells per side
    lower: Tuple[float, float] = (0.02, 0.02)
    upper: Tuple[float, float] = (1.0, 1.0)

    @field_validator("cells")
    @classmethod
    def _aligned(cls, v):
        if v < BLOCKS or v % BLOCKS:
            raise MeshError(f"cells per side must be a positive multiple of {BLOCKS}, got {v}")
        return v


def unit_square_mesh(cells: int):
    """Nodes (row-major from the bottom-left corner) and triangles of a uniform grid"""
    n = cells + 1
    x = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(x, x, indexing="xy")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    i, j = np.meshgrid(np.arange(cells), np.arange(cells), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw = j * n + i
    se, nw, ne = sw + 1, sw + n, sw + n + 1
    lower_tri = np.stack([sw, se, ne], axis=1)
    upper_tri = np.stack([sw, ne, nw], axis=1)
    triangles = np.concatenate([lower_tri, upper_tri])
    cell_ij = np.concatenate([np.stack([i, j], axis=1)] * 2)
    return nodes, triangles, cell_ij


def block_index(cell_ij: np.ndarray, cells: int) -> np.ndarray:
    """1-based block number, counted row by row from the bottom-left block"""
    size = cells // BLOCKS
    col, row = cell_ij[:, 0] // size, cell_ij[:, 1] // size
    return row * BLOCKS + col + 1


def p1_stiffness(nodes: np.ndarray, triangles: np.ndarray, coefficient: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix of sum_T c_T int_T grad u . grad v"""
    p = nodes[triangles]  # (T, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)

    # gradients of the barycentric coordinates
    grads = np.empty((len(triangles), 3, 2))
    grads[:, 1, 0], grads[:, 1, 1] = d2[:, 1] / det, -d2[:, 0] / det
    grads[:, 2, 0], grads[:, 2, 1] = -d1[:, 1] / det, d1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]

    local = np.einsum("tad,tbd->tab", grads, grads) * (area * coefficient)[:, None, None]
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    n = len(nodes)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def bottom_flux(nodes: np.ndarray, cells: int) -> np.ndarray:
    """int_{y=0} v ds for every node (lumped two-point rule is exact for P1)"""
    F = np.zeros(len(nodes))
    h = 1.0 / cells
    F[: cells + 1] = h
    F[0] = F[cells] = 0.5 * h
    return F


def build_thermal_block(cfg: ThermalBlockConfig) -> TruthModel:
    nodes, triangles, cell_ij = unit_square_mesh(cfg.cells)
    blocks = block_index(cell_ij, cfg.cells)
    odd = (blocks % 2 == 1).astype(float)

    A_odd = p1_stiffness(nodes, triangles, odd)
    A_even = p1_stiffness(nodes, triangles, 1.0 - odd)
    F = bottom_flux(nodes, cfg.cells)

    free = np.flatnonzero(nodes[:, 1] < 1.0 - 0.5 / cfg.cells)
    A_q = tuple(sp.csc_matrix(A[free][:, free]) for A in (A_odd, A_even))
    X = A_q[0] + A_q[1]

    model = TruthModel(
        name="thermal_block",
        domain=ParameterDomain(cfg.lower, cfg.upper),
        A_q=A_q,
        F_q=(F[free],),
        theta_a=(ThetaFunction.monomial(0, 1, name="mu1"), ThetaFunction.monomial(1, 1, name="mu2")),
        theta_f=(ThetaFunction.constant(1.0, "1"),),
        product=InnerProduct.fixed(X, name="A(1,1)"),
        field="real",
        psd_terms=(0, 1),
        coordinates=nodes[free],
        metadata={"cells": cfg.cells, "nodes": len(nodes), "free": free, "product_mu": (1.0, 1.0)},
    )
    logger.info(f"thermal block: {len(nodes)} nodes, {model.dofs} dofs after Dirichlet elimination")
    return model


def direct_operator(cfg: ThermalBlockConfig, mu) -> sp.csc_matrix:
    """Stiffness with alpha(x; mu) assembled elementwise, without the affine split"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    nodes, triangles, cell_ij = unit_square_mesh(cfg.cells)
    blocks = block_index(cell_ij, cfg.cells)
    alpha = np.where(blocks % 2 == 1, mu[0], mu[1])
    free = np.flatnonzero(nodes[:, 1] < 1.0 - 0.5 / cfg.cells)
    return sp.csc_matrix(p1_stiffness(nodes, triangles, alpha)[free][:, free])
