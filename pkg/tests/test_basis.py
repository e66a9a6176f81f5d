import numpy as np
import pytest

from hierrb.core.affine import truth_solve, x_norms
from hierrb.core.basis import (ReducedBasis, SnapshotTag, orthonormalize_pod, project, rb_solve, rb_solve_many,
                               reconstruct)
from hierrb.core.param_space import random_sample
from hierrb.exceptions import BasisExtensionError


def snapshot_basis(model, mus):
    snaps = np.column_stack([truth_solve(model, mu) for mu in mus])
    tags = [SnapshotTag(j + 1, tuple(mu)) for j, mu in enumerate(mus)]
    return orthonormalize_pod(snaps, model, tags=tags)


@pytest.fixture(scope="module")
def thermal_basis(thermal):
    return snapshot_basis(thermal, [(0.1, 0.1), (1.0, 0.05), (0.05, 1.0), (0.5, 0.5)])


@pytest.fixture(scope="module")
def helmholtz_basis(helmholtz):
    return snapshot_basis(helmholtz, [(1.0,), (2.5,), (4.0,), (5.0,)])


def test_basis_is_orthonormal(thermal, thermal_basis, helmholtz, helmholtz_basis):
    assert thermal_basis.size == 4
    assert np.allclose(thermal_basis.gramian(thermal), np.eye(4), atol=1e-12)
    assert np.allclose(helmholtz_basis.gramian(helmholtz), np.eye(4), atol=1e-12)
    assert helmholtz_basis.product_mu == tuple(helmholtz.reference_mu)


def test_extension_keeps_prefix(thermal, thermal_basis):
    u = truth_solve(thermal, (0.3, 0.7))
    extended = orthonormalize_pod(u, thermal, base=thermal_basis, tags=[SnapshotTag(5, (0.3, 0.7))])
    assert extended.size == 5
    assert np.array_equal(extended.vectors[:, :4], thermal_basis.vectors)
    assert extended.prefix(4).tags == thermal_basis.tags


def test_dependent_snapshot_is_dropped(thermal, thermal_basis):
    combo = thermal_basis.vectors[:, 0] + 2 * thermal_basis.vectors[:, 1]
    with pytest.raises(BasisExtensionError) as info:
        orthonormalize_pod(combo, thermal, base=thermal_basis)
    assert info.value.basis is thermal_basis

    u = truth_solve(thermal, (0.3, 0.7))
    extended = orthonormalize_pod(np.column_stack([u, 3 * u]), thermal, base=thermal_basis)
    assert extended.size == 5


def test_snapshot_reproduction(thermal, thermal_basis, helmholtz, helmholtz_basis):
    for model, basis in ((thermal, thermal_basis), (helmholtz, helmholtz_basis)):
        rm = project(model, basis)
        for mu in basis.snapshot_params():
            u = truth_solve(model, mu)
            u_n = reconstruct(basis, rb_solve(rm, mu))
            assert x_norms(model, u - u_n, mu)[0] <= 1e-9 * x_norms(model, u, mu)[0]


def test_batched_solve_matches_single(helmholtz, helmholtz_basis):
    rm = project(helmholtz, helmholtz_basis)
    mus = random_sample(helmholtz.domain, 7, seed=2).points
    batched = rb_solve_many(rm, mus, 3)
    for mu, row in zip(mus, batched):
        assert np.allclose(row, rb_solve(rm, mu, 3), rtol=1e-12, atol=1e-14)


def test_reduced_gramian(thermal, thermal_basis, helmholtz, helmholtz_basis):
    assert np.allclose(project(thermal, thermal_basis).gramian(), np.eye(4), atol=1e-12)
    rm = project(helmholtz, helmholtz_basis)
    mu = np.array([3.3])
    G = helmholtz.product.matrix(mu)
    V = helmholtz_basis.vectors
    assert np.allclose(rm.gramian(mu), V.conj().T @ (G @ V), atol=1e-10)


def test_reduced_dimension_checked(thermal, thermal_basis):
    rm = project(thermal, thermal_basis)
    with pytest.raises(ValueError):
        rb_solve(rm, (0.5, 0.5), 5)
    with pytest.raises(ValueError):
        thermal_basis.prefix(7)


def test_stored_basis_roundtrip(helmholtz, helmholtz_basis):
    restored = ReducedBasis.from_arrays(helmholtz_basis.to_arrays(), helmholtz_basis.meta())
    assert restored.tags == helmholtz_basis.tags
    assert restored.product_mu == helmholtz_basis.product_mu
    assert np.array_equal(restored.vectors, helmholtz_basis.vectors)
