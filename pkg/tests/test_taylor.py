import numpy as np
import pytest

from hierrb.core.affine import truth_solve
from hierrb.core.basis import ReducedBasis, SnapshotTag, orthonormalize_pod
from hierrb.core.taylor import TaylorConfig, build_taylor_space, taylor_snapshot, taylor_snapshots


def central_difference(model, mu, direction, h):
    step = np.zeros(model.domain.dim)
    step[direction - 1] = h
    return (truth_solve(model, mu + step) - truth_solve(model, mu - step)) / (2 * h)


@pytest.mark.parametrize("name, mu, direction, steps", [
    ("thermal", [0.5, 0.4], 1, (1e-2, 5e-3, 2.5e-3)),
    ("thermal", [0.5, 0.4], 2, (1e-2, 5e-3, 2.5e-3)),
    ("helmholtz", [3.0], 1, (2e-3, 1e-3, 5e-4)),
])
def test_first_derivative_matches_central_differences(name, mu, direction, steps, request):
    model = request.getfixturevalue(name)
    mu = np.array(mu)
    derivative = taylor_snapshots(model, mu, 1)[(direction, 1)]
    errors = []
    for h in steps:
        fd = central_difference(model, mu, direction, h)
        errors.append(np.linalg.norm(fd - derivative) / np.linalg.norm(derivative))
    errors = np.array(errors)
    # second order until round-off takes over
    resolved = errors[1:] > 1e-10
    orders = np.log2(errors[:-1][resolved] / errors[1:][resolved])
    assert np.all(orders >= 1.9)
    assert errors[-1] <= 1e-5


def test_second_derivative_matches_differences_of_first(helmholtz):
    mu = np.array([2.0])
    h = 1e-4
    second = taylor_snapshots(helmholtz, mu, 2)[(1, 2)]
    fd = (taylor_snapshots(helmholtz, mu + h, 1)[(1, 1)] - taylor_snapshots(helmholtz, mu - h, 1)[(1, 1)]) / (2 * h)
    assert np.linalg.norm(fd - second) <= 1e-5 * np.linalg.norm(second)


def test_snapshot_argument_checks(thermal):
    u = truth_solve(thermal, [0.5, 0.5])
    with pytest.raises(ValueError):
        taylor_snapshot(thermal, [0.5, 0.5], 3, 1, [u])
    with pytest.raises(ValueError):
        taylor_snapshot(thermal, [0.5, 0.5], 1, 2, [u])


def test_nominal_size():
    assert TaylorConfig(2, 2).nominal_size(3) == 3 * (1 + 2 * 2)
    assert TaylorConfig((0, 0, 3), 1).nominal_size(3) == 3 + 3
    with pytest.raises(ValueError):
        TaylorConfig((1, -1), 1)


def test_taylor_space_extends_lagrange_basis(thermal):
    params = [np.array([0.3, 0.6]), np.array([0.9, 0.1])]
    snaps = [truth_solve(thermal, mu) for mu in params]
    base = orthonormalize_pod(np.column_stack(snaps), thermal,
                              tags=[SnapshotTag(n + 1, tuple(mu)) for n, mu in enumerate(params)])
    cfg = TaylorConfig(1, thermal.domain.dim)
    space = build_taylor_space(thermal, params, cfg, base, solutions=snaps)
    assert space.size == cfg.nominal_size(2)
    assert np.array_equal(space.vectors[:, :2], base.vectors)
    assert [t.order for t in space.tags] == [0, 0, 1, 1, 1, 1]
    assert np.allclose(space.gramian(thermal), np.eye(space.size), atol=1e-10)


def test_zero_orders_leave_basis_unchanged(thermal):
    base = ReducedBasis.empty(thermal)
    assert build_taylor_space(thermal, [np.array([0.5, 0.5])], TaylorConfig(0, 2), base) is base
