import numpy as np
import pytest

from hierrb.core.affine import exact_stability, truth_solve, x_norms
from hierrb.core.basis import project, rb_solve, rb_solve_many
from hierrb.core.estimators import (ResidualData, delta_hier, delta_hier_certified, delta_hier_many, delta_std,
                                    delta_std_certified, direct_residual_norm, dual_norm_bounds, effectivity,
                                    residual_dual_norm, residual_dual_norm_bound, residual_dual_norm_bounds,
                                    residual_dual_norms)
from hierrb.core.greedy import strong_greedy
from hierrb.core.param_space import random_sample
from hierrb.core.saturation import theta_train
from hierrb.core.truth_cache import truth_errors
from hierrb.exceptions import EffectivityBoundError, SaturationError, StabilityBoundError


@pytest.fixture(scope="module")
def thermal_setup(thermal, thermal_train, thermal_cache):
    basis, _ = strong_greedy(thermal, thermal_train, 6, cache=thermal_cache)
    return basis, project(thermal, basis), ResidualData.build(thermal, basis)


@pytest.fixture(scope="module")
def helmholtz_setup(helmholtz, helmholtz_train, helmholtz_cache):
    basis, _ = strong_greedy(helmholtz, helmholtz_train, 6, cache=helmholtz_cache)
    return basis, project(helmholtz, basis), ResidualData.build(helmholtz, basis)


@pytest.mark.parametrize("name", ["thermal", "helmholtz"])
def test_gramian_formula_matches_truth_norm(name, request):
    model = request.getfixturevalue(name)
    basis, rm, _ = request.getfixturevalue(f"{name}_setup")
    for mu in random_sample(model.domain, 50, seed=11):
        for n, m in ((1, 2), (2, 4), (4, 5)):
            c_n, c_m = rb_solve(rm, mu, n), rb_solve(rm, mu, m)
            truth = x_norms(model, basis.vectors[:, :m] @ c_m - basis.vectors[:, :n] @ c_n, mu)[0]
            assert delta_hier(rm, mu, c_n, c_m) == pytest.approx(truth, rel=1e-10, abs=1e-14)


def test_batched_hierarchical_estimator(helmholtz, helmholtz_setup):
    _, rm, _ = helmholtz_setup
    mus = random_sample(helmholtz.domain, 8, seed=4).points
    c_n, c_m = rb_solve_many(rm, mus, 2), rb_solve_many(rm, mus, 3)
    batched = delta_hier_many(rm, mus, c_n, c_m)
    single = [delta_hier(rm, mu, a, b) for mu, a, b in zip(mus, c_n, c_m)]
    assert np.allclose(batched, single, rtol=1e-12)
    with pytest.raises(ValueError):
        delta_hier_many(rm, mus, c_m, c_n)


def test_residual_norm_fixed_product(thermal, thermal_setup):
    basis, rm, rd = thermal_setup
    for mu in random_sample(thermal.domain, 10, seed=3):
        c = rb_solve(rm, mu, 3)
        assert residual_dual_norm(rd, mu, c) == pytest.approx(direct_residual_norm(thermal, basis, mu, c), rel=1e-6)


def test_residual_bounds_parametric_product(helmholtz, helmholtz_setup):
    basis, rm, rd = helmholtz_setup
    assert rd.reference_mu == tuple(helmholtz.reference_mu)
    for mu in random_sample(helmholtz.domain, 10, seed=3):
        c = rb_solve(rm, mu, 3)
        lower, upper = dual_norm_bounds(rd, mu, c)
        exact = direct_residual_norm(helmholtz, basis, mu, c)
        assert lower * (1 - 1e-6) <= exact <= upper * (1 + 1e-6)
        assert residual_dual_norm(rd, mu, c, helmholtz, basis) == pytest.approx(exact, rel=1e-12)
        assert residual_dual_norm_bound(rd, mu, c) == upper


def test_parametric_residual_norm_needs_model(helmholtz, helmholtz_setup):
    _, rm, rd = helmholtz_setup
    mu = np.array([2.5])
    with pytest.raises(ValueError):
        residual_dual_norm(rd, mu, rb_solve(rm, mu, 2))
    with pytest.raises(ValueError):
        residual_dual_norms(rd, mu[None, :], rb_solve_many(rm, mu[None, :], 2))


def test_batched_residual_norms(helmholtz, helmholtz_setup):
    basis, rm, rd = helmholtz_setup
    mus = random_sample(helmholtz.domain, 6, seed=9).points
    coeffs = rb_solve_many(rm, mus, 4)
    batched = residual_dual_norms(rd, mus, coeffs, helmholtz, basis, workers=2)
    assert np.allclose(batched, [residual_dual_norm(rd, mu, c, helmholtz, basis) for mu, c in zip(mus, coeffs)],
                       rtol=1e-12)
    bounds = residual_dual_norm_bounds(rd, mus, coeffs)
    assert np.allclose(bounds, [residual_dual_norm_bound(rd, mu, c) for mu, c in zip(mus, coeffs)], rtol=1e-12)
    assert np.all(bounds >= batched * (1 - 1e-6))


def test_batched_residual_norms_fixed_product(thermal, thermal_setup):
    basis, rm, rd = thermal_setup
    mus = random_sample(thermal.domain, 6, seed=9).points
    coeffs = rb_solve_many(rm, mus, 4)
    assert np.allclose(residual_dual_norms(rd, mus, coeffs),
                       [direct_residual_norm(thermal, basis, mu, c) for mu, c in zip(mus, coeffs)], rtol=1e-6)
    assert np.allclose(residual_dual_norm_bounds(rd, mus, coeffs), residual_dual_norms(rd, mus, coeffs), rtol=1e-12)


def test_residual_data_extension(thermal, thermal_setup):
    basis, _, rd = thermal_setup
    partial = ResidualData.build(thermal, basis.prefix(3))
    extended = partial.extend(thermal, basis)
    assert extended.size == basis.size
    assert np.allclose(extended.gram, rd.gram, atol=1e-12 * np.abs(rd.gram).max())
    loaded = ResidualData.from_arrays(rd.to_arrays(), thermal)
    with pytest.raises(ValueError):
        loaded.extend(thermal, basis)


@pytest.mark.parametrize("name", ["thermal", "helmholtz"])
def test_standard_estimator_sandwich(name, request):
    model = request.getfixturevalue(name)
    basis, rm, rd = request.getfixturevalue(f"{name}_setup")
    for mu in random_sample(model.domain, 50, seed=21):
        beta, gamma = exact_stability(model, mu)
        c = rb_solve(rm, mu, 3)
        error = x_norms(model, truth_solve(model, mu) - basis.vectors[:, :3] @ c, mu)[0]
        estimate = delta_std(rd, mu, c, beta, model, basis)
        assert estimate * beta / gamma <= error * (1 + 1e-8)
        assert error <= estimate * (1 + 1e-8)
        assert delta_std_certified(rd, mu, c, beta) >= estimate * (1 - 1e-6)
    with pytest.raises(StabilityBoundError):
        delta_std(rd, mu, c, 0.0, model, basis)
    with pytest.raises(StabilityBoundError):
        delta_std_certified(rd, mu, c, -1.0)


def test_hierarchical_sandwich_on_training_set(thermal, thermal_setup, thermal_cache, thermal_train):
    basis, rm, _ = thermal_setup
    n, m = 2, rm.size
    c_n = rb_solve_many(rm, thermal_train.points, n)
    c_m = rb_solve_many(rm, thermal_train.points, m)
    e_n = truth_errors(thermal, thermal_cache.solutions, thermal_train.points, basis, c_n)
    e_m = truth_errors(thermal, thermal_cache.solutions, thermal_train.points, basis, c_m)
    theta = theta_train(e_m, e_n).theta
    assert theta < 1

    deltas = delta_hier_many(rm, thermal_train.points, c_n, c_m)
    for k in np.flatnonzero(e_n > 1e-12 * e_n.max()):
        assert deltas[k] / (1 + theta) <= e_n[k] * (1 + 1e-12)
        assert e_n[k] <= deltas[k] / (1 - theta) * (1 + 1e-12)
        record = effectivity(thermal_train[k], n, m, e_n[k], deltas[k], theta, on_training=True)
        assert 1 - 1e-9 <= record.eta <= (1 + theta) / (1 - theta) * (1 + 1e-9)


def test_certified_estimator():
    assert delta_hier_certified(0.5, 0.5) == 1.0
    with pytest.raises(SaturationError):
        delta_hier_certified(0.5, 1.0)
    with pytest.raises(ValueError):
        delta_hier_certified(0.5, -0.1)


def test_effectivity_flags():
    record = effectivity((0.5, 0.5), 2, 3, 1.0, 0.5, 1.2)
    assert record.flag == "theta_invalid" and record.delta_hier_cert is None and record.eta is None

    record = effectivity((0.5, 0.5), 2, 3, 0.0, 0.0, 0.3, zero_tol=1e-14)
    assert record.flag == "zero_error" and record.eta is None

    record = effectivity((0.5, 0.5), 2, 3, 1.0, 0.1, 0.5)
    assert record.flag == "outside_bound"
    with pytest.raises(EffectivityBoundError):
        effectivity((0.5, 0.5), 2, 3, 1.0, 0.1, 0.5, on_training=True)

    record = effectivity((0.5, 0.5), 2, 3, 1.0, 0.8, 0.5, delta_std_value=1.1, t_std=1e-4, t_hier=2e-5,
                         delta_std_cert=1.2)
    assert record.eta == pytest.approx(1.6)
    assert record.as_row() == [0.5, 0.5, 2, 3, 1.0, 1.1, 1.2, 0.8, 1.6, 1.6, 1e-4, 2e-5, ""]
