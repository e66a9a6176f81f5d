import numpy as np
import pytest

from hierrb.core.param_space import (ParameterDomain, SampleSet, explicit_sample, partition_positive,
                                     random_sample, tensor_grid)
from hierrb.exceptions import EmptyPartitionError, ParameterError


@pytest.fixture
def square():
    return ParameterDomain((0.02, 0.02), (1.0, 1.0))


def test_domain_rejects_empty_box():
    with pytest.raises(ParameterError):
        ParameterDomain((1.0,), (1.0,))
    with pytest.raises(ParameterError):
        ParameterDomain((0.0, 0.0), (1.0,))


def test_domain_midpoint_and_parse(square):
    assert np.allclose(square.midpoint, [0.51, 0.51])
    assert square.dim == 2
    assert np.array_equal(square.parse([0.5, 0.5]), [0.5, 0.5])
    with pytest.raises(ParameterError):
        square.parse([0.01, 0.5])
    with pytest.raises(ParameterError):
        square.parse([0.5])


def test_tensor_grid_size_and_order(square):
    grid = tensor_grid(square, (101, 101))
    assert len(grid) == 10201
    assert np.array_equal(grid[0], [0.02, 0.02])
    assert grid[1][0] == 0.02 and grid[1][1] > 0.02
    assert np.array_equal(grid[-1], [1.0, 1.0])


def test_tensor_grid_spacing():
    grid = tensor_grid(ParameterDomain((1.0,), (5.0,)), 10001)
    assert len(grid) == 10001
    assert np.allclose(np.diff(grid.points[:, 0]), 4e-4)


def test_tensor_grid_needs_two_points(square):
    with pytest.raises(ParameterError):
        tensor_grid(square, (1, 5))


def test_random_sample_is_seeded(square):
    a = random_sample(square, 50, seed=7)
    b = random_sample(square, 50, seed=7)
    c = random_sample(square, 50, seed=8)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    assert all(square.contains(mu) for mu in a)


def test_sample_set_rejects_duplicates_and_outside_points(square):
    with pytest.raises(ParameterError):
        explicit_sample(square, [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ParameterError):
        explicit_sample(square, [[2.0, 0.5]])


def test_csv_roundtrip_keeps_bits(square, tmp_path):
    sample = random_sample(square, 20, seed=3)
    sample.to_csv(tmp_path / "points.csv")
    loaded = SampleSet.from_csv(tmp_path / "points.csv", square)
    assert np.array_equal(loaded.points, sample.points)
    assert loaded.fingerprint() == sample.fingerprint()


def test_partition_excludes_zero_denominators(square):
    sample = tensor_grid(square, (3, 3))
    g = np.array([0.0, 1.0, 2.0, 0.0, 3.0, 1e-20, 1.0, 1.0, 1.0])
    (subset,) = partition_positive(sample, g)
    assert list(subset.indices) == [1, 2, 4, 6, 7, 8]
    assert np.array_equal(subset.points, sample.points[[1, 2, 4, 6, 7, 8]])


def test_partition_groups_and_nested_indices(square):
    sample = tensor_grid(square, (3, 3))
    g = np.ones(9)
    g[4] = 0.0
    subsets = partition_positive(sample, g, groups=[[0, 1, 4], [4], [5, 6]])
    assert [list(s.indices) for s in subsets] == [[0, 1], [5, 6]]
    nested = subsets[1].subset([1])
    assert list(nested.indices) == [6]


def test_partition_all_excluded_raises(square):
    sample = tensor_grid(square, (2, 2))
    with pytest.raises(EmptyPartitionError):
        partition_positive(sample, np.zeros(4))
    with pytest.raises(ParameterError):
        partition_positive(sample, np.ones(3))
