import numpy as np
import pytest
from openpyxl import load_workbook

from hierrb.core.affine import truth_solve
from hierrb.core.param_space import tensor_grid
from hierrb.core.truth_cache import TruthCache
from hierrb.exceptions import ArtifactError
from hierrb.utils.container import load_container, save_container
from hierrb.utils.export import export_vectors_csv, format_cell, read_csv, write_csv, write_plot_data, write_workbook
from hierrb.utils.helpers import format_mu, median_time, mu_key, parallel_map


# ============ CONTAINER ============

def test_container_keeps_arrays_and_meta(tmp_path, rng):
    complex_block = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    path = save_container(tmp_path / "a", {"real": np.arange(6.0).reshape(2, 3), "complex": complex_block},
                          {"name": "basis", "mu": np.array([0.5, 1.0]), "n": np.int64(3)})
    assert path.suffix == ".npz"
    arrays, meta = load_container(path)
    assert np.array_equal(arrays["real"], np.arange(6.0).reshape(2, 3))
    assert arrays["complex"].dtype == complex
    assert arrays["complex"].flags.f_contiguous
    assert np.array_equal(arrays["complex"], complex_block)
    assert meta == {"mu": [0.5, 1.0], "n": 3, "name": "basis"}


def test_container_errors(tmp_path):
    with pytest.raises(ArtifactError):
        load_container(tmp_path / "missing.npz")
    (tmp_path / "broken.npz").write_text("not a zip archive")
    with pytest.raises(ArtifactError):
        load_container(tmp_path / "broken.npz")
    with pytest.raises(ArtifactError):
        save_container(tmp_path / "b.npz", {"__meta__": np.zeros(1)})


# ============ EXPORT ============

@pytest.mark.parametrize("value, text", [
    (None, ""),
    (True, "1"),
    (np.bool_(False), "0"),
    (np.int64(7), "7"),
    (0.1, "0.1"),
    (np.float64(1e-300), "1e-300"),
    ("N+1", "N+1"),
])
def test_format_cell(value, text):
    assert format_cell(value) == text


def test_csv_reports(tmp_path):
    path = write_csv(tmp_path / "r" / "theta.csv", ["N", "M", "Theta", "valid"],
                     [[1, 2, 0.25, True], [2, 3, None, False]])
    assert path.read_text() == "N,M,Theta,valid\n1,2,0.25,1\n2,3,,0\n"
    header, rows = read_csv(path)
    assert header == ["N", "M", "Theta", "valid"]
    assert rows == [["1", "2", "0.25", "1"], ["2", "3", "", "0"]]
    with pytest.raises(ArtifactError):
        read_csv(tmp_path / "missing.csv")


def test_plot_data(tmp_path):
    path = write_plot_data(tmp_path / "f" / "errors.dat", ["N", "err"], [[1, 0.5], [2, None]])
    assert path.read_text() == "# N err\n1 0.5\n2 nan\n"


def test_workbook(tmp_path):
    long_name = "effectivity_taylor_K1_train_with_suffix"
    path = write_workbook(tmp_path / "summary.xlsx", {
        "theta": (["N", "Theta"], [[1, np.float64(0.5)], [2, None]]),
        long_name: (["x"], [[float("inf")]]),
    })
    book = load_workbook(path)
    assert book.sheetnames == ["theta", long_name[:31]]
    sheet = book["theta"]
    assert [c.value for c in sheet[2]] == [1, 0.5]
    assert sheet["B3"].value == "-"
    assert book[long_name[:31]]["A2"].value == "inf"


def test_vector_export(tmp_path, rng):
    vectors = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    header, rows = read_csv(export_vectors_csv(tmp_path / "v.csv", vectors, np.linspace(0, 1, 5)))
    assert header == ["x_1", "re_1", "im_1", "re_2", "im_2"]
    assert len(rows) == 5
    assert float(rows[2][4]) == vectors[2, 1].imag
    header, _ = read_csv(export_vectors_csv(tmp_path / "w.csv", np.ones(3)))
    assert header == ["v_1"]
    with pytest.raises(ArtifactError):
        export_vectors_csv(tmp_path / "big.csv", np.zeros(20001))


# ============ HELPERS ============

def test_parallel_map_keeps_order():
    assert parallel_map(lambda x: x * x, range(10), workers=4) == [x * x for x in range(10)]
    assert parallel_map(lambda x: x, [], workers=4) == []


def test_median_time():
    calls = []
    result, seconds = median_time(lambda: calls.append(1) or len(calls), repeats=3)
    assert result == 4
    assert seconds >= 0


def test_parameter_formatting():
    assert format_mu([0.5, 1.0]) == "(0.5, 1)"
    assert mu_key(np.array([2])) == (2.0,)


# ============ TRUTH CACHE ============

def test_truth_cache_on_disk(thermal, tmp_path):
    samples = tensor_grid(thermal.domain, (2, 3))
    cache = TruthCache(thermal, samples, tmp_path / "cache")
    solutions = cache.solutions
    assert solutions.shape == (thermal.dofs, 6)
    assert np.allclose(solutions[:, 4], truth_solve(thermal, samples[4]))
    assert cache.path.exists()
    assert np.all(cache.norms > 0)

    reloaded = TruthCache(thermal, samples, tmp_path / "cache")
    assert np.array_equal(reloaded.solutions, solutions)
    assert np.array_equal(reloaded.solution(2), solutions[:, 2])

    other = TruthCache(thermal, tensor_grid(thermal.domain, (3, 2)), tmp_path / "cache")
    assert other.path != cache.path
