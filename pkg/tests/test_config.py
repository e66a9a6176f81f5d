from pathlib import Path

import numpy as np
import pytest

from hierrb.config import ExperimentConfig
from hierrb.exceptions import ConfigError, MeshError

CONFIGS = Path(__file__).parent.parent / "configs"


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.problem.name == "thermal_block"
    assert cfg.greedy.sampling == "strong"
    assert cfg.estimators.m_rules == ["N+1", "N+2"]
    assert cfg.scm.k_max == 3000
    assert cfg.timing.repeats == 11


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = ExperimentConfig.load(path)
    assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg


def test_ini_round_trip_and_list_coercion():
    cfg = ExperimentConfig.from_ini(
        "[problem]\nname = helmholtz\nelements = 20\ndegree = 4\nlower = 95, 100\n"
        "[estimators]\nm_rules = N+1, N+3\ntaylor_orders = 1,2\n"
        "[greedy]\naccumulate_derivatives = true\n"
    )
    assert cfg.problem.lower == [95.0, 100.0]
    assert cfg.estimators.m_rules == ["N+1", "N+3"]
    assert cfg.estimators.taylor_orders == [1, 2]
    assert cfg.greedy.accumulate_derivatives is True
    again = ExperimentConfig.from_ini(cfg.to_ini())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


@pytest.mark.parametrize("text", [
    "[greedy]\nnmax = 3\n",
    "[solver]\nname = lu\n",
    "[greedy]\nsampling = random\n",
    "[estimators]\nm_rules = N+4\n",
    "[timing]\nrepeats = 0\n",
    "not an ini file",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.ini")


def test_overrides():
    cfg = ExperimentConfig().apply_overrides(
        ["greedy.n_max=7", "estimators.m_rules=N+2", "scm.grid = 5, 5"],
        problem="helmholtz", sampling="weak_std", beta_source="scm", n_max=None,
    )
    assert cfg.greedy.n_max == 7
    assert cfg.estimators.m_rules == ["N+2"]
    assert cfg.scm.grid == [5, 5]
    assert cfg.problem.name == "helmholtz"
    assert cfg.greedy.sampling == "weak_std"
    assert cfg.estimators.beta_source == "scm"
    assert cfg.apply_overrides(n_max=3).greedy.n_max == 3


@pytest.mark.parametrize("assignment", ["greedy.n_max", "n_max=3", "physics.mu=1", "greedy.depth=2"])
def test_bad_overrides(assignment):
    with pytest.raises(ConfigError):
        ExperimentConfig().apply_overrides([assignment])


def test_unknown_flag():
    with pytest.raises(ConfigError):
        ExperimentConfig().apply_overrides(seed=3)


def test_hash_ignores_output(tmp_path):
    cfg = ExperimentConfig()
    moved = cfg.apply_overrides(output=str(tmp_path / "elsewhere"))
    assert moved.config_hash() == cfg.config_hash()
    assert moved.output_directory() == tmp_path / "elsewhere"
    assert cfg.apply_overrides(["greedy.n_max=3"]).config_hash() != cfg.config_hash()


def test_default_output_directory(env):
    cfg = ExperimentConfig()
    out = cfg.output_directory()
    assert out.parent == env / "runs"
    assert out.name == f"thermal_block_strong_{cfg.config_hash()[:12]}"


def test_builders():
    cfg = ExperimentConfig.from_ini(
        "[problem]\nname = thermal_block\ncells = 6\nlower = 0.5, 0.5\nupper = 1, 1\n"
        "[training]\ngrid = 3, 4\n[scm]\ngrid = 2, 2\n[test]\nn = 7\nseed = 3\n"
    )
    model = cfg.build_model()
    assert np.allclose(model.domain.lower, [0.5, 0.5])
    assert len(cfg.training_set(model)) == 12
    assert len(cfg.scm_training_set(model)) == 4
    test = cfg.test_set(model)
    assert len(test) == 7
    assert np.array_equal(test.points, cfg.test_set(model).points)


def test_default_training_grid():
    cfg = ExperimentConfig.from_ini("[problem]\nname = helmholtz\nelements = 10\ndegree = 2\n")
    model = cfg.build_model()
    assert len(cfg.training_set(model)) == 41
    assert len(cfg.scm_training_set(model)) == 41


def test_training_file(tmp_path):
    (tmp_path / "train.csv").write_text("mu_1,mu_2\n0.5,0.5\n0.7,0.9\n")
    cfg = ExperimentConfig.from_ini(f"[problem]\ncells = 6\n[training]\nfile = {tmp_path / 'train.csv'}\n")
    assert len(cfg.training_set(cfg.build_model())) == 2


def test_invalid_problem_options():
    cfg = ExperimentConfig.from_ini("[problem]\nname = thermal_block\ncells = 7\n")
    with pytest.raises(MeshError):
        cfg.build_model()
