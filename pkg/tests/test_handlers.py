import json

import pytest
from openpyxl import load_workbook

import main
from hierrb.config import ExperimentConfig
from hierrb.database import Database
from hierrb.exceptions import ArtifactError, SaturationError
from hierrb.handlers import offline, online, studies
from hierrb.handlers.offline import Manifest, run_offline
from hierrb.utils.export import read_csv

SMALL = """
[problem]
name = thermal_block
cells = 12
lower = 0.5, 0.5
upper = 1, 1

[training]
grid = 5, 5

[greedy]
sampling = {sampling}
n_max = {n_max}

[estimators]
m_rules = N+1
taylor_orders = {orders}
beta_source = exact_eig

[test]
n = 5

[timing]
repeats = 1
"""


def small_config(tmp_path, sampling="strong", n_max=3, orders="1") -> ExperimentConfig:
    cfg = ExperimentConfig.from_ini(SMALL.format(sampling=sampling, n_max=n_max, orders=orders))
    return cfg.apply_overrides(output=str(tmp_path / f"run_{sampling}"))


@pytest.fixture
def db(tmp_path):
    database = Database(f"sqlite:///{tmp_path / 'registry.db'}")
    database.init_db()
    return database


@pytest.fixture
def strong_run(tmp_path, db):
    cfg = small_config(tmp_path)
    manifest = run_offline(cfg, db)
    return cfg, manifest


def test_offline_run_writes_artifacts(strong_run, db):
    cfg, manifest = strong_run
    out = cfg.output_directory()
    assert manifest.complete
    assert manifest.config_hash == cfg.config_hash()
    assert set(manifest.phases) == {"truth", "greedy", "reduced", "theta"}
    for name in ("basis.npz", "residual.npz", "train.csv", "greedy_trace.csv", "theta_N+1.csv",
                 "theta_taylor_K1.csv", "taylor_K1_N1.npz", "config.ini", "basis.csv"):
        assert (out / name).exists(), name
    assert json.loads((out / "manifest.json").read_text())["complete"] is True

    header, rows = read_csv(out / "theta_N+1.csv")
    assert header == ["N", "M", "Theta", "valid"]
    assert [int(r[0]) for r in rows] == [1, 2, 3]

    run = db.find_complete_run(cfg.config_hash())
    assert run is not None
    assert len(db.get_greedy_steps(run.id)) == 4
    assert {e.variant for e in db.get_thetas(run.id)} == {"N+1", "taylor_K1"}


def test_complete_run_is_reused(strong_run, db):
    cfg, manifest = strong_run
    out = cfg.output_directory()
    stamp = (out / "basis.npz").stat().st_mtime_ns
    again = run_offline(cfg, db)
    assert again.phases == manifest.phases
    assert (out / "basis.npz").stat().st_mtime_ns == stamp
    assert db.get_statistics()["total"] == 1

    forced = run_offline(cfg, db, force=True)
    assert forced.complete
    assert db.get_statistics() == {"total": 2, "complete": 2, "failed": 0, "running": 0}


def test_online_eval(strong_run):
    cfg, _ = strong_run
    out = cfg.output_directory()
    reports = online.run_online_eval(cfg)
    assert set(reports) == {"effectivity_N+1", "errors_N+1", "effectivity_taylor_K1", "errors_taylor_K1"}
    assert (out / "test.csv").exists()

    header, rows = read_csv(out / "effectivity_N+1.csv")
    assert header[:2] == ["mu_1", "mu_2"]
    assert len(rows) == 5 * 3
    col = {name: j for j, name in enumerate(header)}
    # fixed X-product: the certified residual bound is the exact norm
    for row in rows:
        assert float(row[col["delta_std"]]) == pytest.approx(float(row[col["delta_std_cert"]]), rel=1e-10)

    first = (out / "errors_N+1.csv").read_bytes()
    online.run_online_eval(cfg)
    assert (out / "errors_N+1.csv").read_bytes() == first


def test_online_eval_on_training_set(strong_run):
    cfg, _ = strong_run
    reports = online.run_online_eval(cfg, sample="train")
    assert "effectivity_N+1_train" in reports
    with pytest.raises(ValueError):
        online.run_online_eval(cfg, sample="validation")


def test_figures_and_workbook(strong_run):
    cfg, _ = strong_run
    out = cfg.output_directory()
    online.run_online_eval(cfg)
    files = studies.emit_figures(cfg)
    for name in ("errors_N+1.dat", "theta_N+1.dat", "scatter_std.dat", "scatter_hier_N+1.dat",
                 "scatter_hier_taylor_K1.dat"):
        assert (out / "figures" / name).exists(), name
    first_line = (out / "figures" / "errors_N+1.dat").read_text().splitlines()[0]
    assert first_line.split() == ["#", "N", "err", "std", "hier"]
    book = load_workbook(files["summary"])
    assert "theta_N+1" in book.sheetnames
    assert "effectivity_N+1" in book.sheetnames


def test_theta_study(strong_run):
    cfg, _ = strong_run
    header, rows = read_csv(studies.run_theta_study(cfg))
    assert header == studies.THETA_STUDY_HEADER
    by_n = {}
    for row in rows:
        by_n.setdefault(int(row[1]), []).append(float(row[5]))
    assert set(by_n) == {1, 2, 3}
    assert all(max(v) - min(v) <= 1e-10 * max(v) for v in by_n.values())


def test_eval_without_offline_run(tmp_path):
    with pytest.raises(ArtifactError):
        online.run_online_eval(small_config(tmp_path))


def test_eval_rejects_changed_config(strong_run):
    cfg, _ = strong_run
    changed = cfg.apply_overrides(["greedy.n_max=2"], output=str(cfg.output_directory()))
    with pytest.raises(ArtifactError):
        online.run_online_eval(changed)


def test_hierarchical_run(tmp_path, db):
    cfg = small_config(tmp_path, sampling="weak_hier", n_max=2, orders="")
    manifest = run_offline(cfg, db)
    out = cfg.output_directory()
    assert manifest.complete
    _, rows = read_csv(out / "theta_greedy.csv")
    assert len(rows) == 1 and int(rows[0][0]) == 2 and float(rows[0][2]) < 1
    assert (out / "basis_hier_m.npz").exists()
    assert (out / "theta_log.csv").exists()
    reports = online.run_online_eval(cfg)
    assert "errors_greedy" in reports


def test_failed_run_is_recorded(tmp_path, db, monkeypatch):
    def fail(*args, **kwargs):
        raise SaturationError(1.5, "Theta_{1,3} = 1.5 >= 1")

    monkeypatch.setattr(offline, "strong_greedy", fail)
    cfg = small_config(tmp_path)
    with pytest.raises(SaturationError):
        run_offline(cfg, db)
    manifest = Manifest.read(cfg.output_directory())
    assert not manifest.complete
    assert manifest.message.startswith("SaturationError")
    assert db.get_statistics()["failed"] == 1


# ============ CLI ============

def test_cli_exit_code_for_bad_config(tmp_path):
    assert main.main(["offline", "--set", "greedy.bogus=1", "--output", str(tmp_path / "x")]) == main.EXIT_CONFIG


def test_cli_exit_code_for_scm_failure(tmp_path):
    argv = ["scm-study", "--problem", "helmholtz", "--output", str(tmp_path / "scm"),
            "--set", "problem.elements=20", "--set", "problem.degree=4",
            "--set", "scm.k_max=1", "--set", "scm.grid=11"]
    assert main.main(argv) == main.EXIT_SCM
    assert (tmp_path / "scm" / "scm_study_bounds.csv").exists()


def test_cli_exit_code_for_saturation_failure(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise SaturationError(1.2, "Theta >= 1")

    monkeypatch.setattr(offline, "run_offline", fail)
    assert main.main(["offline", "--output", str(tmp_path / "y")]) == main.EXIT_SATURATION


def test_cli_offline_then_eval(tmp_path):
    config = tmp_path / "small.ini"
    config.write_text(SMALL.format(sampling="strong", n_max=2, orders=""))
    out = tmp_path / "cli"
    assert main.main(["offline", "--config", str(config), "--output", str(out)]) == main.EXIT_OK
    assert main.main(["eval", "--config", str(config), "--output", str(out)]) == main.EXIT_OK
    assert (out / "summary.xlsx").exists()
