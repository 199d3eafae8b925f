import json

import pytest

from ma_lab.cli import ExperimentConfig, RunManifest, main, report, run
from ma_lab.errors import MixedSchema, ValidationError


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(f={"kind": "random", "lambda": 2.0, "Lambda": 1.0})
    with pytest.raises(ValidationError):
        ExperimentConfig(grid=0)
    with pytest.raises(ValidationError):
        ExperimentConfig(stages=["solve", "nonsense"])
    with pytest.raises(ValidationError):
        ExperimentConfig(stages=["main", "solve"])
    with pytest.raises(ValidationError):
        ExperimentConfig(k=[-1])
    with pytest.raises(ValidationError):
        ExperimentConfig(catalog="not_there")
    with pytest.raises(ValidationError):
        ExperimentConfig.from_json({"grid": 32, "colour": "blue"})


def test_config_digest_ignores_output_location(tmp_path):
    a = ExperimentConfig(grid=32, out=str(tmp_path / "a"))
    b = ExperimentConfig(grid=32, out=str(tmp_path / "b"), jobs=3)
    assert a.digest() == b.digest()
    assert ExperimentConfig(grid=48).digest() != a.digest()


def test_catalog_run_two_stages(tmp_path):
    cfg = {"catalog": "quadratic_disc", "grid": 64, "stages": ["solve", "hessmean"],
           "out": str(tmp_path / "q")}
    man = run(cfg)
    (iid, times), = man.stage_times.items()
    assert set(times) == {"solve", "hessmean"}
    assert man.exit_code == 0
    rep = json.loads((tmp_path / "q" / f"{iid}.report.json").read_text())
    assert rep["constants"]["C1"] == pytest.approx(1.0, rel=0.05)


@pytest.fixture(scope="module")
def rough_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    cfg = dict(grid=32, stages=["solve", "sections", "hessmean"], seeds=[0, 1],
               samples=10)
    m1 = run(ExperimentConfig(out=str(base / "r1"), **cfg))
    m2 = run(ExperimentConfig(out=str(base / "r2"), **cfg))
    return base, m1, m2


def test_rerun_is_byte_identical(rough_runs):
    _, m1, m2 = rough_runs
    assert m1.digests == m2.digests
    assert m1.config_hash == m2.config_hash


def test_report_aggregates(rough_runs):
    base, _, _ = rough_runs
    text = report([str(base / "r1" / "manifest.json")], "csv")
    lines = text.strip().splitlines()
    assert lines[0].startswith("schema,constant,count")
    c1 = [l for l in lines if l.split(",")[1] == "C1"][0].split(",")
    assert int(c1[2]) == 2
    assert float(c1[3]) <= float(c1[4]) <= float(c1[5])


def test_report_rejects_mixed_and_empty(rough_runs, tmp_path):
    base, _, _ = rough_runs
    doc = json.loads((base / "r1" / "manifest.json").read_text())
    doc["schema"] = "ma-lab/0"
    other = tmp_path / "manifest.json"
    other.write_text(json.dumps(doc))
    with pytest.raises(MixedSchema):
        report([str(base / "r1" / "manifest.json"), str(other)])
    with pytest.raises(MixedSchema):
        RunManifest.from_json(doc)
    with pytest.raises(ValidationError):
        report([])


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"f": {"kind": "random", "lambda": 3, "Lambda": 1}}))
    assert main(["run", "-c", str(bad)]) == 2
    assert main(["report"]) == 2
    sol = tmp_path / "q.json"
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"catalog": "quadratic_disc", "grid": 64}))
    assert main(["solve", "-c", str(good), "-o", str(sol)]) == 0
    assert main(["verify", "-i", str(sol), "--lemma", "main", "--samples", "5"]) == 0
    out = capsys.readouterr().out
    assert "inequality_id" in out and "main:k=0" in out
    assert main(["estimate", "-i", str(sol), "--k", "0..1"]) == 0
    out = capsys.readouterr().out
    assert "ratio" in out and "pass" in out


def test_unconverged_solve_exit_code(tmp_path, monkeypatch):
    from ma_lab.errors import NoConvergence
    import ma_lab.cli as cli

    def boom(*a, **k):
        raise NoConvergence(3, 1.0)
    monkeypatch.setattr(cli, "solve", boom)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": 32}))
    assert main(["solve", "-c", str(cfg)]) == 3


def test_violation_exit_code(tmp_path):
    # the divergence identity is discretization limited on rough data at 32^2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": 32, "f": {"kind": "random", "lambda": 0.5,
                                                  "Lambda": 2.0, "seed": 1}}))
    sol = tmp_path / "s.json"
    assert main(["solve", "-c", str(cfg), "-o", str(sol)]) == 0
    assert main(["verify", "-i", str(sol), "--lemma", "hessmean",
                 "--samples", "20"]) == 4
