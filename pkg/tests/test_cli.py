import json

import pytest
from click.testing import CliRunner

from repgraph.cli import main


@pytest.fixture
def workdir(tmp_path):
    runner = CliRunner()
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n": 60, "n_blocks": 3, "mutation_rate": 0.05,
                                "subgroups": {"a": 0.5, "b": 0.5}, "seed": 3}))
    res = runner.invoke(main, ["synth", "--spec", str(spec), "--out", str(tmp_path / "s.tsv")])
    assert res.exit_code == 0, res.output
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": "s.tsv", "output_dir": "out", "clusters": 3, "lambda": 0.2}))
    return runner, tmp_path


def test_run_and_stage_commands(workdir):
    runner, d = workdir
    res = runner.invoke(main, ["run", "--config", str(d / "cfg.json"), "--threads", "2", "--seed", "1",
                               "--export", "gml-like"])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["n_sequences"] == 60
    assert (d / "out" / "graph.graphml").exists()

    res = runner.invoke(main, ["sketch", "--input", str(d / "s.tsv"), "--kmer", "4", "--sketch-len", "64",
                               "--bands", "16", "--out", str(d / "c.tsv"), "--sketch-cache", str(d / "c.bin")])
    assert res.exit_code == 0, res.output
    assert (d / "c.bin").read_bytes()[:4] == b"RGSK"

    res = runner.invoke(main, ["cluster", "--graph", str(d / "out" / "graph.tsv"), "--input", str(d / "s.tsv"),
                               "--k", "3", "--fair-mode", "wcd", "--lambda", "1", "--tau", "0.2",
                               "--out", str(d / "cl.tsv")])
    assert res.exit_code == 0, res.output
    assert "coverage" in json.loads(res.output)

    res = runner.invoke(main, ["tune", "--graph", str(d / "out" / "graph.tsv"), "--input", str(d / "s.tsv"),
                               "--k", "3", "--tune", "bisect", "--delta-max", "0.3", "--out", str(d / "t.json")])
    assert res.exit_code == 0, res.output
    assert len(json.loads((d / "t.json").read_text())["evaluations"]) == 5

    res = runner.invoke(main, ["tune", "--graph", str(d / "out" / "graph.tsv"), "--input", str(d / "s.tsv"),
                               "--preset", "tumor"])
    assert json.loads(res.output)["lambda"] == 0.6

    g = str(d / "out" / "graph.graphml")
    res = runner.invoke(main, ["repdist", "--a", g, "--b", g, "--k", "3", "--mode", "js"])
    assert res.exit_code == 0, res.output
    value, detail = res.output.strip().splitlines()
    assert float(value) == 0.0 and json.loads(detail)["mode"] == "js"


def test_repdist_ged(tmp_path):
    a = tmp_path / "a.tsv"
    b = tmp_path / "b.tsv"
    a.write_text("# source\ttarget\tweight\nx\ty\t1.0\ny\tz\t1.0\n")
    b.write_text("# source\ttarget\tweight\nx\ty\t1.0\ny\tz\t1.0\nx\tz\t1.0\n")
    res = CliRunner().invoke(main, ["repdist", "--a", str(a), "--b", str(b), "--mode", "ged"])
    assert res.exit_code == 0, res.output
    assert float(res.output.splitlines()[0]) == 1.0


def test_exit_codes(workdir):
    runner, d = workdir
    missing = d / "bad.json"
    missing.write_text(json.dumps({"input": "nope.tsv"}))
    assert runner.invoke(main, ["run", "--config", str(missing)]).exit_code == 2
    assert runner.invoke(main, ["run", "--config", str(d / "cfg.json"), "--rmt-mode", "bogus"]).exit_code == 2
    dup = d / "dup.tsv"
    dup.write_text("id\tcdr3\na\tCASS\na\tCAST\n")
    bad_data = d / "bd.json"
    bad_data.write_text(json.dumps({"input": "dup.tsv", "output_dir": "o2"}))
    assert runner.invoke(main, ["run", "--config", str(bad_data)]).exit_code == 1
    bad_spec = d / "bs.json"
    bad_spec.write_text(json.dumps({"subgroups": {"a": 0.3}}))
    assert runner.invoke(main, ["synth", "--spec", str(bad_spec), "--out", str(d / "x.tsv")]).exit_code == 2
