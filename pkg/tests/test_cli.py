import csv
import json

import pytest

from advexplore import cli
from advexplore import experiment as ex

SMALL = ["--env", "point_reach", "--preset", "desk", "--n-iter", "2"]


@pytest.fixture
def small_trials(monkeypatch):
    """Shrink trials so CLI round trips run in seconds."""
    orig = ex.make_config

    def make(preset="paper", **kw):
        kw.setdefault("hidden", 8)
        kw.setdefault("recurrent", 8)
        kw.update(n_eval=10, eval_every=500, inverse_batches=2, n_demos=20, demo_episodes=5)
        return orig(preset, **kw)

    monkeypatch.setattr(ex, "make_config", make)


def test_parse_seeds():
    assert cli.parse_seeds("0..4") == [0, 1, 2, 3, 4]
    assert cli.parse_seeds("3,1, 7") == [3, 1, 7]
    assert cli.parse_seeds("2..2") == [2]
    with pytest.raises(ValueError):
        cli.parse_seeds("4..1")


def test_resolve_out(monkeypatch, tmp_path):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    assert str(cli.resolve_out("runs")) == "runs"
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.resolve_out("runs") == tmp_path / "runs"
    assert cli.resolve_out("/abs") == cli.Path("/abs")


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"env": "arm_reach", "delta": 0.5, "no-stab": True, "seed": 3}))
    args = cli.build_parser().parse_args(["run", "--config", str(cfg), "--delta", "2.0", "--collector", "random"])
    values = cli.merge_config(args)
    assert values["env_id"] == "arm_reach" and values["delta"] == 2.0 and values["seed"] == 3
    tc = cli.trial_config(values)
    assert tc.stabilize is False and tc.collector == "random" and tc.preset == "paper"


def test_missing_options_exit():
    with pytest.raises(SystemExit):
        cli.main(["run", "--env", "point_reach"])


def test_run_writes_outputs(tmp_path, small_trials):
    assert cli.main(["run", "--collector", "random", "--seed", "1", "--out", str(tmp_path), *SMALL]) == 0
    log = ex.TrialLog.load(tmp_path / "trial_seed1.json")
    assert log.config["seed"] == 1 and log.env_samples == 1000
    rows = list(csv.reader(open(tmp_path / "curve.csv")))
    assert tuple(rows[0]) == ex.CURVE_COLUMNS
    assert (tmp_path / "config.json").exists() and (tmp_path / "loss_pdf.csv").exists()


def test_sweep_then_kde(tmp_path, small_trials):
    out = tmp_path / "sweep"
    cli.main(["sweep", "--collectors", "random,demo", "--seeds", "0..1", "--out", str(out), *SMALL])
    for name in ("random", "demo"):
        assert (out / name / "trial_seed1.json").exists()
    pdf = tmp_path / "pdf" / "loss.csv"
    cli.main(["kde", "--in", str(out), "--out", str(pdf)])
    rows = list(csv.reader(open(pdf)))
    assert tuple(rows[0]) == ex.PDF_COLUMNS
    assert {r[0] for r in rows[1:]} == {"random", "demo"}
    # same rows as the sweep's own density file; grouping order may differ
    assert sorted(rows) == sorted(csv.reader(open(out / "loss_pdf.csv")))


def test_kde_empty_dir(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["kde", "--in", str(tmp_path), "--out", str(tmp_path / "x.csv")])
