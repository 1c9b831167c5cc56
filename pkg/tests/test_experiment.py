import csv
import dataclasses
import json

import numpy as np
import pytest

from advexplore import experiment as ex


def tiny(**kw):
    base = dict(env_id="point_reach", collector="random", seed=0, n_iter=3, hidden=8, recurrent=8,
                eval_every=500, n_eval=10, inverse_batches=2, inverse_batch_size=16, n_demos=20, demo_episodes=5)
    base.update(kw)
    return ex.make_config("desk", **base)


def test_kde_single_point_peak():
    h = 0.5
    d = ex.kde([1.0], [1.0, 1.5], bandwidth=h)
    assert d[0] == pytest.approx(1 / (h * np.sqrt(2 * np.pi)))
    assert d[1] == pytest.approx(np.exp(-0.5) / (h * np.sqrt(2 * np.pi)))
    with pytest.raises(ValueError):
        ex.kde([1.0], [0.0])
    with pytest.raises(ValueError):
        ex.kde([1.0, 2.0], [0.0], bandwidth=0.0)


def test_kde_integrates_to_one():
    vals = np.random.default_rng(0).gamma(2.0, 1.0, 300)
    grid = np.linspace(-5, 20, 5001)
    d = ex.kde(vals, grid)
    assert np.all(d >= 0)
    area = np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(grid))
    assert area == pytest.approx(1.0, abs=1e-3)


def test_kde_matches_direct_sum():
    vals = np.array([0.1, 0.4, 0.45, 2.0])
    h = ex.silverman_bandwidth(vals)
    for g in (0.0, 0.3, 1.7):
        ref = sum(np.exp(-0.5 * ((g - v) / h) ** 2) for v in vals) / (4 * h * np.sqrt(2 * np.pi))
        assert ex.kde(vals, [g])[0] == pytest.approx(ref)


def test_silverman_hand_value():
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    sd = np.sqrt(np.sum((vals - 2.5) ** 2) / 3)
    assert ex.silverman_bandwidth(vals) == pytest.approx(1.06 * sd * 4 ** -0.2)


def log_with(success, samples=(0, 500)):
    return ex.TrialLog({"collector": "random", "seed": 0}, list(samples), list(success))


def test_aggregate_curve_ci():
    rows = ex.aggregate_curve([log_with([0.2, 0.4]), log_with([0.4, 0.8])])
    assert rows[0][0] == 0 and rows[1][0] == 500
    mean, lo, hi = rows[1][1:]
    half = 1.96 * np.std([0.4, 0.8], ddof=1) / np.sqrt(2)
    assert mean == pytest.approx(0.6) and lo == pytest.approx(0.6 - half) and hi == pytest.approx(0.6 + half)
    one = ex.aggregate_curve([log_with([0.5, 0.7])])
    assert one[1][1:] == (0.7, 0.7, 0.7)
    with pytest.raises(ValueError):
        ex.aggregate_curve([log_with([0.1, 0.2]), log_with([0.1, 0.2], samples=(0, 600))])


def test_record_eval_must_increase():
    log = ex.TrialLog({})
    log.record_eval(0, 0.0)
    with pytest.raises(ValueError):
        log.record_eval(0, 0.5)


def test_emit_header_only_when_empty(tmp_path):
    ex.emit([], tmp_path)
    assert (tmp_path / "curve.csv").read_text() == ",".join(ex.CURVE_COLUMNS) + "\n"
    assert (tmp_path / "loss_pdf.csv").read_text() == ",".join(ex.PDF_COLUMNS) + "\n"


def test_config_validation():
    with pytest.raises(ValueError):
        tiny(n_iter=0)
    with pytest.raises(ValueError):
        tiny(update_period=10)
    with pytest.raises(ValueError):
        tiny(horizon=40)
    with pytest.raises(ValueError):
        tiny(collector="ensemble")
    with pytest.raises(ValueError):
        ex.make_config("cluster")


def test_presets():
    desk = ex.make_config("desk")
    assert (desk.n_iter, desk.eval_every, desk.n_eval) == (60, 2000, 100)
    paper = ex.make_config("paper")
    assert (paper.n_iter, paper.n_episode, paper.update_period, paper.delta) == (200, 10, 2050, 1.5)
    assert ex.make_config("paper", env_id="chain_reach", collector="adversarial").warmup == 30_000
    assert ex.make_config("paper", env_id="chain_reach", collector="random").warmup == 0
    assert ex.make_config("paper", collector="adversarial").warmup == 0


def test_streams_independent_and_reproducible():
    a, b = ex.trial_streams(3), ex.trial_streams(3)
    draws = {k: a[k].random() for k in a}
    assert draws == {k: b[k].random() for k in b}
    assert len(set(draws.values())) == len(draws)


def test_trial_json_roundtrip(tmp_path):
    log = ex.run_trial(tiny())
    log.save(tmp_path / "t.json")
    back = ex.TrialLog.load(tmp_path / "t.json")
    assert back == log


def test_trial_budget_and_curve(tmp_path):
    log = ex.run_trial(tiny(warmup_samples=120))
    assert log.env_samples == 3 * 500 + 120
    assert log.eval_samples == [120, 620, 1120, 1620]
    assert len(log.iter_loss) == 3 and len(log.batch_losses) == 6
    assert all(0 <= s <= 1 for s in log.eval_success)
    demo = ex.run_trial(tiny(collector="demo"))
    assert demo.env_samples == 0
    assert demo.eval_samples == [0, 500, 1000, 1500]


def test_trial_determinism(tmp_path):
    for d in ("a", "b"):
        ex.emit([ex.run_trial(tiny(collector="adversarial", update_period=500))], tmp_path / d)
    assert (tmp_path / "a" / "curve.csv").read_bytes() == (tmp_path / "b" / "curve.csv").read_bytes()
    assert (tmp_path / "a" / "loss_pdf.csv").read_bytes() == (tmp_path / "b" / "loss_pdf.csv").read_bytes()


def test_failure_keeps_partial_log(monkeypatch):
    import advexplore.collectors as col

    calls = []

    def boom(self):
        calls.append(1)
        if len(calls) == 2:
            raise FloatingPointError("diverged")
        self.batch_losses.append(0.0)
        return 0

    monkeypatch.setattr(col.RandomCollector, "run_iteration", boom)
    with pytest.raises(FloatingPointError) as info:
        ex.run_trial(tiny())
    log = info.value.partial_log
    assert "diverged" in log.extra["error"]
    assert len(log.eval_samples) == 1


def test_sweep_writes_outputs(tmp_path):
    res = ex.run_sweep(tiny(), ["random", "demo"], [0, 1], tmp_path)
    assert set(res) == {"random", "demo"} and all(len(v) == 2 for v in res.values())
    for name in res:
        d = tmp_path / name
        assert (d / "trial_seed0.json").exists() and (d / "trial_seed1.json").exists()
        rows = list(csv.reader(open(d / "curve.csv")))
        assert tuple(rows[0]) == ex.CURVE_COLUMNS and len(rows) == 5
        cfg = json.loads((d / "config.json").read_text())
        assert cfg["seeds"] == [0, 1] and cfg["collector"] == name
    pdf = ex.write_loss_pdf(tmp_path / "pdf.csv", res)
    rows = list(csv.reader(open(pdf)))
    assert tuple(rows[0]) == ex.PDF_COLUMNS
    assert {r[0] for r in rows[1:]} == {"random", "demo"}


def test_replace_keeps_validation():
    with pytest.raises(ValueError):
        dataclasses.replace(tiny(), n_eval=0)


def test_demo_ignores_warmup():
    assert tiny(collector="demo", warmup_samples=300).warmup == 0
