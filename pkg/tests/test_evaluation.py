import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litenet.errors import DegenerateDataError, SizeError
from litenet.evaluation import (
    REFERENCE_EXECUTION_MS,
    REFERENCE_LATENCY_MS,
    acf,
    evaluate,
    latency_bench,
    percentile_nearest_rank,
    pipeline_bench,
    r2_score,
    rmse,
    sweep_experiment,
    format_sweep,
    sweep_json,
)
from litenet.market_data import noise_columns
from litenet.net import prune_model
from litenet.pipeline import initial_selection, load_bars, prepare, run_pipeline

from oracles import naive_acf, naive_r2, naive_rmse


class TestMetrics:
    def test_examples(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), rel=1e-12)
        assert rmse([1, 2, 5], [1.5, 2.5, 5.5]) == pytest.approx(0.5, rel=1e-12)
        assert r2_score([1, 2, 3], [1, 2, 3]) == 1.0
        assert r2_score([1, 2, 3], [2, 2, 2]) == 0.0
        assert r2_score([1, 2, 3], [1, 2, 2]) == pytest.approx(0.5, rel=1e-12)

    def test_errors(self):
        with pytest.raises(SizeError):
            rmse([1, 2], [1])
        with pytest.raises(SizeError):
            rmse([], [])
        with pytest.raises(DegenerateDataError):
            r2_score([2, 2, 2], [1, 2, 3])
        with pytest.raises(SizeError):
            r2_score([1], [1])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(2, 200))
    def test_against_naive(self, seed, n):
        rng = np.random.default_rng(seed)
        y, yhat = rng.standard_normal(n), rng.standard_normal(n)
        assert rmse(y, yhat) == pytest.approx(naive_rmse(y, yhat), rel=1e-12)
        assert r2_score(y, yhat) == pytest.approx(naive_r2(y, yhat), rel=1e-12)

    def test_report(self):
        rep = evaluate([1, 2, 3], [1, 2, 2])
        assert rep.n == 3 and rep.split == "test" and rep.rmse >= 0 and rep.r2 <= 1
        assert "r2=0.500000" in rep.to_text()


class TestAcf:
    def test_alternating(self):
        rep = acf([1, -1] * 4, 3)
        assert rep.values[0] == 1.0
        assert rep.values[1] == pytest.approx(-0.875, rel=1e-12)
        assert rep.n == 8 and rep.lags.tolist() == [0, 1, 2, 3]

    def test_errors(self):
        with pytest.raises(DegenerateDataError):
            acf(np.ones(10), 2)
        with pytest.raises(SizeError):
            acf([1.0, 2.0, 3.0], 2)

    def test_iid(self):
        rep = acf(np.random.default_rng(0).standard_normal(5000), 10)
        assert np.all(np.abs(rep.values[1:]) < 0.05)

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        a=st.floats(0.01, 100) | st.floats(-100, -0.01),
        b=st.floats(-1e3, 1e3),
    )
    def test_affine_invariance_and_bounds(self, seed, a, b):
        x = np.random.default_rng(seed).standard_normal(60).cumsum()
        base = acf(x, 8)
        moved = acf(a * x + b, 8)
        np.testing.assert_allclose(moved.values, base.values, atol=1e-9)
        assert base.values[0] == 1.0
        assert np.all(np.abs(base.values) <= 1 + 1e-9)
        np.testing.assert_allclose(base.values, [naive_acf(x, t) for t in range(9)], rtol=1e-10, atol=1e-12)

    def test_json(self):
        d = json.loads(acf([1, -1] * 4, 1, "close").to_json())
        assert d["series"] == "close" and d["lags"] == [0, 1]


class TestLatency:
    def test_percentiles_are_order_statistics(self):
        s = np.array([50, 10, 40, 20, 30])
        assert percentile_nearest_rank(s, 50) == 30
        assert percentile_nearest_rank(s, 95) == 50
        assert percentile_nearest_rank(s, 1) == 10
        assert percentile_nearest_rank(s, 100) == 50

    def test_report(self, small_run):
        wins = small_run.test_inputs()[:50]
        rep = latency_bench(small_run.model, wins, 300, warmup=20)
        assert len(rep.samples_ns) == rep.reps == 300
        assert rep.warmup == 20
        assert np.all(rep.samples_ns > 0)
        s = np.sort(rep.samples_ns)
        for q, v in ((50, rep.p50), (95, rep.p95), (99, rep.p99)):
            assert v == s[math.ceil(q / 100 * 300) - 1]
        assert rep.mean_ns == np.mean(rep.samples_ns)
        d = json.loads(rep.to_json())
        assert d["reference_ms"] == {"execution": REFERENCE_EXECUTION_MS, "latency": REFERENCE_LATENCY_MS}

    def test_checksum_deterministic(self, small_run):
        wins = small_run.test_inputs()[:20]
        a = latency_bench(small_run.model, wins, 100, warmup=0)
        b = latency_bench(small_run.model, wins, 100, warmup=5)
        assert a.checksum == b.checksum

    def test_reps_zero(self, small_run):
        with pytest.raises(SizeError):
            latency_bench(small_run.model, small_run.test_inputs()[:3], 0)
        with pytest.raises(SizeError):
            latency_bench(small_run.model, [], 10)

    def test_execution_matches_latency_outputs(self, small_run, small_cfg):
        """The per-window feature path reproduces the batch feature path."""
        bars = load_bars(small_cfg)
        fm, model = small_run.fm, small_run.model
        noise = noise_columns(len(bars), small_cfg["data.n_noise_features"], small_cfg.seed)
        starts = small_run.test.starts[:40]
        ends = [fm.offset + s + model.window - 1 for s in starts]
        ex = pipeline_bench(model, bars, fm.columns, small_cfg["features.vol_window"], ends, 40, 0, noise)
        lat = latency_bench(model, small_run.test_inputs()[:40], 40, 0)
        assert ex.kind == "execution" and lat.kind == "latency"
        assert ex.checksum == lat.checksum

    def test_pruned_not_slower(self, small_run):
        model = small_run.model
        w = np.concatenate([np.abs(m.kernel[m.mask]) for m in model.modules])
        pruned, _ = prune_model(model, float(np.median(w)))
        wins = small_run.test_inputs()[:64]
        full = np.mean([latency_bench(model, wins, 2000, 200).mean_ns for _ in range(3)])
        slim = np.mean([latency_bench(pruned, wins, 2000, 200).mean_ns for _ in range(3)])
        assert slim <= full


@pytest.fixture(scope="module")
def sweep_cfg(small_cfg):
    return small_cfg.set("train.epochs", 2).set("train.prune_schedule", (1,))


class TestSweep:
    def test_window_shape(self, sweep_cfg):
        bars = load_bars(sweep_cfg)
        rows = sweep_experiment(bars, "window", [10, 20, 40], sweep_cfg, bench_reps=20)
        assert [r.value for r in rows] == [10, 20, 40]
        assert all(r.rmse >= 0 and r.r2 <= 1 and r.latency_ms > 0 for r in rows)
        assert len(format_sweep("window", rows).splitlines()) == 4
        assert len(json.loads(sweep_json("window", rows))["rows"]) == 3

    def test_single_value_equals_direct_run(self, sweep_cfg):
        bars = load_bars(sweep_cfg)
        (row,) = sweep_experiment(bars, "window", [12], sweep_cfg, bench_reps=5)
        direct = run_pipeline(sweep_cfg.with_window(12), bars)
        assert (row.rmse, row.r2) == (direct.metrics.rmse, direct.metrics.r2)

    def test_zero_threshold_keeps_weight_ranking(self, sweep_cfg):
        cfg = sweep_cfg.with_threshold(0.0)
        prep = prepare(cfg, load_bars(cfg))
        sel = initial_selection(cfg, prep)
        assert sel.survivors() == list(int(i) for i in np.argsort(-sel.weights, kind="stable"))
        assert sel.selected == tuple(sel.survivors()[: cfg["selection.top_m"]])

    def test_empty_axis(self, sweep_cfg):
        with pytest.raises(SizeError):
            sweep_experiment(load_bars(sweep_cfg), "window", [], sweep_cfg)

    def test_threshold_above_signal(self, sweep_cfg):
        cfg = sweep_cfg.set("data.n_bars", 2000).set("train.epochs", 6).set("train.prune_schedule", (3,))
        bars = load_bars(cfg)
        sel = initial_selection(cfg, prepare(cfg, bars))
        signal_mi = float(sel.mi[sel.columns.index("range_ratio")])
        low, high = sweep_experiment(bars, "threshold", [0.05, 1.5 * signal_mi], cfg, bench_reps=5)
        assert low.r2 >= high.r2
