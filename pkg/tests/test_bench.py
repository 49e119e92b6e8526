"""Tests for the latency scaling benchmark."""

import json
from contextlib import contextmanager

import numpy as np
import pandas as pd
import pytest
from threadpoolctl import threadpool_info

from colorflow.bench import (
    DEFAULT_SIZES,
    SCALING_COLUMNS,
    bench_scaling,
    check_sizes,
    fit_linear,
    synthetic_case,
    write_plot_data,
    write_scaling_csv,
    write_scaling_json,
)
from colorflow.errors import InsufficientDataError
from colorflow.evaluation import make_runner
from colorflow.model import ModelParams

SIZES = [100, 200, 400, 800]


class FakeClock:
    """Clock that only moves when the benchmarked method runs."""

    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now

    def run(self, pair):
        self.now += 1e-6 * pair.n_hr + 1e-3


@pytest.fixture
def report():
    clock = FakeClock()
    return bench_scaling(clock.run, sizes=SIZES, repeats=3, warmup=1, method="fake", clock=clock)


class TestFitLinear:
    """Tests for fit_linear."""

    def test_exact_line(self):
        """Test that points on a line give that line with R^2 of 1."""
        fit = fit_linear([1, 2, 3, 4], [3, 5, 7, 9])

        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.n == 4
        assert fit.predict(10) == pytest.approx(21.0)

    def test_constant_y(self):
        """Test that constant latencies give a flat line and R^2 of 0."""
        fit = fit_linear([1, 2, 3], [5, 5, 5])

        assert (fit.slope, fit.intercept, fit.r_squared) == (0.0, 5.0, 0.0)

    def test_noisy_line_has_r_squared_below_one(self):
        """Test R^2 strictly between 0 and 1 for scattered points."""
        fit = fit_linear([1, 2, 3, 4], [1, 3, 2, 4])

        assert 0.0 < fit.r_squared < 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_two_pass_formulas(self, seed):
        """Test slope, intercept and R^2 against centered two-pass sums."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(5e4, 8e5, 40)
        y = 2e-6 * x + 0.01 + rng.normal(0.0, 0.05, 40)

        fit = fit_linear(x, y)

        dx, dy = x - x.mean(), y - y.mean()
        sxy, sxx, syy = np.sum(dx * dy), np.sum(dx * dx), np.sum(dy * dy)
        slope = sxy / sxx
        assert fit.slope == pytest.approx(slope, rel=1e-12)
        assert fit.intercept == pytest.approx(y.mean() - slope * x.mean(), rel=1e-12)
        assert fit.r_squared == pytest.approx(sxy**2 / (sxx * syy), abs=1e-12)

    def test_insufficient_data(self):
        """Test that one distinct size or ragged input is rejected."""
        with pytest.raises(InsufficientDataError):
            fit_linear([3, 3, 3], [1, 2, 3])
        with pytest.raises(InsufficientDataError):
            fit_linear([1, 2], [1])


class TestCheckSizes:
    """Tests for check_sizes."""

    def test_sorted_and_distinct(self):
        """Test that sizes come back deduplicated and ascending."""
        assert check_sizes([800, 100, 400, 200, 400]) == SIZES

    def test_too_few_sizes(self):
        """Test that three sizes are not enough."""
        with pytest.raises(InsufficientDataError, match="at least 4"):
            check_sizes([100, 400, 1600])

    def test_span_too_small(self):
        """Test that sizes spanning less than 8x are rejected."""
        with pytest.raises(InsufficientDataError, match="span"):
            check_sizes([100, 200, 300, 400])


class TestSyntheticCase:
    """Tests for synthetic_case."""

    @pytest.mark.parametrize("n", [1, 100, 1000, 4097])
    def test_exact_point_count(self, n):
        """Test that the sheet has exactly the requested HR point count."""
        pair = synthetic_case(n)

        assert pair.n_hr == n
        assert pair.ratio == 5
        assert pair.hr.colors is not None

    def test_custom_ratio(self):
        """Test building the case at another ratio."""
        assert synthetic_case(500, v=3).ratio == 3


class TestBenchScaling:
    """Tests for bench_scaling with a deterministic clock."""

    def test_recovers_slope_and_intercept(self, report):
        """Test that the fit recovers the fake clock's cost model."""
        assert [s.n_hr for s in report.samples] == SIZES
        assert report.fit.slope == pytest.approx(1e-6)
        assert report.fit.intercept == pytest.approx(1e-3)
        assert report.fit.r_squared == pytest.approx(1.0)

    def test_repeats_per_size(self, report):
        """Test one timing per repeat and the median per size."""
        assert all(len(s.samples_s) == 3 for s in report.samples)
        assert report.samples[0].median_s == pytest.approx(1.1e-3)

    def test_warmup_runs_are_untimed(self):
        """Test that warmup runs call the method without adding timings."""
        calls = []
        clock = FakeClock()

        def run(pair):
            calls.append(pair.n_hr)
            clock.run(pair)

        bench_scaling(run, sizes=SIZES, repeats=2, warmup=2, clock=clock)

        assert len(calls) == 4 * len(SIZES)

    def test_invalid_repeats(self):
        """Test that zero repeats is rejected."""
        with pytest.raises(InsufficientDataError):
            bench_scaling(lambda pair: None, sizes=SIZES, repeats=0)

    def test_invalid_threads(self):
        """Test that zero threads is rejected."""
        with pytest.raises(InsufficientDataError, match="threads"):
            bench_scaling(lambda pair: None, sizes=SIZES, threads=0)

    def test_on_size_callback(self):
        """Test that the callback sees every size in order."""
        seen = []
        clock = FakeClock()

        bench_scaling(clock.run, sizes=SIZES, repeats=1, warmup=0, clock=clock, on_size=seen.append)

        assert [s.n_hr for s in seen] == SIZES

    def test_every_run_happens_under_the_thread_limit(self, monkeypatch):
        """Test that warmup and timed runs all execute inside the native thread limit."""
        requested = []
        inside = {"active": False}

        @contextmanager
        def recording_limits(limits=None, user_api=None):
            requested.append(limits)
            inside["active"] = True
            try:
                yield
            finally:
                inside["active"] = False

        monkeypatch.setattr("colorflow.bench.threadpool_limits", recording_limits)
        clock = FakeClock()
        states = []

        def run(pair):
            states.append(inside["active"])
            clock.run(pair)

        result = bench_scaling(run, sizes=SIZES, repeats=2, warmup=1, clock=clock, threads=3)

        assert requested == [3]
        assert states == [True] * (3 * len(SIZES))
        assert result.threads == 3
        assert not inside["active"]

    def test_native_pools_are_pinned(self):
        """Test that every native thread pool reports the requested count while timing."""
        counts = []

        def run(pair):
            counts.extend(pool["num_threads"] for pool in threadpool_info())

        bench_scaling(run, sizes=SIZES, repeats=1, warmup=0, threads=1)

        assert all(count == 1 for count in counts)


class TestScalingOutputs:
    """Tests for the CSV, JSON and plot-data writers."""

    def test_csv(self, report, tmp_path):
        """Test the scaling CSV columns and values."""
        path = tmp_path / "scaling.csv"

        write_scaling_csv(report, path)
        frame = pd.read_csv(path)

        assert list(frame.columns) == SCALING_COLUMNS
        assert list(frame["n_hr"]) == SIZES
        np.testing.assert_allclose(frame["median_ms"], [1e-3 * n + 1.0 for n in SIZES])
        np.testing.assert_allclose(frame["fitted_ms"], frame["median_ms"], rtol=1e-9)

    def test_json(self, report, tmp_path):
        """Test the JSON summary fields."""
        path = tmp_path / "scaling.json"

        write_scaling_json(report, path)
        data = json.loads(path.read_text())

        assert data["sizes"] == SIZES
        assert data["fit"]["r_squared"] == pytest.approx(1.0)
        assert (data["repeats"], data["warmup"]) == (3, 1)
        assert data["threads"] == 1

    def test_plot_data(self, report, tmp_path):
        """Test gnuplot columns written from a scaling CSV."""
        csv_path = tmp_path / "scaling.csv"
        write_scaling_csv(report, csv_path)
        out = tmp_path / "plot" / "scaling.dat"

        fit = write_plot_data(csv_path, out)

        lines = out.read_text().splitlines()
        assert lines[0].startswith("# slope_ms_per_point=")
        assert lines[1] == "# n_hr median_ms fitted_ms"
        rows = [list(map(float, line.split())) for line in lines[2:]]
        assert [row[0] for row in rows] == SIZES
        assert fit.slope == pytest.approx(1e-3)
        assert fit.r_squared == pytest.approx(1.0)

    def test_plot_data_needs_columns(self, tmp_path):
        """Test that a CSV without latency columns is rejected."""
        csv_path = tmp_path / "other.csv"
        csv_path.write_text("a,b\n1,2\n")

        with pytest.raises(InsufficientDataError, match="median_ms"):
            write_plot_data(csv_path, tmp_path / "out.dat")


@pytest.mark.slow
class TestNetworkScaling:
    """Wall-clock scaling of the network over 50k to 800k HR points."""

    def test_latency_is_linear_in_point_count(self):
        """Test that network latency fits a line with R^2 of at least 0.98."""
        params = ModelParams.init(channels=64, v_train=5, seed=0)

        result = bench_scaling(
            make_runner("cunet", 5, params), sizes=DEFAULT_SIZES, repeats=3, warmup=1, method="cunet"
        )

        assert [s.n_hr for s in result.samples] == list(DEFAULT_SIZES)
        assert result.fit.slope > 0
        assert result.fit.r_squared >= 0.98
