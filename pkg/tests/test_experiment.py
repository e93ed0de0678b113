"""Sweep harness, slope fits and output artifacts."""

import math
import re

import numpy as np
import pytest
from scipy import stats

from fracbackward.exceptions import ParameterError
from fracbackward.experiment import (
    ExperimentSpec,
    RateRecord,
    emit_outputs,
    fit_slopes,
    fits_to_csv,
    records_from_csv,
    records_to_csv,
    render_svg,
    run_experiment,
    thread_count,
)

SMALL = dict(p=(1.0, 2.0), methods=("ftm", "qbvm", "mqbvm:2"), trials=2)


@pytest.fixture(scope="module")
def result():
    return run_experiment(ExperimentSpec(**SMALL))


def synthetic(fn, method="ftm", rule="apriori", p=2.0):
    deltas = [10.0 ** (-2 - k / 2) for k in range(11)]
    return [RateRecord(method, rule, 0, p, d, s, 1.0, fn(d), 0.0) for d in deltas for s in range(3)]


class TestFit:
    def test_sqrt(self):
        (f,) = fit_slopes(synthetic(lambda d: d**0.5))
        assert f.slope == pytest.approx(0.5, abs=1e-12)
        assert f.r2 == pytest.approx(1.0) and f.n_points == 10

    def test_scaled(self):
        (f,) = fit_slopes(synthetic(lambda d: 3 * d**0.75), discard=0)
        assert f.slope == pytest.approx(0.75, abs=1e-12)
        assert f.intercept == pytest.approx(math.log(3), abs=1e-12)
        assert f.n_points == 11

    def test_median(self):
        recs = [
            RateRecord("ftm", "apriori", 0, 1.0, d, s, 1.0, d**0.5 * [1, 100, 1e-3][s], 0.0)
            for d in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
            for s in range(3)
        ]
        (f,) = fit_slopes(recs, discard=0)
        assert f.slope == pytest.approx(0.5, abs=1e-12)

    def test_degenerate(self):
        diag = []
        assert fit_slopes(synthetic(lambda d: 0.0), diagnostics=diag) == []
        assert diag[0][1] == "zero error"
        few = [r for r in synthetic(lambda d: d) if r.delta > 1e-3]
        assert fit_slopes(few, diagnostics=diag) == []
        assert "points" in diag[1][1]

    def test_failed_cells_skipped(self):
        recs = synthetic(lambda d: d**0.5)
        recs.append(RateRecord("ftm", "apriori", 0, 2.0, 1e-7, 9, math.nan, math.nan, math.nan))
        (f,) = fit_slopes(recs)
        assert f.slope == pytest.approx(0.5, abs=1e-12)

    def test_rate_attached(self):
        (f,) = fit_slopes(synthetic(lambda d: d, method="mqbvm:2", p=6.0))
        assert f.rate == pytest.approx(2 / 3)


class TestRun:
    def test_shape(self, result):
        spec = ExperimentSpec(**SMALL)
        assert len(result) == 2 * 2 * 11 * 3 * 2
        assert all(r.error >= 0 for r in result)
        assert result.diagnostics["failed_cells"] == []
        assert result.diagnostics["budget_violations"] == []
        assert result.diagnostics["n_bound_violations"] == []
        assert spec.seeds == [0, 1]

    def test_clean_round_trip(self, result):
        assert result.diagnostics["clean_roundtrip_max"] <= 1e-8

    def test_determinism(self, result):
        again = run_experiment(ExperimentSpec(**SMALL))
        assert records_to_csv(again.records) == records_to_csv(result.records)

    def test_threads(self, result, monkeypatch):
        monkeypatch.setenv("FRACBACKWARD_THREADS", "4")
        assert thread_count() == 4
        par = run_experiment(ExperimentSpec(**SMALL))
        assert records_to_csv(par.records) == records_to_csv(result.records)

    def test_thread_env_invalid(self, monkeypatch):
        monkeypatch.setenv("FRACBACKWARD_THREADS", "many")
        with pytest.raises(ParameterError):
            thread_count()

    def test_cell_reproducible(self, result):
        # a single-seed, single-delta rerun gives the same error
        r = next(x for x in result if x.method == "qbvm" and x.rule == "aposteriori" and x.seed == 1)
        spec = ExperimentSpec(p=(r.p,), methods=("qbvm",), rules=("aposteriori",), trials=2, delta_grid=(r.delta,))
        again = next(x for x in run_experiment(spec) if x.seed == 1)
        assert again.error == pytest.approx(r.error, rel=1e-12)

    def test_spearman(self, result):
        by_key = {}
        for r in result:
            by_key.setdefault(r.key, {}).setdefault(r.delta, []).append(r.error)
        for key, curve in by_key.items():
            ds = sorted(curve)
            med = [np.median(curve[d]) for d in ds]
            rho = stats.spearmanr(ds, med)[0]
            assert rho > 0.9, key

    def test_ftm_p2_slope(self, result):
        f = next(f for f in fit_slopes(result.records) if f.method == "ftm" and f.rule == "apriori" and f.p == 2.0)
        assert 0.40 <= f.slope <= 0.65

    def test_timing_flag(self):
        spec = ExperimentSpec(p=(1.0,), methods=("ftm",), rules=("apriori",), trials=1, delta_grid=(1e-3,), record_timing=True)
        (r,) = run_experiment(spec).records
        assert r.wall_ms > 0

    def test_failed_cell_recorded(self):
        spec = ExperimentSpec(p=(1.0,), methods=("qbvm", "ftm"), trials=1, delta_grid=(10.0, 1e-3))
        res = run_experiment(spec)
        failed = [r for r in res if r.failed]
        assert failed and all(math.isnan(r.error) for r in failed)
        assert len(res.diagnostics["failed_cells"]) == len(failed)
        assert any(not r.failed for r in res)


class TestSpec:
    def test_round_trip(self, tmp_path):
        spec = ExperimentSpec(p=(1.0, 4.0), methods=("ftm",), delta_grid=(1e-2, 1e-3, 1e-4), records_csv="r.csv")
        assert ExperimentSpec.from_json(spec.to_json()) == spec
        path = tmp_path / "s.json"
        path.write_text(spec.to_json())
        assert ExperimentSpec.from_file(path) == spec

    @pytest.mark.parametrize(
        "kw",
        [dict(delta_grid=(1e-3, 1e-2)), dict(trials=0), dict(methods=("mqbvm:0",)), dict(rules=("oracle",)),
         dict(p=(0.0,)), dict(xi=1.0)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            ExperimentSpec(**kw)

    def test_unknown_key(self):
        with pytest.raises(ParameterError):
            ExperimentSpec.from_json('{"colour": 1}')

    def test_defaults(self):
        spec = ExperimentSpec()
        assert len(spec.delta_grid) == 11
        assert spec.delta_grid[0] == 1e-2 and spec.delta_grid[-1] == pytest.approx(1e-7)
        assert spec.trials == 5 and spec.n_modes == 256


class TestOutputs:
    def test_header_only(self):
        assert records_to_csv([]) == "method,rule,q,p,delta,seed,param,error,residual,wall_ms\n"

    def test_csv_round_trip(self, result):
        assert records_from_csv(records_to_csv(result.records)) == result.records

    def test_csv_round_trip_nan(self):
        r = RateRecord("qbvm", "aposteriori", 0, 1.0, 1e-2, 0, math.nan, math.nan, math.nan)
        (back,) = records_from_csv(records_to_csv([r]))
        assert math.isnan(back.error) and back.method == "qbvm"

    def test_not_a_table(self):
        with pytest.raises(ParameterError):
            records_from_csv("a,b\n1,2\n")

    def test_svg(self, result):
        fits = fit_slopes(result.records)
        svg = render_svg(result.records, fits)
        keys = {r.key for r in result}
        assert svg.count("<polyline") == len(keys)
        assert svg.count("<line") == len(fits)
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    def test_svg_empty(self):
        assert "<polyline" not in render_svg([])

    def test_emit(self, tmp_path, result):
        fits = fit_slopes(result.records)
        paths = emit_outputs(result.records, fits, tmp_path / "a/r.csv", tmp_path / "f.csv", tmp_path / "p.svg")
        assert [p.name for p in paths] == ["r.csv", "f.csv", "p.svg"]
        assert (tmp_path / "f.csv").read_text() == fits_to_csv(fits)

    def test_emit_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match=re.escape(str(blocker))):
            emit_outputs([], [], blocker / "r.csv")
