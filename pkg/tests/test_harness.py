"""Rate fitting, config validation, report emission, and gap tolerance."""

import json
from pathlib import Path

import numpy as np
import pytest

from perihom import harness
from perihom.errors import FitUnderdetermined, NonpositiveError
from perihom.harness import (ExperimentConfig, emit_report, fit_rate,
                             run_rate_study)
from perihom.twoscale import TwoScaleReport


class TestFitRate:
    def test_exact_line_slope_one(self):
        fit = fit_rate([(1 / 8, 1 / 8), (1 / 16, 1 / 16), (1 / 32, 1 / 32)])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_exact_half_power(self):
        pts = [(e, 3.0 * np.sqrt(e)) for e in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
        fit = fit_rate(pts)
        assert fit.slope == pytest.approx(0.5, abs=1e-12)

    def test_two_points_underdetermined(self):
        with pytest.raises(FitUnderdetermined):
            fit_rate([(1 / 8, 1.0), (1 / 16, 0.5)])

    def test_nonpositive_error_rejected(self):
        with pytest.raises(NonpositiveError):
            fit_rate([(1 / 8, 1.0), (1 / 16, 0.0), (1 / 32, 0.1)])


class TestConfigValidation:
    def test_non_dyadic_epsilons(self):
        with pytest.raises(ValueError):
            ExperimentConfig(epsilons=(1 / 8, 1 / 12, 1 / 32))

    def test_increasing_epsilons(self):
        with pytest.raises(ValueError):
            ExperimentConfig(epsilons=(1 / 32, 1 / 16, 1 / 8))

    def test_mesh_factor_floor(self):
        with pytest.raises(ValueError):
            ExperimentConfig(mesh_factor=4)

    def test_round_trip_dict(self):
        cfg = ExperimentConfig(epsilons=(1 / 8, 1 / 16, 1 / 32), cell_n=64,
                               mesh_factor=8)
        again = ExperimentConfig(**cfg.as_dict())
        assert again.epsilons == cfg.epsilons
        assert again.rate_windows == cfg.rate_windows


def _fake_report(eps, scale=1.0):
    return TwoScaleReport(
        epsilon=eps, err_L2_u0=scale * eps, err_H1_w=scale * np.sqrt(eps),
        err_weighted=scale * eps, err_interior=scale * eps,
        norm_u0_H2=3.0, layer_L2_w=scale * eps, layer_H1_w=scale * np.sqrt(eps),
        err_H1_w_semi=scale * np.sqrt(eps), err_interior_semi=scale * eps)


class TestEmission:
    def test_csv_schema_and_rows(self, tmp_path):
        reports = [_fake_report(e) for e in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
        text = harness.reports_to_csv(reports)
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(TwoScaleReport.CSV_FIELDS)
        assert len(lines) == 5

    def test_empty_reports_header_only(self):
        text = harness.reports_to_csv([])
        assert text == ",".join(TwoScaleReport.CSV_FIELDS) + "\n"

    def test_emit_files_and_plot_flag(self, tmp_path, monkeypatch):
        cfg = ExperimentConfig(epsilons=(1 / 8, 1 / 16, 1 / 32), cell_n=64,
                               mesh_factor=8, plot=False)
        reports = [_fake_report(e) for e in cfg.epsilons]
        fits = {ch: fit_rate([(r.epsilon, getattr(r, ch)) for r in reports])
                for ch in harness.RATE_CHANNELS}
        result = harness.StudyResult(
            config=cfg, reports=reports,
            certificates={r.epsilon: {ch: 0.0 for ch in harness.RATE_CHANNELS}
                          for r in reports},
            fits=fits,
            reliable={ch: True for ch in harness.RATE_CHANNELS},
            window_pass={ch: True for ch in harness.RATE_CHANNELS},
            identity_report=_DummyIdentity(), a_hat_entries=np.zeros((2, 2, 2, 2)),
            failures={}, orthogonality={}, compatibility={})
        paths = emit_report(result, tmp_path / "out")
        assert (tmp_path / "out" / "rates.csv").exists()
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["plot"] is False
        assert "svg" not in paths
        assert summary["channels"]["err_L2_u0"]["slope"] == pytest.approx(1.0)
        assert summary["channels"]["err_H1_w"]["window_pass"] is True

    def test_svg_written_when_enabled(self, tmp_path):
        cfg = ExperimentConfig(epsilons=(1 / 8, 1 / 16, 1 / 32), cell_n=64,
                               mesh_factor=8, plot=True)
        reports = [_fake_report(e) for e in cfg.epsilons]
        fits = {ch: fit_rate([(r.epsilon, getattr(r, ch)) for r in reports])
                for ch in harness.RATE_CHANNELS}
        result = harness.StudyResult(
            config=cfg, reports=reports,
            certificates={r.epsilon: {ch: 0.0 for ch in harness.RATE_CHANNELS}
                          for r in reports},
            fits=fits,
            reliable={ch: True for ch in harness.RATE_CHANNELS},
            window_pass={ch: True for ch in harness.RATE_CHANNELS},
            identity_report=_DummyIdentity(), a_hat_entries=np.zeros((2, 2, 2, 2)),
            failures={}, orthogonality={}, compatibility={})
        paths = emit_report(result, tmp_path / "out")
        svg = Path(paths["svg"]).read_text()
        assert svg.startswith("<svg")
        assert "slope 1" in svg and "slope 0.5" in svg


class _DummyIdentity:
    def as_dict(self):
        return {}

    @property
    def all_passed(self):
        return True


class TestFloorDetection:
    def test_constant_coefficients_flagged_floor_dominated(self):
        # chi = 0 and identical operators: every channel sits at solver noise
        cfg = ExperimentConfig(coefficient="constant", coefficient_params={},
                               epsilons=(1 / 8, 1 / 16, 1 / 32), cell_n=64,
                               mesh_factor=8)
        result = run_rate_study(cfg)
        assert all(r.err_L2_u0 <= 1e-8 for r in result.reports)
        assert not any(result.reliable.values())
        assert not any(result.window_pass.values())


@pytest.mark.slow
def test_parallel_matches_sequential(tmp_path):
    kwargs = dict(epsilons=(1 / 8, 1 / 16, 1 / 32), cell_n=64, mesh_factor=8)
    emit_report(run_rate_study(ExperimentConfig(parallelism=2, **kwargs)),
                tmp_path / "par")
    emit_report(run_rate_study(ExperimentConfig(parallelism=1, **kwargs)),
                tmp_path / "seq")
    assert (tmp_path / "par" / "rates.csv").read_bytes() == \
        (tmp_path / "seq" / "rates.csv").read_bytes()


class TestGapTolerance:
    def test_failed_epsilon_recorded_not_fatal(self, monkeypatch):
        cfg = ExperimentConfig(epsilons=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
                               cell_n=64, mesh_factor=8)
        real = harness._reports_for_eps

        def flaky(config, eps, chi, a_hat_entries):
            if eps == 1 / 64:
                raise RuntimeError("injected failure")
            return real(config, eps, chi, a_hat_entries)

        monkeypatch.setattr(harness, "_reports_for_eps", flaky)
        result = run_rate_study(cfg)
        assert 1 / 64 in result.failures
        assert "injected failure" in result.failures[1 / 64]
        assert len(result.reports) == 3
        assert all(np.isfinite(f.slope) for f in result.fits.values())

    def test_too_many_failures_raise(self, monkeypatch):
        cfg = ExperimentConfig(epsilons=(1 / 8, 1 / 16, 1 / 32), cell_n=64,
                               mesh_factor=8)

        def broken(config, eps, chi, a_hat_entries):
            raise RuntimeError("all gone")

        monkeypatch.setattr(harness, "_reports_for_eps", broken)
        with pytest.raises(FitUnderdetermined):
            run_rate_study(cfg)
