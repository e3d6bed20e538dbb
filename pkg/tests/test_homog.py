"""Tests for gordinlab.core.homog – fast-slow systems and their SDE limits."""

from __future__ import annotations

import numpy as np
import pytest

from gordinlab.core.errors import BlowupError, DomainError, ShapeError
from gordinlab.core.homog import (
    SDEConfig,
    correction_term,
    corrected_drift,
    euler_maruyama_ensemble,
    fast_slow_config,
    fast_slow_ensemble,
    homogenisation_compare,
    limiting_sde,
    lipschitz_estimate,
    slow_model,
    timescale_consistency,
)
from gordinlab.core.maps import MapDescriptor, MapKind, builtin_observable


DOUBLING = MapDescriptor(MapKind.DOUBLING)
PAIR_DRIFT_SIGMA = np.array([[0.25, 0.25], [0.25, 0.75]])
PAIR_DRIFT_E = np.array([[1 / 12, 1 / 24], [1 / 6, 1 / 12]])


def _brownian(sigma: float, replicas: int, seed: int = 0):
    cfg = SDEConfig(
        drift=lambda x: np.zeros_like(x),
        diffusion=lambda x: np.ones((len(x), 1, 1)),
        sigma=np.array([[sigma]]),
        dt=0.01,
        xi=np.zeros(1),
    )
    return euler_maruyama_ensemble(cfg, replicas, seed)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class TestConfig:
    def test_epsilon_range(self):
        with pytest.raises(DomainError, match="epsilon"):
            fast_slow_config(slow_model("identity"), DOUBLING, builtin_observable("x_centered"), 0.2)

    def test_b_shape_must_match_observable(self):
        with pytest.raises(ShapeError, match="b\\(x\\)"):
            fast_slow_config(slow_model("proposition"), DOUBLING, builtin_observable("x_centered"), 0.05)

    def test_steps(self):
        cfg = fast_slow_config(slow_model("identity"), DOUBLING, builtin_observable("x_centered"), 0.1)
        assert cfg.steps == 100
        assert cfg.dimension == 1

    def test_sde_dt(self):
        with pytest.raises(DomainError, match="dt"):
            SDEConfig(lambda x: x, lambda x: x, np.eye(1), 0.0, np.zeros(1))

    def test_unknown_model(self):
        with pytest.raises(DomainError, match="unknown slow model"):
            slow_model("chaotic")

    def test_models(self):
        assert slow_model("proposition").noise_dimension == 2
        assert slow_model("identity", 3).dimension == 3
        assert slow_model("linear").b(np.array([[2.0]])).shape == (1, 1, 1)


# ---------------------------------------------------------------------------
# Drift correction
# ---------------------------------------------------------------------------

class TestCorrection:
    def test_proposition_correction_is_constant(self):
        model = slow_model("proposition")
        x = np.array([[0.0, 0.0], [1.0, -2.0], [0.3, 0.7]])
        corr = correction_term(model.b, model.db, PAIR_DRIFT_E, x)
        assert corr == pytest.approx(np.tile([0.0, 1 / 24], (3, 1)))

    def test_literal_half(self):
        model = slow_model("proposition")
        drift = corrected_drift(model.a, model.b, model.db, PAIR_DRIFT_E, "literal_half")
        assert drift(np.array([[0.0, 1.0]])) == pytest.approx([[0.0, -1.0 + 0.5 / 24]])

    def test_unknown_convention(self):
        model = slow_model("proposition")
        with pytest.raises(DomainError, match="convention"):
            corrected_drift(model.a, model.b, model.db, PAIR_DRIFT_E, "stratonovich")

    def test_shape_check(self):
        model = slow_model("proposition")
        with pytest.raises(ShapeError):
            correction_term(model.b, model.db, np.eye(3), np.zeros((1, 2)))

    def test_uncorrected_limit(self):
        model = slow_model("proposition")
        cfg = fast_slow_config(model, DOUBLING, builtin_observable("pair_drift"), 0.05)
        sde = limiting_sde(cfg, PAIR_DRIFT_SIGMA, PAIR_DRIFT_E, convention=None)
        x = np.array([[0.0, 1.0]])
        assert sde.drift(x) == pytest.approx(model.a(x))
        assert sde.dt == pytest.approx(0.0025)


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------

class TestSimulators:
    def test_euler_maruyama_variance(self):
        paths = _brownian(0.25, 4000, seed=1)
        assert paths.paths.shape == (4000, 1000, 1)
        assert paths.terminal.var() == pytest.approx(0.25, abs=0.025)

    def test_blowup(self):
        cfg = SDEConfig(
            drift=lambda x: 50.0 * x,
            diffusion=lambda x: np.zeros((len(x), 1, 1)),
            sigma=np.zeros((1, 1)),
            dt=0.01,
            xi=np.ones(1),
        )
        with pytest.raises(BlowupError):
            euler_maruyama_ensemble(cfg, 2, seed=0)

    def test_fast_slow_identity(self):
        cfg = fast_slow_config(slow_model("identity"), DOUBLING, builtin_observable("x_centered"), 0.05, burn_in=100)
        paths = fast_slow_ensemble(cfg, 1000, seed=3)
        assert paths.times[0] == 0.0 and paths.times[-1] == pytest.approx(1.0)
        assert np.all(paths.paths[:, 0] == 0.0)
        assert paths.terminal.var() == pytest.approx(0.25, rel=0.15)

    def test_rows(self):
        paths = _brownian(1.0, 2)
        rows = paths.rows()
        assert len(rows) == 2 * 1000
        assert rows[0] == (0, 0.0, 0.0)

    def test_lipschitz_estimate(self):
        paths = _brownian(1.0, 3)
        assert lipschitz_estimate(lambda x: 3.0 * x, paths) == pytest.approx(3.0, rel=1e-9)


# ---------------------------------------------------------------------------
# Comparisons
# ---------------------------------------------------------------------------

class TestCompare:
    def test_identical_ensembles(self):
        x = _brownian(1.0, 500).terminal
        sample = np.hstack([x, 2 * x + 1])
        reports = homogenisation_compare(sample, sample.copy())
        assert [r.test_name for r in reports] == ["mean[0]", "var[0]", "mean[1]", "var[1]", "cov[0,1]", "ks[0]", "ks[1]"]
        assert all(r.passed for r in reports)

    def test_shifted_mean_detected(self):
        x = _brownian(1.0, 2000).terminal
        reports = homogenisation_compare(x, x + 0.5)
        assert not reports[0].passed

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            homogenisation_compare(np.zeros((5, 1)), np.zeros((5, 2)))

    def test_timescale_consistency(self):
        cfg = fast_slow_config(slow_model("identity"), DOUBLING, builtin_observable("x_centered"), 0.1, burn_in=100)
        reports = timescale_consistency(cfg, 500, seed=5)
        assert [r.test_name for r in reports] == ["mean[0]", "var[0]"]
        assert all(r.passed for r in reports)


@pytest.mark.slow
def test_corrected_limit_matches_fast_slow():
    model = slow_model("proposition")
    cfg = fast_slow_config(model, DOUBLING, builtin_observable("pair_drift"), 0.05, burn_in=1000)
    fs = fast_slow_ensemble(cfg, 2000, seed=7)
    sde = euler_maruyama_ensemble(limiting_sde(cfg, PAIR_DRIFT_SIGMA, PAIR_DRIFT_E), 2000, seed=8)
    reports = homogenisation_compare(fs.terminal, sde.terminal)
    assert all(r.passed for r in reports), [r.test_name for r in reports if not r.passed]


@pytest.mark.slow
def test_uncorrected_limit_misses_the_mean():
    model = slow_model("proposition")
    cfg = fast_slow_config(model, DOUBLING, builtin_observable("pair_drift"), 0.05, burn_in=1000)
    fs = fast_slow_ensemble(cfg, 5000, seed=7)
    sde = euler_maruyama_ensemble(limiting_sde(cfg, PAIR_DRIFT_SIGMA, PAIR_DRIFT_E, convention=None), 5000, seed=8)
    reports = {r.test_name: r for r in homogenisation_compare(fs.terminal, sde.terminal)}
    assert reports["mean[0]"].passed
    assert not reports["mean[1]"].passed
    assert reports["mean[1]"].details["fast_slow"] > reports["mean[1]"].details["sde"]
