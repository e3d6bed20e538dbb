"""Tests for gordinlab.core.stats – verdict helpers, reference law and inequalities."""

from __future__ import annotations

import numpy as np
import pytest

from gordinlab.core.errors import DomainError, PSDError, ShapeError
from gordinlab.core.maps import Interval, MapDescriptor, MapKind, builtin_observable
from gordinlab.core.stats import (
    ReferenceLawSampler,
    TestReport,
    ks_normality,
    majority_verdict,
    maximal_inequality_suite,
    mean_within_stderr,
    psd_factor,
    reference_convergence_check,
    sample_limit_pair,
    two_sample_compare,
    zweimuller_robustness,
)
from gordinlab.core.transfer import build_ulam


DOUBLING = MapDescriptor(MapKind.DOUBLING)


def _gaussian(count: int, seed: int, scale: float = 1.0) -> np.ndarray:
    return scale * np.random.default_rng(seed).standard_normal(count)


def _report(passed: bool) -> TestReport:
    return TestReport("t", 0.0, None, 1.0, passed, (1,))


# ---------------------------------------------------------------------------
# Verdict helpers
# ---------------------------------------------------------------------------

class TestVerdicts:
    def test_p_value_range(self):
        with pytest.raises(DomainError, match="p-value"):
            TestReport("t", 0.0, 1.5, 0.01, True, (10,))

    def test_majority(self):
        assert majority_verdict([_report(True), _report(False), _report(True)])
        assert not majority_verdict([_report(True), _report(False), _report(False)])
        assert not majority_verdict([])

    def test_to_dict(self):
        d = _report(True).to_dict()
        assert d["sample_sizes"] == [1]
        assert d["flags"] == []

    def test_mean_within_stderr(self):
        samples = _gaussian(2000, 1)[:, None]
        assert mean_within_stderr(samples, 0.0).passed
        assert not mean_within_stderr(samples, 1.0).passed

    def test_mean_of_constant_samples(self):
        samples = np.full((10, 1), 0.5)
        assert mean_within_stderr(samples, 0.5).passed
        assert mean_within_stderr(samples, 0.6).statistic == float("inf")


class TestKolmogorovSmirnov:
    def test_matching_variance(self):
        assert ks_normality(_gaussian(5000, 2, scale=2.0), 4.0).passed

    def test_wrong_variance(self):
        report = ks_normality(_gaussian(5000, 2, scale=2.0), 1.0)
        assert not report.passed
        assert report.p_value < 0.01

    def test_rejects_variance(self):
        with pytest.raises(DomainError):
            ks_normality(np.zeros(10), 0.0)

    def test_two_sample(self):
        a = _gaussian(3000, 3)
        b = _gaussian(3000, 4)
        assert two_sample_compare(a, b).passed
        assert not two_sample_compare(a, b + 1.0).passed

    def test_two_sample_dimensions(self):
        with pytest.raises(ShapeError):
            two_sample_compare(np.zeros((5, 2)), np.zeros((5, 3)))


# ---------------------------------------------------------------------------
# Reference law
# ---------------------------------------------------------------------------

class TestPsdFactor:
    def test_factorises(self):
        sigma = np.array([[2.0, 1.0], [1.0, 2.0]])
        f = psd_factor(sigma)
        assert f @ f.T == pytest.approx(sigma)

    def test_singular(self):
        sigma = np.ones((2, 2))
        f = psd_factor(sigma)
        assert f @ f.T == pytest.approx(sigma)

    def test_negative(self):
        with pytest.raises(PSDError, match="negative"):
            psd_factor(np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_asymmetric(self):
        with pytest.raises(PSDError, match="symmetric"):
            psd_factor(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestReferenceLaw:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ReferenceLawSampler(np.eye(2), np.zeros((1, 1)))

    def test_moments(self):
        sampler = ReferenceLawSampler(np.array([[1.0]]), np.array([[0.5]]), n_fine=64)
        w, ww = sample_limit_pair(sampler, 4000, seed=3)
        assert w.shape == (4000, 1)
        assert ww.shape == (4000, 1, 1)
        assert w.var() == pytest.approx(1.0, abs=0.1)
        assert mean_within_stderr(ww, 0.5, sigmas=4).passed

    def test_rejects_count(self):
        sampler = ReferenceLawSampler(np.array([[1.0]]), np.array([[0.0]]), n_fine=4)
        with pytest.raises(DomainError):
            sample_limit_pair(sampler, 0, seed=0)

    def test_convergence(self):
        sampler = ReferenceLawSampler(np.array([[1.0]]), np.array([[0.0]]), n_fine=32)
        assert reference_convergence_check(sampler, 2000, seed=1).passed


# ---------------------------------------------------------------------------
# Maximal inequalities and robustness
# ---------------------------------------------------------------------------

class TestInequalities:
    @pytest.mark.parametrize("name", ["x_centered", "cos2pi", "pair_drift"])
    def test_doubling(self, name):
        op = build_ulam(DOUBLING, 1024)
        rio, doob = maximal_inequality_suite(DOUBLING, builtin_observable(name), op, 500, 100, seed=2, burn_in=100)
        assert rio.test_name == f"rio[{name}]"
        assert doob.test_name == f"doob[{name}]"
        assert rio.passed
        assert doob.passed
        assert 0 < doob.details["observed_ratio"] < 4.4


class TestRobustness:
    def test_half_interval_start(self):
        report = zweimuller_robustness(
            DOUBLING, builtin_observable("x_centered"), Interval(0.0, 0.5), 500, 500, seed=4, burn_in=100
        )
        assert report.passed
        assert report.details["nu"] == [0.0, 0.5]
        assert report.flags == []

    @pytest.mark.slow
    def test_half_interval_start_at_full_length(self):
        reports = [
            zweimuller_robustness(
                DOUBLING, builtin_observable("x_centered"), Interval(0.0, 0.5), 10_000, 2000, seed=s, burn_in=10_000
            )
            for s in (4, 5, 6)
        ]
        assert majority_verdict(reports)
        assert all(r.flags == [] for r in reports)

    def test_small_n_flag(self):
        report = zweimuller_robustness(DOUBLING, builtin_observable("x_centered"), None, 50, 50, seed=4, burn_in=10)
        assert "small-n" in report.flags
