"""Tests for gordinlab.core.processes – W_n, 𝕎_n and the Sigma estimators."""

from __future__ import annotations

import numpy as np
import pytest

from gordinlab.core.errors import DomainError, ShapeError
from gordinlab.core.maps import MapDescriptor, MapKind, Orbit, builtin_observable, sample_orbit
from gordinlab.core.decomposition import martingale_part
from gordinlab.core.processes import (
    Estimate,
    degeneracy_check,
    discrepancy,
    drift_matrix,
    ensemble_terminal_pairs,
    iterated_path,
    shuffle_identity_error,
    sigma_direct,
    sigma_green_kubo,
    sigma_martingale,
    sigma_report,
    wip_path,
)
from gordinlab.core.transfer import LagCorrelations, build_ulam, project, ulam_correlations


DOUBLING = MapDescriptor(MapKind.DOUBLING)


def _orbit(values) -> Orbit:
    values = np.asarray(values, dtype=float)
    return Orbit(base=np.zeros(len(values)), fiber=None, observable_values=values, burn_in=0, seed=0)


@pytest.fixture(scope="module")
def doubling_op():
    return build_ulam(DOUBLING, 4096)


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

class TestPaths:
    def test_hand_computed(self):
        path = iterated_path(_orbit([[1.0], [2.0], [3.0]]), 3)
        assert path.times == pytest.approx([0, 1 / 3, 2 / 3, 1])
        assert path.w_path[:, 0] == pytest.approx(np.array([0, 1, 3, 6]) / np.sqrt(3))
        assert path.ww_path[:, 0, 0] == pytest.approx(np.array([0, 0, 2, 11]) / 3)

    def test_wip_has_no_iterated_part(self):
        path = wip_path(_orbit([[1.0], [1.0]]), 2)
        assert path.ww_path is None
        assert path.rows()[-1] == pytest.approx((1.0, np.sqrt(2)))
        with pytest.raises(DomainError):
            shuffle_identity_error(path)

    def test_short_orbit(self):
        with pytest.raises(ShapeError, match="needs 6"):
            iterated_path(_orbit([[1.0], [2.0], [3.0]]), 3, K=2.0)

    def test_rejects_n(self):
        with pytest.raises(DomainError):
            wip_path(_orbit([[1.0]]), 0)

    def test_shuffle_identity(self):
        orbit = sample_orbit(DOUBLING, builtin_observable("pair_drift"), None, 1000, burn_in=100, seed=2)
        path = iterated_path(orbit, 500, K=2.0)
        assert path.ww_path.shape == (1001, 2, 2)
        assert shuffle_identity_error(path) < 1e-10

    def test_ensemble_matches_single_orbit(self):
        obs = builtin_observable("pair_drift")
        sample = ensemble_terminal_pairs(DOUBLING, obs, 200, 4, seed=9, burn_in=50)
        path = iterated_path(sample_orbit(DOUBLING, obs, None, 200, burn_in=50, seed=9), 200)
        assert sample.w[0] == pytest.approx(path.w_path[-1], rel=1e-12, abs=1e-14)
        assert sample.ww[0] == pytest.approx(path.ww_path[-1], rel=1e-12, abs=1e-14)
        assert sample.replicas == 4

    def test_ensemble_rejects_replicas(self):
        with pytest.raises(DomainError):
            ensemble_terminal_pairs(DOUBLING, builtin_observable("x_centered"), 10, 0, seed=0)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

class TestGreenKubo:
    def test_hand_computed(self):
        per_chain = np.tile(np.array([1.0, 0.5, 0.25])[None, :, None, None], (2, 1, 1, 1))
        corr = LagCorrelations(per_chain=per_chain, method="monte_carlo")
        assert sigma_green_kubo(corr).value == pytest.approx([[2.5]])
        assert drift_matrix(corr).value == pytest.approx([[0.75]])
        assert sigma_green_kubo(corr).tail_bound == 0.0

    def test_lag_range(self):
        corr = LagCorrelations(per_chain=np.zeros((1, 3, 1, 1)), method="ulam")
        with pytest.raises(DomainError, match="exceeds"):
            sigma_green_kubo(corr, 5)
        with pytest.raises(DomainError):
            drift_matrix(corr, 0)

    def test_doubling_pair(self, doubling_op):
        v = project(doubling_op, builtin_observable("pair_drift"))
        corr = ulam_correlations(doubling_op, v, 60)
        sigma = sigma_green_kubo(corr)
        assert sigma.value == pytest.approx(np.array([[0.25, 0.25], [0.25, 0.75]]), abs=2e-3)
        assert drift_matrix(corr).value == pytest.approx(np.array([[1 / 12, 1 / 24], [1 / 6, 1 / 12]]), abs=2e-3)
        assert sigma.tail_bound == 0.0

    def test_martingale_estimator(self, doubling_op):
        v = project(doubling_op, builtin_observable("x_centered"))
        sigma = sigma_martingale(doubling_op, martingale_part(doubling_op, v))
        assert sigma.value == pytest.approx([[0.25]], abs=0.01)
        assert np.all(sigma.stderr == 0)

    def test_direct(self):
        sample = ensemble_terminal_pairs(DOUBLING, builtin_observable("x_centered"), 1000, 1000, seed=7, burn_in=100)
        est = sigma_direct(sample)
        assert abs(est.value[0, 0] - 0.25) < 5 * est.stderr[0, 0] + 0.01


class TestDiscrepancy:
    def test_units_of_stderr(self):
        a = Estimate(value=np.array([[1.0]]), stderr=np.array([[0.1]]))
        assert discrepancy(a, Estimate.exact([[1.3]])) == pytest.approx(3.0)

    def test_exact_estimates(self):
        assert discrepancy(Estimate.exact([[1.0]]), Estimate.exact([[1.0]])) == 0.0
        assert discrepancy(Estimate.exact([[1.0]]), Estimate.exact([[1.1]])) == float("inf")

    def test_report_pairs(self):
        report = sigma_report(
            direct=Estimate(np.array([[0.25]]), np.array([[0.01]])),
            green_kubo=Estimate(np.array([[0.26]]), np.array([[0.01]])),
            martingale=Estimate.exact([[0.25]]),
        )
        assert set(report.discrepancies) == {"direct~green_kubo", "direct~martingale", "green_kubo~martingale"}
        assert report.agree
        assert not report.degenerate
        assert report.to_dict()["degenerate"] is False


class TestDegeneracy:
    def test_witness(self):
        report = sigma_report(martingale=Estimate.exact([[0.25, 0.25], [0.25, 0.25]]))
        assert report.degenerate
        witness = report.verdict.witness
        assert witness == pytest.approx(np.array([-1.0, 1.0]) / np.sqrt(2), abs=1e-9)

    def test_non_degenerate(self):
        verdict = degeneracy_check(sigma_report(green_kubo=Estimate.exact([[0.25]])))
        assert not verdict.degenerate
        assert verdict.witness is None
        assert verdict.estimator == "green_kubo"

    def test_missing_estimator(self):
        report = sigma_report(green_kubo=Estimate.exact([[0.25]]))
        with pytest.raises(DomainError, match="not present"):
            degeneracy_check(report, estimator="direct")

    def test_empty_report(self):
        with pytest.raises(DomainError):
            degeneracy_check(sigma_report())


@pytest.mark.slow
def test_three_estimators_agree_for_doubling(doubling_op):
    obs = builtin_observable("x_centered")
    v = project(doubling_op, obs)
    report = sigma_report(
        direct=sigma_direct(ensemble_terminal_pairs(DOUBLING, obs, 10_000, 2000, seed=11, burn_in=1000)),
        green_kubo=sigma_green_kubo(ulam_correlations(doubling_op, v, 60)),
        martingale=sigma_martingale(doubling_op, martingale_part(doubling_op, v)),
    )
    for est in report.estimates().values():
        allowed = max(0.02 * 0.25, 4 * est.stderr[0, 0])
        assert abs(est.value[0, 0] - 0.25) <= allowed
