"""Tests for gordinlab.core.maps – systems, observables and orbit sampling."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import qmc

from gordinlab.core.errors import DomainError, ShapeError
from gordinlab.core.maps import (
    BUILTIN_OBSERVABLES,
    LSV_FLOOR,
    Interval,
    MapDescriptor,
    MapKind,
    Orbit,
    Point,
    baker_inverse,
    baker_step,
    base_inverse,
    builtin_observable,
    doubling_step,
    iterate_ensemble,
    lsv_map,
    lsv_step,
    sample_invariant,
    sample_orbit,
)


DOUBLING = MapDescriptor(MapKind.DOUBLING)
BAKER = MapDescriptor(MapKind.UNIFORM_BAKER)


# ---------------------------------------------------------------------------
# Descriptors and points
# ---------------------------------------------------------------------------

class TestDescriptor:
    def test_kind_from_string(self):
        assert MapDescriptor("lsv", gamma=0.3).kind is MapKind.LSV

    def test_gamma_out_of_range(self):
        with pytest.raises(DomainError, match="gamma"):
            MapDescriptor(MapKind.LSV, gamma=1.5)

    def test_baker_contraction_above_half(self):
        with pytest.raises(DomainError, match="injective"):
            MapDescriptor(MapKind.UNIFORM_BAKER, fiber_contraction=0.6)

    def test_polynomial_fibers_need_intermittent_baker(self):
        with pytest.raises(DomainError, match="intermittent"):
            MapDescriptor(MapKind.UNIFORM_BAKER, fiber_rate="polynomial")

    def test_base_of_baker(self):
        desc = MapDescriptor(MapKind.INTERMITTENT_BAKER, gamma=0.4)
        assert desc.base == MapDescriptor(MapKind.LSV, gamma=0.4)
        assert BAKER.base == DOUBLING

    def test_label(self):
        assert MapDescriptor(MapKind.LSV, gamma=0.25).label == "lsv(gamma=0.25)"
        assert DOUBLING.label == "doubling"


class TestPoint:
    def test_reduced_mod_one(self):
        assert Point(1.25).base == 0.25
        assert Point(0.5, 1.75).fiber == 0.75

    def test_non_finite(self):
        with pytest.raises(DomainError):
            Point(float("nan"))
        with pytest.raises(DomainError):
            Point(0.1, float("inf"))


# ---------------------------------------------------------------------------
# Scalar steps
# ---------------------------------------------------------------------------

class TestSteps:
    def test_doubling(self):
        assert doubling_step(0.75) == 0.5
        assert doubling_step(0.25) == 0.5

    def test_doubling_domain(self):
        with pytest.raises(DomainError):
            doubling_step(1.0)

    def test_lsv_left_branch(self):
        assert lsv_step(0.25, 0.5) == pytest.approx(0.25 * (1.0 + math.sqrt(0.5)), abs=1e-15)

    def test_lsv_gamma_zero_is_doubling(self):
        assert lsv_step(0.25, 0.0) == pytest.approx(0.5)

    def test_lsv_boundary_belongs_to_right_branch(self):
        assert lsv_step(0.5, 0.3) == 0.0
        assert lsv_step(0.75, 0.3) == 0.5

    def test_lsv_rejects_gamma(self):
        with pytest.raises(DomainError):
            lsv_step(0.1, 1.0)

    @pytest.mark.parametrize("gamma", [0.0, 0.25, 0.75])
    def test_lsv_left_inverse(self, gamma):
        desc = MapDescriptor(MapKind.LSV, gamma=gamma)
        # x = 1 is excluded: its preimage 1/2 belongs to the right branch
        x = np.concatenate([[0.0, 1e-12, 1e-6], np.linspace(0.0, 1.0, 1001)[:-1]])
        y = base_inverse(desc, x, np.zeros(len(x), dtype=np.int64))
        assert np.all((0.0 <= y) & (y <= 0.5))
        assert lsv_map(y, gamma) == pytest.approx(x, abs=1e-12)
        assert base_inverse(desc, np.ones((2, 3)), np.zeros((2, 3), dtype=np.int64)).shape == (2, 3)

    def test_baker_step_and_inverse(self):
        p = baker_step(Point(0.3, 0.7), BAKER)
        assert p.base == pytest.approx(0.6)
        assert p.fiber == pytest.approx(0.35)
        q = baker_inverse(p, BAKER)
        assert q.base == pytest.approx(0.3)
        assert q.fiber == pytest.approx(0.7)

    def test_baker_upper_branch_with_small_contraction(self):
        desc = MapDescriptor(MapKind.UNIFORM_BAKER, fiber_contraction=0.25)
        p = baker_step(Point(0.8, 0.4), desc)
        assert p.base == pytest.approx(0.6)
        assert p.fiber == pytest.approx(0.85)
        q = baker_inverse(p, desc)
        assert q.base == pytest.approx(0.8)
        assert q.fiber == pytest.approx(0.4)

    def test_polynomial_fiber_inverse(self):
        desc = MapDescriptor(MapKind.INTERMITTENT_BAKER, gamma=0.5, fiber_rate="polynomial")
        p = baker_step(Point(0.3, 0.6), desc)
        assert p.fiber < 0.5
        q = baker_inverse(p, desc)
        assert q.base == pytest.approx(0.3, abs=1e-12)
        assert q.fiber == pytest.approx(0.6, abs=1e-12)

    def test_baker_needs_fiber(self):
        with pytest.raises(DomainError, match="fiber"):
            baker_step(Point(0.3), BAKER)

    def test_non_baker_rejected(self):
        with pytest.raises(DomainError, match="not a baker"):
            baker_step(Point(0.3, 0.3), DOUBLING)


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

class TestObservables:
    def test_x_centered(self):
        obs = builtin_observable("x_centered")
        assert obs.at(Point(0.75)) == pytest.approx([0.25])
        assert obs.dimension == 1

    def test_pair_drift_shape(self):
        obs = builtin_observable("pair_drift")
        values = obs(np.array([0.0, 0.25]))
        assert values.shape == (2, 2)
        assert values[0] == pytest.approx([-0.5, 0.5])

    def test_fiber_observable_needs_fiber(self):
        with pytest.raises(DomainError, match="fiber"):
            builtin_observable("fiber_centered")(np.array([0.1]))

    def test_centered_shifts_values(self):
        obs = builtin_observable("cos2pi").centered(np.array([0.5]))
        assert obs.at(Point(0.0)) == pytest.approx([0.5])
        assert obs.sup_norm_bound == pytest.approx(1.5)

    def test_centered_shape_mismatch(self):
        with pytest.raises(ShapeError):
            builtin_observable("pair_drift").centered(np.array([0.1]))

    def test_unknown(self):
        with pytest.raises(DomainError, match="unknown observable"):
            builtin_observable("nope")

    @pytest.mark.parametrize("name", BUILTIN_OBSERVABLES)
    def test_sup_norm_bound(self, name):
        obs = builtin_observable(name)
        points = qmc.Halton(d=2, seed=0).random(10_000)
        values = obs(points[:, 0], points[:, 1])
        assert values.shape == (10_000, obs.dimension)
        assert np.linalg.norm(values, axis=1).max() <= obs.sup_norm_bound + 1e-12

    @pytest.mark.parametrize("name", BUILTIN_OBSERVABLES)
    def test_centered_under_lebesgue(self, name):
        obs = builtin_observable(name)
        mid = (np.arange(400) + 0.5) / 400
        x, y = np.meshgrid(mid, mid, indexing="ij")
        mean = obs(x.ravel(), y.ravel()).mean(axis=0)
        assert np.abs(mean).max() < 1e-3


# ---------------------------------------------------------------------------
# Orbits and ensembles
# ---------------------------------------------------------------------------

class TestEnsembles:
    def test_deterministic(self):
        a = [b.copy() for b, _ in iterate_ensemble(DOUBLING, 20, 8, seed=5, burn_in=10)]
        b = [b.copy() for b, _ in iterate_ensemble(DOUBLING, 20, 8, seed=5, burn_in=10)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_replicas_independent_of_ensemble_size(self):
        small = [b.copy() for b, _ in iterate_ensemble(DOUBLING, 30, 4, seed=1, burn_in=5)]
        large = [b.copy() for b, _ in iterate_ensemble(DOUBLING, 30, 16, seed=1, burn_in=5)]
        assert all(np.array_equal(s, l[:4]) for s, l in zip(small, large))

    def test_doubling_does_not_collapse(self):
        *_, (base, _) = iterate_ensemble(DOUBLING, 200, 100, seed=2, burn_in=0)
        assert len(np.unique(base)) > 90

    def test_lsv_stays_above_floor(self):
        desc = MapDescriptor(MapKind.LSV, gamma=0.75)
        for base, _ in iterate_ensemble(desc, 100, 50, seed=3, burn_in=100):
            assert base.min() >= LSV_FLOOR
            assert base.max() < 1.0

    def test_start_interval(self):
        (base, _), = iterate_ensemble(DOUBLING, 1, 100, seed=0, burn_in=0, start=Interval(0.0, 0.5))
        assert base.max() < 0.5

    def test_invalid_interval(self):
        with pytest.raises(DomainError):
            Interval(0.5, 0.5)

    def test_rejects_empty_run(self):
        with pytest.raises(DomainError, match="n_steps"):
            next(iterate_ensemble(DOUBLING, 0, 1, seed=0))

    def test_invariant_mean(self):
        base, fiber = sample_invariant(DOUBLING, 20_000, seed=4, burn_in=100)
        assert fiber is None
        assert abs(base.mean() - 0.5) < 0.01

    def test_baker_samples_have_fibers(self):
        base, fiber = sample_invariant(BAKER, 1000, seed=4, burn_in=50)
        assert fiber is not None and fiber.shape == base.shape


class TestOrbit:
    def test_shapes(self):
        orbit = sample_orbit(DOUBLING, builtin_observable("pair_drift"), None, 50, burn_in=10, seed=1)
        assert orbit.n_steps == 50
        assert orbit.dimension == 2
        assert orbit.fiber is None

    def test_explicit_start(self):
        orbit = sample_orbit(DOUBLING, builtin_observable("x_centered"), Point(0.25), 3, burn_in=0)
        assert orbit.base[0] == 0.25
        assert orbit.base[1] == pytest.approx(0.5, abs=1e-12)

    def test_fiber_observable_on_base_map(self):
        with pytest.raises(DomainError, match="baker"):
            sample_orbit(DOUBLING, builtin_observable("fiber_centered"), None, 10)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            Orbit(np.zeros(3), None, np.zeros((2, 1)), burn_in=0, seed=0)
