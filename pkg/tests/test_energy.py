"""
Tests for the energy functional, the fiber map and the Nehari projection.
"""

import math

import numpy as np
import pytest

from conftest import build_problem, random_state
from kirchhoff_nehari.energy import (
    coercivity_gap,
    energy,
    energy_and_gradient,
    energy_gradient,
    fiber,
    fiber_curvature,
    fiber_from_terms,
    nehari_energy_norm_bound,
    nehari_J,
    nehari_project,
    nehari_radius_bound,
    nehari_residual,
    nehari_transversality,
    ray_terms,
    scale_terms,
)
from kirchhoff_nehari.errors import (
    GridMismatchError,
    PreconditionError,
    ProjectionFailure,
    UndefinedOnOriginError,
)
from kirchhoff_nehari.field_grid import Grid, StatePair, forward_grad_sq_integral, inner


def _presets(n: int = 10):
    return [
        build_problem(n=n),
        build_problem(n=n, p=5.0, q=5.5, mu=1.5, V1="1.5 + 0.2*x^2/9", V2="1.2",
                      lam="0.3*exp(-(x^2+y^2+z^2)/4)", a2=1.3),
        build_problem(n=n, p=4.5, q=6, lam="0.25"),
        build_problem(n=n, p=6, q=6, lam="0.25", alpha="log_integral"),
    ]


def _pairing(a: StatePair, b: StatePair) -> float:
    return inner(a.u, b.u) + inner(a.v, b.v)


class TestEnergy:
    def test_zero_state(self, decoupled):
        zero = StatePair.zeros(decoupled.grid)
        assert energy(decoupled, zero).total == 0.0
        assert energy_gradient(decoupled, zero).is_zero()

    def test_constant_state_closed_form(self):
        spec = build_problem(n=8, L=4.0, lam="0.25")
        grid = spec.grid
        c = 0.5
        s = StatePair(grid.constant(c), grid.constant(c))
        vol = grid.volume
        norm = c * c * vol
        expected = (
            norm
            + 0.5 * 2 * (0.5 * 0.05 * norm ** 2)
            - 2 * c ** 4.5 * vol / 4.5
            - 0.25 * c * c * vol
        )
        assert energy(spec, s).total == pytest.approx(expected, rel=1e-12)

    def test_breakdown_sums_to_total(self, coupled, rng):
        b = energy(coupled, random_state(coupled.grid, rng))
        assert b.total == pytest.approx(b.quad + b.kirchhoff - b.power_p - b.power_q - b.coupling)

    def test_gradient_matches_finite_differences(self, rng):
        specs = _presets(n=16)
        for k in range(50):
            spec = specs[k % len(specs)]
            s = random_state(spec.grid, rng)
            grad = energy_gradient(spec, s)
            noise = random_state(spec.grid, rng)
            d = StatePair(grad.u + noise.u, grad.v + noise.v)
            d = d.scale(1.0 / max(np.abs(d.u.values).max(), np.abs(d.v.values).max()))
            eps = 1e-5
            fd = (
                energy(spec, s.combine(-eps, d)).total - energy(spec, s.combine(eps, d)).total
            ) / (2 * eps)
            exact = _pairing(grad, d)
            assert abs(fd - exact) <= 1e-6 * abs(exact)

    def test_matches_independent_evaluation(self, rng):
        for spec in _presets():
            pots = spec.sampled()
            for _ in range(5):
                s = random_state(spec.grid, rng)
                u, v = s.u.values, s.v.values
                cell = spec.grid.cell_volume
                norm_u = forward_grad_sq_integral(s.u) + cell * np.sum(pots.V1.values * u * u)
                norm_v = forward_grad_sq_integral(s.v) + cell * np.sum(pots.V2.values * v * v)
                expected = (
                    0.5 * (spec.a1 * norm_u + spec.a2 * norm_v)
                    + 0.5 * (float(spec.alpha.value(norm_u)) + float(spec.beta.value(norm_v)))
                    - spec.mu / spec.p * cell * np.sum(np.abs(u) ** spec.p)
                    - cell * np.sum(np.abs(v) ** spec.q) / spec.q
                    - cell * np.sum(pots.lam.values * u * v)
                )
                total = energy(spec, s).total
                assert total == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_energy_and_gradient_agree(self, coupled, rng):
        s = random_state(coupled.grid, rng)
        value, grad, terms = energy_and_gradient(coupled, s)
        assert value.total == energy(coupled, s).total
        assert grad.u.allclose(energy_gradient(coupled, s).u)
        assert terms == ray_terms(coupled, s)


class TestFiber:
    def test_derivative_is_nehari_over_t(self, coupled, rng):
        s = random_state(coupled.grid, rng)
        for t in (0.3, 1.0, 2.5):
            value = fiber(coupled, s, t)
            assert value.g == pytest.approx(energy(coupled, s.scale(t)).total, rel=1e-11)
            assert value.gprime == pytest.approx(
                nehari_J(coupled, s.scale(t)) / t, rel=1e-9, abs=1e-8
            )

    def test_curvature_matches_finite_differences(self, coupled, rng):
        s = random_state(coupled.grid, rng)
        t, eps = 0.8, 1e-5
        fd = (fiber(coupled, s, t + eps).gprime - fiber(coupled, s, t - eps).gprime) / (2 * eps)
        assert fiber_curvature(coupled, s, t) == pytest.approx(fd, rel=1e-6, abs=1e-6)

    def test_rejects_nonpositive_t(self, decoupled, rng):
        with pytest.raises(PreconditionError):
            fiber(decoupled, random_state(decoupled.grid, rng), 0.0)

    def test_origin(self, decoupled):
        zero = StatePair.zeros(decoupled.grid)
        with pytest.raises(UndefinedOnOriginError):
            nehari_J(decoupled, zero)
        with pytest.raises(UndefinedOnOriginError):
            fiber(decoupled, zero, 1.0)
        with pytest.raises(UndefinedOnOriginError):
            nehari_project(decoupled, zero)

    def test_derivative_changes_sign_once(self, rng):
        ts = np.logspace(-3, 3, 200)
        for spec in _presets():
            for _ in range(50):
                terms = ray_terms(spec, random_state(spec.grid, rng))
                signs = np.sign([fiber_from_terms(spec, terms, t).gprime for t in ts])
                assert signs[0] > 0 and signs[-1] < 0
                assert np.count_nonzero(np.diff(signs)) == 1


class TestProjection:
    def test_lands_on_manifold(self, rng):
        for spec in _presets():
            for _ in range(50):
                proj = nehari_project(spec, random_state(spec.grid, rng))
                assert nehari_residual(spec, ray_terms(spec, proj.projected)) <= 1e-8
                assert proj.bracket[0] <= proj.t0 <= proj.bracket[1]
                assert proj.g_at_t0 == pytest.approx(energy(spec, proj.projected).total, rel=1e-10)

    def test_projection_maximizes_fiber(self, coupled, rng):
        s = random_state(coupled.grid, rng)
        proj = nehari_project(coupled, s)
        for factor in (0.5, 0.9, 1.1, 2.0):
            assert fiber(coupled, s, proj.t0 * factor).g < proj.g_at_t0

    @pytest.mark.parametrize("c", [0.1, 3.0, 40.0])
    def test_ray_invariance(self, coupled, rng, c):
        for _ in range(20):
            s = random_state(coupled.grid, rng)
            a = nehari_project(coupled, s).projected
            b = nehari_project(coupled, s.scale(c)).projected
            scale = float(np.max(np.abs(a.u.values)))
            assert np.allclose(a.u.values, b.u.values, rtol=1e-8, atol=1e-8 * scale)
            assert np.allclose(a.v.values, b.v.values, rtol=1e-8, atol=1e-8 * scale)

    def test_scaled_terms_match_fields(self, coupled, rng):
        s = random_state(coupled.grid, rng)
        proj = nehari_project(coupled, s)
        direct = ray_terms(coupled, proj.projected)
        scaled = scale_terms(coupled, ray_terms(coupled, s), proj.t0)
        for name in ("norm_u", "norm_v", "coupling", "power_p", "power_q"):
            assert getattr(scaled, name) == pytest.approx(getattr(direct, name), rel=1e-10)

    def test_no_power_term(self, decoupled):
        spec = decoupled.with_mu(0.0)
        grid = spec.grid
        s = StatePair(grid.constant(1.0), grid.zeros())
        with pytest.raises(ProjectionFailure):
            nehari_project(spec, s)

    def test_transversality_is_negative(self, rng):
        for spec in _presets():
            proj = nehari_project(spec, random_state(spec.grid, rng))
            assert nehari_transversality(spec, proj.projected) < 0


class TestBounds:
    def test_coercivity(self, coupled, rng):
        for _ in range(100):
            s = random_state(coupled.grid, rng)
            signed = StatePair(s.u, -s.v)
            for state in (s, signed):
                terms = ray_terms(coupled, state)
                assert coercivity_gap(coupled, state) >= -1e-10 * terms.state_norm_sq

    def test_manifold_stays_away_from_origin(self, rng):
        for spec in _presets():
            radius = nehari_radius_bound(spec)
            assert radius > 0
            for _ in range(50):
                proj = nehari_project(spec, random_state(spec.grid, rng).scale(1e-3))
                norm = math.sqrt(proj.terms.state_norm_sq)
                assert norm >= radius
                assert norm > 1e-3

    def test_radius_bound_needs_positive_potential(self):
        assert nehari_radius_bound(build_problem(n=8, V1="0")) == 0.0

    def test_energy_controls_norm(self, rng):
        for spec in _presets():
            proj = nehari_project(spec, random_state(spec.grid, rng))
            bound = nehari_energy_norm_bound(spec, proj.g_at_t0)
            assert proj.terms.state_norm_sq <= bound * (1 + 1e-10)

    def test_grid_mismatch(self, decoupled):
        other = Grid(decoupled.grid.n + 2, decoupled.grid.box_length)
        with pytest.raises(GridMismatchError):
            energy(decoupled, StatePair.zeros(other))
