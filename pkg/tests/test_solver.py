"""
Tests for the Nehari descent and the mu sweep.
"""

import json

import numpy as np
import pytest

from conftest import build_problem, random_state
from kirchhoff_nehari import solver
from kirchhoff_nehari.config import load_config
from kirchhoff_nehari.energy import (
    nehari_energy_norm_bound,
    nehari_project,
    nehari_residual,
    ray_terms,
)
from kirchhoff_nehari.errors import (
    InvalidProblemError,
    PreconditionError,
    SolverStall,
    WrongRegimeError,
)
from kirchhoff_nehari.field_grid import StatePair, dump_field, gaussian_bump
from kirchhoff_nehari.solver import (
    Backtrack,
    SolverConfig,
    concentration_share,
    critical_components,
    doubling_ladder,
    initial_state,
    is_concentrating,
    mu_sweep,
    precondition,
    reference_ray_level,
    sign_normalize,
    solve_ground_state,
    translate_and_reproject,
)


class TestSolverConfig:
    @pytest.mark.parametrize(
        "kwargs, field",
        [
            ({"max_iters": 0}, "solver.max_iters"),
            ({"grad_tol": 0.0}, "solver.grad_tol"),
            ({"init": "noise"}, "solver.init"),
            ({"init": "file"}, "solver.init_files"),
            ({"freeze": "w"}, "solver.freeze"),
            ({"concentration_window": 1}, "solver.concentration_window"),
            ({"backtrack": Backtrack(shrink=1.5)}, "solver.backtrack"),
        ],
    )
    def test_rejects_invalid(self, kwargs, field):
        with pytest.raises(InvalidProblemError) as exc:
            SolverConfig(**kwargs)
        assert exc.value.field == field

    def test_to_dict_is_json(self):
        data = SolverConfig(init_files=("u.bin", "v.bin"), init="file").to_dict()
        assert json.loads(json.dumps(data))["init_files"] == ["u.bin", "v.bin"]
        assert data["backtrack"]["armijo"] == 1e-4


class TestBuildingBlocks:
    def test_preconditioner_dual_norm(self, coupled, rng):
        grad = random_state(coupled.grid, rng)
        direction, dual = precondition(coupled, grad)
        assert dual > 0
        frozen, frozen_dual = precondition(coupled, grad, freeze="u")
        assert not np.any(frozen.u.values)
        assert frozen.v.allclose(direction.v)
        assert 0 < frozen_dual < dual

    def test_critical_components(self, decoupled, doubly_critical):
        assert critical_components(decoupled) == ()
        assert critical_components(build_problem(n=8, q=6)) == ("v",)
        assert critical_components(doubly_critical) == ("u", "v")

    def test_concentration_share_counts_critical_components(self):
        spec = build_problem(n=10, q=6, lam="0.25")
        grid = spec.grid
        spike = np.zeros(grid.shape)
        spike[3, 4, 5] = 1.0
        only_u = StatePair.from_arrays(grid, spike, np.zeros(grid.shape))
        assert concentration_share(spec, only_u) == 0.0
        only_v = StatePair.from_arrays(grid, np.zeros(grid.shape), spike)
        assert concentration_share(spec, only_v) == 1.0
        spiky_u = StatePair.from_arrays(grid, spike, np.ones(grid.shape))
        assert concentration_share(spec, spiky_u) == pytest.approx(1.0 / grid.n ** 3)

    def test_concentration_share_without_critical_exponent(self, decoupled):
        grid = decoupled.grid
        spike = np.zeros(grid.shape)
        spike[0, 0, 0] = 1.0
        assert concentration_share(decoupled, StatePair.from_arrays(grid, spike, spike)) == 0.0

    def test_concentration_share_doubly_critical(self, doubly_critical):
        grid = doubly_critical.grid
        spike = np.zeros(grid.shape)
        spike[1, 2, 3] = 1.0
        s = StatePair.from_arrays(grid, spike, np.zeros(grid.shape))
        assert concentration_share(doubly_critical, s) == 1.0
        flat = StatePair(grid.constant(1.0), grid.constant(1.0))
        assert concentration_share(doubly_critical, flat) == pytest.approx(1.0 / grid.n ** 3)

    @pytest.mark.parametrize(
        "shares, steps, expected",
        [
            ([0.3, 0.4, 0.5, 0.6], [8.0, 4.0, 2.0, 1.0], True),
            ([0.3, 0.3, 0.3], [8.0, 8.0, 0.5], True),
            ([0.3, 0.4, 0.5, 0.6], [1.0, 2.0, 4.0, 8.0], False),
            ([0.3, 0.4, 0.5, 0.6], [8.0, 8.0, 8.0, 8.0], False),
            ([0.3, 0.5, 0.4, 0.6], [8.0, 4.0, 2.0, 1.0], False),
            ([0.2, 0.4, 0.5, 0.6], [8.0, 4.0, 2.0, 1.0], False),
            ([0.9], [1.0], False),
        ],
    )
    def test_is_concentrating(self, shares, steps, expected):
        assert is_concentrating(shares, steps, 0.25) is expected

    def test_initial_state_kinds(self, decoupled):
        bump = initial_state(decoupled, SolverConfig())
        assert bump.u.allclose(gaussian_bump(decoupled.grid))
        noisy = initial_state(decoupled, SolverConfig(init="random_smooth", seed=3))
        again = initial_state(decoupled, SolverConfig(init="random_smooth", seed=3))
        assert np.array_equal(noisy.u.values, again.u.values)
        frozen = initial_state(decoupled, SolverConfig(freeze="v"))
        assert not np.any(frozen.v.values)

    def test_initial_state_from_files(self, decoupled, tmp_path):
        grid = decoupled.grid
        u = dump_field(gaussian_bump(grid, amplitude=2.0), tmp_path / "u.bin", "u")
        v = dump_field(gaussian_bump(grid), tmp_path / "v.bin", "v")
        s = initial_state(decoupled, SolverConfig(init="file", init_files=(str(u), str(v))))
        assert s.u.max() == pytest.approx(2.0)

    def test_sign_normalize(self):
        spec = build_problem(n=10, lam="0.25")
        bump = gaussian_bump(spec.grid)
        signed = StatePair(bump * -1.0, bump)
        normalized = sign_normalize(spec, signed)
        assert normalized.is_positive()
        before = nehari_project(spec, signed).g_at_t0
        after = nehari_project(spec, normalized).g_at_t0
        assert after <= before + 1e-10 * abs(before)

    def test_sign_normalize_rejects_state_off_manifold(self):
        spec = build_problem(n=10, lam="0.25")
        bump = gaussian_bump(spec.grid)
        tiny = StatePair(bump * -1.0, bump).scale(1e-3)
        with pytest.raises(PreconditionError):
            sign_normalize(spec, tiny)

    def test_doubling_ladder(self):
        assert doubling_ladder(1.0, 5) == [1.0, 2.0, 4.0, 8.0, 16.0]


class TestDescent:
    def test_small_subcritical_run_converges(self):
        spec = build_problem(n=10, L=6.0)
        cfg = SolverConfig(max_iters=2000, grad_tol=1e-5)
        report = solve_ground_state(spec, cfg)
        assert report.converged
        assert report.status == "converged"
        assert report.positive
        assert report.nehari_residual <= 1e-8
        assert report.c_N_estimate <= report.initial_level
        assert report.regime == "subcritical"

    def test_energy_trace_is_monotone(self, coupled):
        report = solve_ground_state(coupled, SolverConfig(max_iters=60, grad_tol=1e-12))
        energies = np.array([e.energy for e in report.energy_trace])
        slack = 1e-12 * np.maximum(1.0, np.abs(energies[:-1]))
        assert np.all(np.diff(energies) <= slack)
        assert report.status == "max_iters"
        assert not report.converged
        assert report.iterations == 60

    def test_trace_records_bounded_norms(self, coupled):
        report = solve_ground_state(coupled, SolverConfig(max_iters=20, grad_tol=1e-12))
        for entry in report.energy_trace:
            bound = nehari_energy_norm_bound(coupled, entry.energy)
            assert entry.state_norm ** 2 <= bound * (1 + 1e-9)

    def test_explicit_initial_state(self, decoupled, rng):
        start = random_state(decoupled.grid, rng)
        report = solve_ground_state(decoupled, SolverConfig(max_iters=5), initial=start)
        assert len(report.energy_trace) == 6

    def test_frozen_component_stays_zero(self, decoupled):
        report = solve_ground_state(decoupled, SolverConfig(max_iters=30, freeze="u"))
        assert not np.any(report.state.u.values)
        assert report.state.v.max() > 0

    def test_report_to_dict_excludes_fields(self, decoupled):
        report = solve_ground_state(decoupled, SolverConfig(max_iters=3))
        data = report.to_dict()
        assert "state" not in data
        assert data["status"] == "max_iters"
        assert data["energy"]["total"] == pytest.approx(report.c_N_estimate)
        assert data["pohozaev"]["form"] == "extended"

    def test_concentrated_stationary_state_raises_stall(self, doubly_critical):
        cfg = SolverConfig(max_iters=10, grad_tol=1e3, concentration_limit=1e-6)
        with pytest.raises(SolverStall) as exc:
            solve_ground_state(doubly_critical, cfg)
        report = exc.value.report
        assert report.status == "concentrated"
        assert not report.converged
        assert report.energy_trace
        assert any("peak cell" in note for note in report.notes)

    def test_growing_share_with_shrinking_step_stalls(self, doubly_critical, monkeypatch):
        monkeypatch.setattr(solver, "is_concentrating", lambda shares, steps, limit: True)
        cfg = SolverConfig(max_iters=50, grad_tol=1e-12, concentration_window=2)
        with pytest.raises(SolverStall) as exc:
            solve_ground_state(doubly_critical, cfg)
        report = exc.value.report
        assert report.status == "concentrated"
        assert report.iterations == 2
        assert any("while the step fell" in note for note in report.notes)

    def test_subcritical_component_is_not_watched(self):
        spec = build_problem(n=10, L=6.0, q=6, lam="0.25")
        report = solve_ground_state(spec, SolverConfig(max_iters=20, freeze="v"))
        assert report.status == "max_iters"
        assert report.state.u.max() > 0

    def test_early_critical_iterations_do_not_stall(self):
        spec = build_problem(n=10, L=6.0, q=6, lam="0.25")
        report = solve_ground_state(spec, SolverConfig(max_iters=3, grad_tol=1e-12))
        assert report.status == "max_iters"
        assert report.iterations == 3

    def test_translation_invariance(self):
        spec = build_problem(n=10, L=6.0)
        report = solve_ground_state(spec, SolverConfig(max_iters=200, grad_tol=1e-6))
        moved = translate_and_reproject(spec, report.state, (2, 3, -1))
        assert moved == pytest.approx(report.c_N_estimate, rel=1e-10)


class TestMuSweep:
    def test_needs_critical_exponent(self, decoupled):
        with pytest.raises(WrongRegimeError):
            mu_sweep(decoupled, [1.0, 2.0])

    @pytest.mark.parametrize("mus", [[], [2.0, 1.0], [0.0, 1.0]])
    def test_rejects_bad_mu_lists(self, mus):
        with pytest.raises(InvalidProblemError):
            mu_sweep(build_problem(n=8, q=6, lam="0.25"), mus)

    def test_chain_is_monotone(self):
        spec = build_problem(n=8, q=6, lam="0.25")
        cfg = SolverConfig(max_iters=40, concentration_limit=1.0)
        sweep = mu_sweep(spec, [1.0, 2.0, 4.0], cfg)
        values = [row.c_N for row in sweep.rows]
        assert len(values) == 3
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-10 * abs(a)
        assert len({row.bound for row in sweep.rows}) == 1
        levels = [row.ray_level for row in sweep.rows]
        assert levels[0] > levels[1] > levels[2]
        assert set(sweep.reports) == {1.0, 2.0, 4.0}
        assert sweep.rows[0].start == "cold"
        assert {row.start for row in sweep.rows} <= {"cold", "warm"}

    def test_rows_never_exceed_cold_start(self):
        spec = build_problem(n=8, q=6, lam="0.25")
        cfg = SolverConfig(max_iters=40, concentration_limit=1.0)
        sweep = mu_sweep(spec, [1.0, 2.0, 4.0], cfg)
        for row in sweep.rows:
            cold = solve_ground_state(spec.with_mu(row.mu), cfg).c_N_estimate
            assert row.c_N <= cold + 1e-12 * abs(cold)

    def test_parallel_rows_follow_mu_order(self):
        spec = build_problem(n=8, q=6, lam="0.25")
        sweep = mu_sweep(spec, [1.0, 2.0], SolverConfig(max_iters=10), workers=2)
        assert [row.mu for row in sweep.rows] == [1.0, 2.0]
        assert {row.start for row in sweep.rows} == {"cold"}

    def test_stop_when_below(self):
        spec = build_problem(n=8, q=6, lam="0.25")
        sweep = mu_sweep(spec, [1.0, 2.0, 4.0], SolverConfig(max_iters=5), S=1e6,
                         stop_when_below=True)
        assert len(sweep.rows) == 1
        assert sweep.mu0 == 1.0
        assert sweep.to_dict()["mu0"] == 1.0

    def test_reference_level_decreases_with_mu(self):
        spec = build_problem(n=8, q=6, lam="0.25")
        assert reference_ray_level(spec.with_mu(4.0)) < reference_ray_level(spec)


@pytest.mark.slow
class TestDesktopScale:
    def test_decoupling_oracle(self):
        spec = build_problem(n=24, L=8.0)
        cfg = SolverConfig(max_iters=3000, grad_tol=1e-7)
        coupled = solve_ground_state(spec, cfg)
        assert coupled.converged
        assert coupled.state.u.allclose(coupled.state.v, rtol=1e-12)
        only_v = solve_ground_state(spec, SolverConfig(max_iters=3000, grad_tol=1e-7, freeze="u"))
        only_u = solve_ground_state(spec, SolverConfig(max_iters=3000, grad_tol=1e-7, freeze="v"))
        total = only_u.c_N_estimate + only_v.c_N_estimate
        assert coupled.c_N_estimate == pytest.approx(total, rel=1e-4)

    def test_ground_state_on_manifold(self):
        spec = build_problem(n=20, L=8.0, p=5.0, q=5.5, lam="0.25")
        report = solve_ground_state(spec, SolverConfig(max_iters=3000, grad_tol=1e-7))
        assert report.converged
        assert report.positive
        assert nehari_residual(spec, ray_terms(spec, report.state)) <= 1e-8

    def test_critical_sweep_crosses_the_bound(self):
        config = load_config("preset:critical")
        sweep = mu_sweep(config.problem(), doubling_ladder(1.0, 6), config.solver)
        assert len(sweep.rows) == 6
        for row in sweep.rows:
            assert row.converged
            assert row.c_N <= row.ray_level * (1 + 1e-10)
        values = [row.c_N for row in sweep.rows]
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-10 * abs(a)
        assert sweep.rows[-1].below_bound
        assert sweep.mu0 is not None
        assert all(row.below_bound for row in sweep.rows if row.mu >= sweep.mu0)

    def test_grid_refinement_levels_settle(self):
        levels = []
        for n in (16, 24, 32):
            spec = build_problem(n=n, L=8.0, lam="0.25")
            report = solve_ground_state(spec, SolverConfig(max_iters=3000, grad_tol=1e-7))
            assert report.converged
            levels.append(report.c_N_estimate)
        c16, c24, c32 = levels
        assert abs(c32 - c24) < abs(c24 - c16)
