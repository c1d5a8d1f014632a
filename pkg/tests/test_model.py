"""
Tests for Kirchhoff families, potentials, problem instances and the
hypothesis validators.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from conftest import build_problem
from kirchhoff_nehari.errors import (
    InvalidFamilyError,
    InvalidProblemError,
    UnsupportedCheckError,
)
from kirchhoff_nehari.field_grid import Grid
from kirchhoff_nehari.model import (
    Potential,
    PotentialSet,
    ProblemSpec,
    make_family,
    validate_M,
    validate_V,
    validate_V45,
)


def _potentials(V1="1", V2="1", lam="0", delta=0.5, periods=(3, 3, 3)):
    return PotentialSet(
        Potential.from_expression(V1, "V1"),
        Potential.from_expression(V2, "V2"),
        Potential.from_expression(lam, "lambda"),
        delta,
        periods,
    )


class TestFamilies:
    def test_quadratic(self):
        spec = make_family("quadratic", {"b": 0.2})
        assert spec.at(3.0) == pytest.approx((0.9, 0.6, 0.2))

    def test_log_integral(self):
        spec = make_family("log_integral")
        value, deriv, deriv2 = spec.at(1.0)
        assert value == pytest.approx(2 * np.log(2) - 1)
        assert deriv == pytest.approx(np.log(2))
        assert deriv2 == pytest.approx(0.5)

    def test_custom_expression_estimates_linear_bound(self):
        spec = make_family("custom", {"expr": "s^2/20"})
        assert spec.linear_bound == pytest.approx(0.1)
        assert spec.at(2.0) == pytest.approx((0.2, 0.2, 0.1))

    def test_custom_callables(self):
        spec = make_family(
            "custom",
            {"value": lambda s: s ** 2, "deriv": lambda s: 2 * s, "deriv2": lambda s: 0 * s + 2,
             "b": 2.0},
        )
        assert spec.linear_bound == 2.0
        assert "value" not in spec.describe()["params"]

    @pytest.mark.parametrize(
        "tag, params",
        [
            ("cubic", {}),
            ("quadratic", {}),
            ("quadratic", {"b": -1.0}),
            ("quadratic_plus_powers", {"b": 1.0, "a": [1.0], "gamma": [1.5]}),
            ("quadratic_plus_powers", {"b": 1.0, "a": [1.0, 2.0], "gamma": [0.5]}),
            ("custom", {}),
        ],
    )
    def test_invalid(self, tag, params):
        with pytest.raises(InvalidFamilyError):
            make_family(tag, params)


class TestValidateM:
    @pytest.mark.parametrize("b", [0.01, 0.05, 1.0])
    def test_quadratic_passes(self, b):
        spec = make_family("quadratic", {"b": b})
        report = validate_M(spec, spec)
        assert report.passed, report.format_table()

    def test_log_integral_passes(self):
        report = validate_M(make_family("log_integral"), make_family("quadratic", {"b": 0.1}))
        assert report.passed, report.format_table()

    def test_power_family_fails_near_zero(self):
        powers = make_family("quadratic_plus_powers", {"b": 1.0, "a": [0.5], "gamma": [0.5]})
        report = validate_M(powers, make_family("quadratic", {"b": 1.0}))
        assert not report.passed
        m1 = report.get("M1")
        assert not m1.passed
        assert m1.counterexample["function"] == "alpha"
        assert m1.counterexample["s"] < 1.0
        assert not report.get("M3").passed

    def test_inconsistent_derivative_is_flagged(self):
        wrong = make_family(
            "custom",
            {"value": lambda s: 0.5 * s ** 2, "deriv": lambda s: 1.1 * s,
             "deriv2": lambda s: 0 * s + 1.1, "b": 1.1},
        )
        report = validate_M(wrong, wrong)
        assert not report.get("C2").passed

    def test_table_marks(self):
        powers = make_family("quadratic_plus_powers", {"b": 1.0, "a": [0.5], "gamma": [0.5]})
        table = validate_M(powers, powers).format_table()
        assert "❌ M1" in table
        assert "first failure" in table
        assert "✅ M2" in table

    def test_needs_samples(self):
        spec = make_family("quadratic", {"b": 1.0})
        with pytest.raises(ValueError):
            validate_M(spec, spec, samples=1)


class TestValidateV:
    grid = Grid(12, 6.0)

    def test_constant_potentials_pass(self):
        report = validate_V(_potentials(lam="0.25"), 1.0, 1.0, self.grid)
        assert report.passed, report.format_table()
        assert report.get("V3'").passed
        assert report.get("V2-inf").constant == pytest.approx(1.0, rel=1e-10)

    def test_coupling_above_delta_fails(self):
        report = validate_V(_potentials(lam="0.8"), 1.0, 1.0, self.grid)
        check = report.get("V3")
        assert not check.passed
        assert check.counterexample["lambda"] == pytest.approx(0.8)
        assert len(check.counterexample["x"]) == 3

    def test_delta_out_of_range_fails(self):
        report = validate_V(_potentials(lam="0.25", delta=1.5), 1.0, 1.0, self.grid)
        check = report.get("V3")
        assert not check.passed
        assert check.counterexample["needed_delta"] == pytest.approx(0.25)

    def test_zero_potential_has_no_spectral_floor(self):
        report = validate_V(_potentials(V1="0"), 1.0, 1.0, self.grid)
        assert not report.get("V2-inf").passed
        assert report.get("V2").passed

    def test_negative_potential(self):
        report = validate_V(_potentials(V2="x"), 1.0, 1.0, self.grid)
        assert not report.get("V2").passed

    def test_aperiodic_potential(self):
        report = validate_V(_potentials(V1="1 + x^2"), 1.0, 1.0, self.grid)
        assert not report.get("V1").passed

    def test_period_not_on_grid(self):
        report = validate_V(_potentials(periods=(2.5, 3, 3)), 1.0, 1.0, self.grid)
        assert not report.get("V1").passed

    def test_sign_changing_coupling_is_informational(self):
        report = validate_V(_potentials(lam="0.2*cos(2*pi*x/3)"), 1.0, 1.0, self.grid)
        assert report.passed
        assert not report.get("V3'").passed
        assert not report.get("V3'").required


class TestValidateV45:
    grid = Grid(12, 6.0)

    def test_radially_monotone_data_pass(self):
        pots = _potentials(
            V1="2 - exp(-(x^2+y^2+z^2))", lam="0.3*exp(-(x^2+y^2+z^2))",
        )
        report = validate_V45(pots, self.grid)
        assert report.passed, report.format_table()
        assert report.get("V5").constant > 0

    def test_growing_coupling_fails(self):
        report = validate_V45(_potentials(lam="0.1*(1 + 0.1*x^2)"), self.grid)
        assert not report.get("V5").passed

    def test_missing_gradient(self):
        pots = PotentialSet(
            Potential("V1", lambda x, y, z: 1.0 + 0 * x),
            Potential.from_expression("1", "V2"),
            Potential.from_expression("0.25", "lambda"),
            0.5,
        )
        with pytest.raises(UnsupportedCheckError):
            validate_V45(pots, self.grid)
        assert validate_V45(pots, self.grid, finite_difference=True).passed


class TestPotentialCache:
    def test_sample_is_cached(self):
        pots = _potentials(V1="1 + 0.1*x^2")
        grid = Grid(8, 6.0)
        assert pots.sample(grid) is pots.sample(grid)
        assert pots.sample(Grid(10, 6.0)) is not pots.sample(grid)

    def test_concurrent_samples_share_one_entry(self):
        pots = _potentials(V1="1 + 0.1*x^2", lam="0.25*exp(-x^2)")
        grid = Grid(10, 6.0)
        with ThreadPoolExecutor(max_workers=8) as pool:
            samples = list(pool.map(lambda _: pots.sample(grid), range(32)))
            radials = list(pool.map(lambda _: pots.radial(grid), range(32)))
        assert all(s is samples[0] for s in samples)
        assert all(r is radials[0] for r in radials)


class TestProblemSpec:
    def test_regimes(self):
        assert build_problem(p=4.5, q=5).regime == "subcritical"
        assert build_problem(p=4.5, q=6).regime == "critical"
        assert build_problem(p=6, q=6).regime == "doubly_critical"

    @pytest.mark.parametrize("p, q", [(3, 4.5), (4, 4.5), (5, 4.5), (4.5, 7)])
    def test_exponent_constraint(self, p, q):
        with pytest.raises(InvalidProblemError, match="4 < p <= q <= 6"):
            build_problem(p=p, q=q)

    def test_delta_below_min_a(self):
        with pytest.raises(InvalidProblemError) as exc:
            build_problem(delta=1.0)
        assert exc.value.field == "delta"

    def test_negative_delta(self):
        with pytest.raises(InvalidProblemError):
            _potentials(delta=-0.1)

    def test_coercivity_and_with_mu(self):
        spec = build_problem(a1=1.0, a2=2.0, delta=0.25)
        assert spec.coercivity == pytest.approx(0.75)
        assert spec.with_mu(3.0).mu == 3.0
        assert spec.mu == 1.0

    def test_rejects_negative_mu(self):
        spec = build_problem()
        with pytest.raises(InvalidProblemError):
            ProblemSpec(spec.a1, spec.a2, spec.alpha, spec.beta, spec.potentials, -1.0,
                        spec.p, spec.q, spec.grid)
