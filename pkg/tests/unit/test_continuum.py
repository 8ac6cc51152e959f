"""Tests for continuum formulas, Möbius covariance and the boundary operator."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fkcorr.continuum import (
    CorrelationFormula,
    MobiusMap,
    bpz_operator,
    bpz_reading_comparison,
    bpz_residual,
    cauchy_riemann_residual,
    conformal_radius,
    covariance_sweep,
    eval_boundary_R,
    eval_bulk_boundary,
    eval_bulk_P3,
    eval_free_pfaffian,
    eval_mixed_R,
    eval_mixed_Z,
    eval_observable_F,
    magnetization_constant,
    magnetization_g,
    mobius_covariance_residual,
)
from fkcorr.core.exceptions import (
    CapacityError,
    ConditioningError,
    DomainError,
    FormulaError,
    OrderingError,
    SingularInputError,
)


GLAISHER = 1.2824271291006226


class TestClosedForms:
    """Point values of the correlation formulas."""

    def test_mixed_one_spin(self) -> None:
        assert eval_mixed_R(1, [0.0, 1.0, 2.0]) == pytest.approx(1 / math.sqrt(2.0), abs=1e-14)

    def test_mixed_two_spins(self) -> None:
        assert eval_mixed_R(2, [0.0, 1.0, 2.0, 3.0]) == pytest.approx(7 / math.sqrt(12.0), abs=1e-14)

    def test_mixed_three_spins_is_positive(self) -> None:
        assert eval_mixed_R(3, [0.0, 1.0, 2.0, 3.5, 5.0]) > 0

    def test_mixed_Z_factor(self) -> None:
        """The change points add ``(x_b - x_a)^(-1/8)``."""
        xs = [0.0, 1.0, 2.0, 4.0]
        assert eval_mixed_Z(2, xs) == pytest.approx(eval_mixed_R(2, xs) * 2.0**-0.125)

    def test_free_pfaffian(self) -> None:
        assert eval_free_pfaffian([0.0, 1.0, 2.0, 3.0]) == pytest.approx(13 / 12, abs=1e-14)

    def test_free_pair(self) -> None:
        """Two points reduce to the two-point function."""
        assert eval_free_pfaffian([0.5, 2.5]) == pytest.approx(eval_boundary_R(2, [0.5, 2.5]))

    def test_bulk_three_points(self) -> None:
        assert eval_bulk_P3(0, 1, 2) == pytest.approx(2.0**-0.125)

    def test_boundary_three_points(self) -> None:
        assert eval_boundary_R(3, [0.0, 1.0, 3.0]) == pytest.approx(6.0**-0.5)

    def test_bulk_boundary(self) -> None:
        assert eval_bulk_boundary(4j, 0.0) == pytest.approx(4.0**-0.625)

    def test_magnetization_constant(self) -> None:
        expected = 2 ** (5 / 12) * math.exp(-1 / 8) * GLAISHER**1.5
        assert magnetization_constant() == pytest.approx(expected, rel=1e-12)
        assert magnetization_constant() == pytest.approx(1.710770, abs=1e-6)

    def test_conformal_radius(self) -> None:
        assert conformal_radius("disk", 0.5) == pytest.approx(0.75)
        assert conformal_radius("H", 3 + 2j) == pytest.approx(4.0)
        assert magnetization_g("disk", 0) == pytest.approx(magnetization_constant())


class TestInputErrors:
    """Tests for rejected inputs."""

    def test_unordered(self) -> None:
        with pytest.raises(OrderingError):
            eval_mixed_R(1, [0.0, 2.0, 1.0])

    def test_mixed_cap(self) -> None:
        with pytest.raises(CapacityError):
            eval_mixed_R(11, list(range(13)))

    def test_boundary_arity(self) -> None:
        with pytest.raises(FormulaError):
            eval_boundary_R(4, [0.0, 1.0, 2.0, 3.0])

    def test_odd_pfaffian(self) -> None:
        with pytest.raises(FormulaError):
            eval_free_pfaffian([0.0, 1.0, 2.0])

    def test_coincident_bulk_points(self) -> None:
        with pytest.raises(SingularInputError):
            eval_bulk_P3(1j, 1j, 2j)

    @pytest.mark.parametrize(("tag", "z"), [("H", -1j), ("disk", 1.0), ("H", 0.0)])
    def test_outside_domain(self, tag: str, z: complex) -> None:
        with pytest.raises(DomainError):
            conformal_radius(tag, z)

    def test_unknown_tag(self) -> None:
        with pytest.raises(FormulaError):
            conformal_radius("annulus", 0.5j)

    def test_observable_singularity(self) -> None:
        with pytest.raises(DomainError):
            eval_observable_F(1.0, 0.0, 1.0, 2.0)

    def test_unknown_family(self) -> None:
        with pytest.raises(FormulaError, match="unknown formula family"):
            CorrelationFormula.build("boundary_R9", [0.0, 1.0])


class TestMobius:
    """Tests for real Möbius maps and covariance."""

    def test_rejects_orientation_reversal(self) -> None:
        with pytest.raises(FormulaError):
            MobiusMap(0.0, 1.0, 1.0, 0.0)

    def test_inverse(self) -> None:
        mobius = MobiusMap(2.0, 1.0, 0.5, 3.0)
        roundtrip = mobius.compose(mobius.inverse())
        assert roundtrip(0.3 + 0.4j) == pytest.approx(0.3 + 0.4j)

    def test_pole(self) -> None:
        mobius = MobiusMap(1.0, 0.0, 1.0, 2.0)
        assert mobius.pole == pytest.approx(-2.0)
        with pytest.raises(SingularInputError):
            mobius(-2.0)
        formula = CorrelationFormula.build("boundary_R2", [-2.0, 1.0])
        with pytest.raises(SingularInputError):
            mobius_covariance_residual(formula, mobius)

    def test_random_maps_preserve_order(self) -> None:
        rng = np.random.default_rng(5)
        points = [0.0, 1.0, 2.5]
        for _ in range(20):
            mobius = MobiusMap.random_order_preserving(rng, points)
            images = [mobius(x).real for x in points]
            assert images == sorted(images)

    @pytest.mark.parametrize(
        ("family", "points"),
        [
            ("bulk_P3", (0.3 + 1.0j, -0.5 + 0.7j, 1.1 + 2.0j)),
            ("boundary_R2", (0.0, 1.0)),
            ("boundary_R3", (0.0, 1.0, 3.0)),
            ("mixed_RN", (0.0, 1.0, 2.0, 3.0)),
            ("mixed_ZN", (0.0, 1.0, 2.0, 3.0)),
            ("free_pfaffian", (0.0, 0.5, 1.7, 2.0, 3.1, 4.0)),
            ("bulk_boundary_Rz", (0.4 + 1.3j, 0.0)),
            ("magnetization_g", (0.2 + 0.8j,)),
        ],
    )
    def test_covariance(self, family: str, points: tuple[complex, ...]) -> None:
        formula = CorrelationFormula.build(family, points)
        assert covariance_sweep(formula, n_maps=50, seed=2) < 1e-10

    def test_strongly_compressing_map(self) -> None:
        """Six points squeezed to small gaps keep the Pfaffian covariant."""
        mobius = MobiusMap(-0.633, -2.319, 1.489, 4.098)
        formula = CorrelationFormula.build("free_pfaffian", (0.0, 0.5, 1.7, 2.0, 3.1, 4.0))
        gaps = np.diff([mobius(x).real for x in formula.points])
        assert gaps.min() < 0.05
        assert mobius_covariance_residual(formula, mobius) < 1e-10

    def test_free_pfaffian_of_clustered_points(self) -> None:
        """Two tight pairs far apart factor into two-point functions."""
        xs = [0.0, 1e-3, 10.0, 10.0 + 2e-3]
        expected = 1 / 1e-3 * 1 / 2e-3 - 1 / 10.0 * 1 / (10.0 + 2e-3 - 1e-3) + 1 / (10.0 + 2e-3) * 1 / (10.0 - 1e-3)
        assert eval_free_pfaffian(xs) == pytest.approx(expected, rel=1e-13)

    def test_wrong_weight_breaks_covariance(self) -> None:
        """Scaling by 2 leaves the mismatch ``|1/2 - 2^(-3/4)|``."""
        formula = CorrelationFormula("boundary_R2", (0.0, 1.0), weights=(0.5, 0.25))
        residual = mobius_covariance_residual(formula, MobiusMap.scaling(2.0))
        assert residual == pytest.approx(abs(0.5 - 2.0**-0.75), rel=1e-12)
        assert residual > 1e-3

    def test_observable_has_no_rule(self) -> None:
        formula = CorrelationFormula.build("observable_F", [0.5 + 1j, 0.0, 1.0, 2.0])
        with pytest.raises(FormulaError):
            covariance_sweep(formula, n_maps=1)


class TestBoundaryOperator:
    """Tests for the second-order boundary differential operator."""

    def test_constant_function(self) -> None:
        """Only the weight terms survive on a constant."""
        value = bpz_operator(lambda xs: 1.0, [0.0, 1.0, 3.0], [0.5, 0.5, 0.5], 0)
        assert value == pytest.approx(-(1.0 + 1.0 / 9.0), abs=1e-9)

    def test_two_point_function(self) -> None:
        formula = CorrelationFormula.build("boundary_R2", [0.0, 1.3])
        assert bpz_residual(formula, 0) < 1e-6
        assert bpz_residual(formula, 1) < 1e-6

    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    def test_free_pfaffian(self, j: int) -> None:
        formula = CorrelationFormula.build("free_pfaffian", [0.0, 1.0, 2.5, 4.0])
        assert bpz_residual(formula, j) < 1e-5

    @pytest.mark.parametrize("xs", [[0.0, 1.0, 2.0], [0.0, 1.0, 2.5, 4.0], [0.0, 0.7, 1.9, 3.0, 4.5]])
    def test_mixed_with_change_weights(self, xs: list[float]) -> None:
        formula = CorrelationFormula.build("mixed_ZN", xs)
        for j in range(len(xs) - 2):
            assert bpz_residual(formula, j) < 1e-5

    def test_three_boundary_spins_fail(self) -> None:
        """The product form is covariant but not annihilated."""
        formula = CorrelationFormula.build("boundary_R3", [0.0, 1.0, 3.0])
        assert bpz_residual(formula, 0) > 1e-3

    def test_richardson_tightens(self) -> None:
        formula = CorrelationFormula.build("free_pfaffian", [0.0, 1.0, 2.5, 4.0])
        assert bpz_residual(formula, 1, h=1e-3, richardson=True) < 1e-6

    def test_change_point_is_not_a_spin(self) -> None:
        formula = CorrelationFormula.build("mixed_ZN", [0.0, 1.0, 2.0])
        with pytest.raises(FormulaError):
            bpz_residual(formula, 2)

    def test_bulk_family(self) -> None:
        formula = CorrelationFormula.build("bulk_P3", [1j, 2j, 3j])
        with pytest.raises(FormulaError):
            bpz_residual(formula, 0)

    @pytest.mark.parametrize("h", [1e-6, 1e-2])
    def test_step_range(self, h: float) -> None:
        formula = CorrelationFormula.build("boundary_R2", [0.0, 1.0])
        with pytest.raises(ConditioningError):
            bpz_residual(formula, 0, h=h)

    def test_points_too_close(self) -> None:
        formula = CorrelationFormula.build("boundary_R2", [0.0, 0.005])
        with pytest.raises(ConditioningError):
            bpz_residual(formula, 0)

    def test_reading_table(self) -> None:
        rows = bpz_reading_comparison([0.0, 1.0, 2.0, 3.0])
        assert len(rows) == 4
        assert {row["family"] for row in rows} == {"mixed_RN", "mixed_ZN"}
        zn = [row for row in rows if row["family"] == "mixed_ZN"]
        assert all(row["residual_dk"] < 1e-5 for row in zn)
        assert all(row["annihilated_by"] in {"k", "both"} for row in zn)

    def test_two_spin_weight_zero_rows(self) -> None:
        """Both spins of the two-spin weight-zero form carry a verdict under each reading."""
        rows = bpz_reading_comparison([0.0, 1.0, 2.0, 3.0], tol=1e-5)
        rn = [row for row in rows if row["family"] == "mixed_RN"]
        assert [(row["N"], row["j"]) for row in rn] == [(2, 1), (2, 2)]
        for row in rn:
            dk, dj = float(row["residual_dk"]), float(row["residual_dj"])
            assert np.isfinite(dk) and np.isfinite(dj)
            readings = {name for name, r in (("k", dk), ("j", dj)) if r <= 1e-5}
            expected = {frozenset(): "none", frozenset({"k"}): "k", frozenset({"j"}): "j"}
            assert row["annihilated_by"] == expected.get(frozenset(readings), "both")


class TestObservable:
    """Tests for the continuum fermionic observable."""

    @pytest.mark.parametrize("z", [0.5 + 1.0j, -1.0 + 0.3j, 3.0 + 2.0j])
    def test_holomorphic(self, z: complex) -> None:
        def f(w: complex) -> complex:
            return eval_observable_F(w, 0.0, 1.0, 2.0)

        assert cauchy_riemann_residual(f, z) < 1e-6

    def test_branch_is_principal(self) -> None:
        value = eval_observable_F(1.5 + 1e-9j, 0.0, 1.0, 2.0)
        assert abs(value) > 0
