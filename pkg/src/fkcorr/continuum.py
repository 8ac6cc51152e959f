"""Continuum correlation formulas, Möbius maps and numerical residual checks.

Unknown universal constants are taken to be 1; only the magnetization
constant ``C3`` is numeric. All checks are ratios or residuals, so the
constants cancel.
"""

from __future__ import annotations

import cmath
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import mpmath
import numpy as np

from fkcorr.core.exceptions import (
    CapacityError,
    ConditioningError,
    DomainError,
    FormulaError,
    OrderingError,
    SingularInputError,
)
from fkcorr.patterns import _pairing_table
from fkcorr.utils.logging import get_logger


logger = get_logger(__name__)

MAX_MIXED_N = 10
MAX_PFAFFIAN_POINTS = 16
SPIN_WEIGHT = 0.5
BULK_WEIGHT = 0.125
BC_CHANGE_WEIGHT = 0.0
BC_CHANGE_WEIGHT_Z = 1.0 / 16.0

Reading = Literal["k", "j"]


@lru_cache(maxsize=1)
def magnetization_constant() -> float:
    """``C3 = 2^(5/12) exp(-3/2 zeta'(-1))``."""
    with mpmath.workdps(30):
        value = mpmath.power(2, mpmath.mpf(5) / 12) * mpmath.exp(-1.5 * mpmath.zeta(-1, derivative=1))
        return float(value)


def _increasing(xs: Sequence[float]) -> list[float]:
    values = [float(x) for x in xs]
    for a, b in zip(values, values[1:]):
        if not a < b:
            msg = f"points must be strictly increasing, got {values}"
            raise OrderingError(msg)
    return values


def eval_bulk_P3(z1: complex, z2: complex, z3: complex) -> float:
    """``prod_{j<k} |z_j - z_k|^(-1/8)``."""
    zs = [complex(z1), complex(z2), complex(z3)]
    product = 1.0
    for j in range(3):
        for k in range(j + 1, 3):
            d = abs(zs[j] - zs[k])
            if d == 0:
                msg = f"coincident bulk points {zs[j]}"
                raise SingularInputError(msg)
            product *= d
    return float(product**-0.125)


def eval_boundary_R(n: int, xs: Sequence[float]) -> float:
    """Boundary spin correlations: ``|x1-x2|^-1`` or ``prod |x_j-x_k|^(-1/2)``."""
    if n not in (2, 3) or len(xs) != n:
        msg = f"boundary R is defined for 2 or 3 points, got n={n} with {len(xs)} points"
        raise FormulaError(msg)
    values = _increasing(xs)
    if n == 2:
        return 1.0 / (values[1] - values[0])
    product = (values[1] - values[0]) * (values[2] - values[0]) * (values[2] - values[1])
    return float(product**-0.5)


def eval_bulk_boundary(z: complex, x: float) -> float:
    """``Im(z)^(3/8) / |z - x|`` for ``z`` in the upper half-plane."""
    z = complex(z)
    if z.imag <= 0:
        msg = f"bulk point must lie in the upper half-plane, got {z}"
        raise DomainError(msg)
    return float(z.imag**0.375 / abs(z - float(x)))


def _bracket(xs: Sequence[float], c: int, d: int, a: int, b: int) -> float:
    return ((xs[a] - xs[c]) * (xs[b] - xs[d]) + (xs[a] - xs[d]) * (xs[b] - xs[c])) / (xs[d] - xs[c])


def eval_mixed_R(N: int, xs: Sequence[float]) -> float:
    """Boundary spin correlation with a free/plus arc, ``N`` spins then the two
    boundary-condition change points.

    Raises:
        OrderingError: Points not strictly increasing.
        CapacityError: ``N`` outside ``1..10``.
    """
    if N < 1 or N > MAX_MIXED_N:
        msg = f"mixed correlations supported for 1 <= N <= {MAX_MIXED_N}, got {N}"
        raise CapacityError(msg)
    if len(xs) != N + 2:
        msg = f"expected {N + 2} points for N={N}, got {len(xs)}"
        raise FormulaError(msg)
    x = _increasing(xs)
    a, b = N, N + 1
    prefactor = 1.0
    for k in range(N):
        prefactor /= math.sqrt((x[b] - x[k]) * (x[a] - x[k]))

    if N % 2 == 0:
        table, signs = _pairing_table(N // 2)
        skip = -1
    else:
        # One extra point (index N, the first change point) is paired and skipped.
        table, signs = _pairing_table((N + 1) // 2)
        prefactor *= math.sqrt(x[b] - x[a])
        skip = N
    total = 0.0
    for row, sign in zip(table, signs):
        term = float(sign)
        for c, d in row:
            if skip in (c, d):
                continue
            term *= _bracket(x, int(c), int(d), a, b)
        total += term
    return prefactor * total


def eval_mixed_Z(N: int, xs: Sequence[float]) -> float:
    """``R_N`` times ``(x_{N+2} - x_{N+1})^(-1/8)``; the change points then carry weight 1/16."""
    value = eval_mixed_R(N, xs)
    return value * float((float(xs[N + 1]) - float(xs[N])) ** -0.125)


def _skew_pfaffian_mp(rows: list[list[mpmath.mpf]]) -> mpmath.mpf:
    """Pfaffian by pivoted skew elimination; ``rows`` is overwritten."""
    n = len(rows)
    result = mpmath.mpf(1)
    for k in range(0, n - 1, 2):
        pivot = max(range(k + 1, n), key=lambda j: abs(rows[k][j]))
        if pivot != k + 1:
            rows[k + 1], rows[pivot] = rows[pivot], rows[k + 1]
            for row in rows:
                row[k + 1], row[pivot] = row[pivot], row[k + 1]
            result = -result
        head = rows[k][k + 1]
        if head == 0:
            return mpmath.mpf(0)
        result *= head
        tau = [rows[k][j] / head for j in range(k + 2, n)]
        col = [rows[i][k + 1] for i in range(k + 2, n)]
        for a in range(len(tau)):
            for b in range(len(tau)):
                rows[k + 2 + a][k + 2 + b] += tau[a] * col[b] - col[a] * tau[b]
    return result


def eval_free_pfaffian(xs: Sequence[float]) -> float:
    """``Pf[1/(x_k - x_j)]`` for increasing boundary points.

    Entries and elimination run at 40 digits; the pair sum cancels heavily
    once neighbouring gaps differ by orders of magnitude.
    """
    x = _increasing(xs)
    if len(x) % 2 or len(x) > MAX_PFAFFIAN_POINTS or not x:
        msg = f"free Pfaffian needs an even number of points up to {MAX_PFAFFIAN_POINTS}, got {len(x)}"
        raise FormulaError(msg)
    with mpmath.workdps(40):
        points = [mpmath.mpf(v) for v in x]
        rows = [[mpmath.mpf(0) if j == k else 1 / (points[k] - points[j]) for k in range(len(x))] for j in range(len(x))]
        return float(_skew_pfaffian_mp(rows))


DomainTag = Literal["H", "disk"]


def conformal_radius(domain_tag: str, z: complex) -> float:
    """``1 - |z|^2`` in the unit disk, ``2 Im z`` in the upper half-plane."""
    z = complex(z)
    if domain_tag == "disk":
        if abs(z) >= 1:
            msg = f"{z} is not inside the unit disk"
            raise DomainError(msg)
        return 1.0 - abs(z) ** 2
    if domain_tag == "H":
        if z.imag <= 0:
            msg = f"{z} is not inside the upper half-plane"
            raise DomainError(msg)
        return 2.0 * z.imag
    msg = f"unknown domain tag {domain_tag!r} (expected 'H' or 'disk')"
    raise FormulaError(msg)


def magnetization_g(domain_tag: str, z: complex) -> float:
    """``C3 rad(z)^(-1/8)``."""
    return magnetization_constant() * conformal_radius(domain_tag, z) ** -0.125


def eval_observable_F(z: complex, x1: float, x3: float, x4: float) -> complex:
    """Continuum free-boundary fermionic observable; defined up to a global sign.

    Square roots use the principal branch.
    """
    z = complex(z)
    x1, x3, x4 = _increasing([x1, x3, x4])
    if z in (x1, x3, x4):
        msg = f"observable is singular at {z}"
        raise DomainError(msg)
    prefactor = (x4 - x1) * (x3 - x1) / math.sqrt(x4 - x3) / math.sqrt(math.pi)
    numerator = (1.0 / (x4 - x1) + 1.0 / (x3 - x1)) * (z - x1) - 2.0
    denominator = cmath.sqrt(z - x3) * cmath.sqrt(z - x4) * (z - x1)
    return complex(prefactor * numerator / denominator)


@dataclass(frozen=True)
class MobiusMap:
    """``z -> (a z + b) / (c z + d)`` with real coefficients and ``ad - bc > 0``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        if self.determinant <= 0:
            msg = f"Möbius map must have ad - bc > 0, got {self.determinant}"
            raise FormulaError(msg)

    @property
    def determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def pole(self) -> float | None:
        return None if self.c == 0 else -self.d / self.c

    def _denominator(self, z: complex) -> complex:
        den = self.c * z + self.d
        if abs(den) < 1e-14:
            msg = f"point {z} is at the pole of the map"
            raise SingularInputError(msg)
        return den

    def __call__(self, z: complex) -> complex:
        return (self.a * z + self.b) / self._denominator(z)

    def derivative(self, z: complex) -> complex:
        return self.determinant / self._denominator(z) ** 2

    def compose(self, other: MobiusMap) -> MobiusMap:
        """``self o other``."""
        return MobiusMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> MobiusMap:
        return MobiusMap(self.d, -self.b, -self.c, self.a)

    @classmethod
    def identity(cls) -> MobiusMap:
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def scaling(cls, factor: float) -> MobiusMap:
        return cls(factor, 0.0, 0.0, 1.0)

    @classmethod
    def random_order_preserving(cls, rng: np.random.Generator, points: Sequence[complex]) -> MobiusMap:
        """Random map of H with its pole left of every point's real part, so
        increasing boundary points stay increasing."""
        left = min(complex(p).real for p in points)
        c = float(rng.uniform(0.2, 2.0))
        pole = left - float(rng.uniform(0.5, 3.0))
        d = -c * pole
        a = float(rng.uniform(-2.0, 2.0))
        det = float(rng.uniform(0.5, 2.0))
        b = (a * d - det) / c
        return cls(a, b, c, d)


@dataclass(frozen=True)
class FamilySpec:
    evaluate: Callable[[Sequence[complex]], complex | float]
    weights: Callable[[int], tuple[float, ...]]
    boundary: bool
    covariant: bool = True
    bpz: bool = False


def _real(points: Sequence[complex]) -> list[float]:
    out = []
    for p in points:
        p = complex(p)
        if p.imag != 0:
            msg = f"boundary point {p} is not real"
            raise DomainError(msg)
        out.append(p.real)
    return out


def _mixed_weights(bc_weight: float) -> Callable[[int], tuple[float, ...]]:
    return lambda n: (SPIN_WEIGHT,) * (n - 2) + (bc_weight, bc_weight)


FAMILIES: dict[str, FamilySpec] = {
    "bulk_P3": FamilySpec(
        evaluate=lambda pts: eval_bulk_P3(*pts),
        weights=lambda n: (BULK_WEIGHT,) * n,
        boundary=False,
    ),
    "boundary_R2": FamilySpec(
        evaluate=lambda pts: eval_boundary_R(2, _real(pts)),
        weights=lambda n: (SPIN_WEIGHT,) * n,
        boundary=True,
        bpz=True,
    ),
    "boundary_R3": FamilySpec(
        evaluate=lambda pts: eval_boundary_R(3, _real(pts)),
        weights=lambda n: (SPIN_WEIGHT,) * n,
        boundary=True,
    ),
    "mixed_RN": FamilySpec(
        evaluate=lambda pts: eval_mixed_R(len(pts) - 2, _real(pts)),
        weights=_mixed_weights(BC_CHANGE_WEIGHT),
        boundary=True,
    ),
    "mixed_ZN": FamilySpec(
        evaluate=lambda pts: eval_mixed_Z(len(pts) - 2, _real(pts)),
        weights=_mixed_weights(BC_CHANGE_WEIGHT_Z),
        boundary=True,
        bpz=True,
    ),
    "free_pfaffian": FamilySpec(
        evaluate=lambda pts: eval_free_pfaffian(_real(pts)),
        weights=lambda n: (SPIN_WEIGHT,) * n,
        boundary=True,
        bpz=True,
    ),
    "bulk_boundary_Rz": FamilySpec(
        evaluate=lambda pts: eval_bulk_boundary(pts[0], _real(pts[1:])[0]),
        weights=lambda n: (BULK_WEIGHT, SPIN_WEIGHT),
        boundary=False,
    ),
    "magnetization_g": FamilySpec(
        evaluate=lambda pts: magnetization_g("H", pts[0]),
        weights=lambda n: (BULK_WEIGHT,),
        boundary=False,
    ),
    "observable_F": FamilySpec(
        evaluate=lambda pts: eval_observable_F(pts[0], *_real(pts[1:])),
        weights=lambda n: (0.0,) * n,
        boundary=False,
        covariant=False,
    ),
}


@dataclass(frozen=True)
class CorrelationFormula:
    """A formula family evaluated at fixed points.

    ``weights`` are the scaling weights of the points: 1/2 for boundary spins,
    1/8 for bulk spins, 0 (or 1/16 in ``mixed_ZN``) for boundary-condition
    change points.
    """

    family: str
    points: tuple[complex, ...]
    weights: tuple[float, ...] = field(default=())
    constant_tag: str = "unit"

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            msg = f"unknown formula family {self.family!r}; known: {sorted(FAMILIES)}"
            raise FormulaError(msg)
        if not self.weights:
            object.__setattr__(self, "weights", FAMILIES[self.family].weights(len(self.points)))
        if len(self.weights) != len(self.points):
            msg = f"{len(self.weights)} weights for {len(self.points)} points"
            raise FormulaError(msg)

    @classmethod
    def build(cls, family: str, points: Sequence[complex]) -> CorrelationFormula:
        tag = "C3" if family == "magnetization_g" else "unit"
        return cls(family=family, points=tuple(complex(p) for p in points), constant_tag=tag)

    @property
    def spec(self) -> FamilySpec:
        return FAMILIES[self.family]

    def evaluate(self, points: Sequence[complex] | None = None) -> complex | float:
        return self.spec.evaluate(self.points if points is None else points)

    def with_points(self, points: Sequence[complex]) -> CorrelationFormula:
        return CorrelationFormula(self.family, tuple(complex(p) for p in points), self.weights, self.constant_tag)


def mobius_covariance_residual(formula: CorrelationFormula, mobius: MobiusMap) -> float:
    """``|f(phi(w)) - f(w) prod |phi'(w_j)|^(-Delta_j)| / |f(w)|``.

    Raises:
        SingularInputError: A point sits at the pole of the map.
        FormulaError: The family has no covariance rule.
    """
    if not formula.spec.covariant:
        msg = f"{formula.family} has no covariance rule"
        raise FormulaError(msg)
    base = formula.evaluate()
    mapped = [mobius(p) for p in formula.points]
    if formula.spec.boundary:
        mapped = [complex(m.real, 0.0) for m in mapped]
    factor = 1.0
    for p, delta in zip(formula.points, formula.weights):
        factor *= abs(mobius.derivative(p)) ** -delta
    return float(abs(formula.evaluate(mapped) - base * factor) / abs(base))


def covariance_sweep(
    formula: CorrelationFormula,
    n_maps: int = 100,
    seed: int = 0,
) -> float:
    """Largest covariance residual over random order-preserving maps."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_maps):
        mobius = MobiusMap.random_order_preserving(rng, formula.points)
        worst = max(worst, mobius_covariance_residual(formula, mobius))
    return worst


def _shift(xs: Sequence[float], k: int, h: float) -> list[float]:
    out = list(xs)
    out[k] += h
    return out


def _first(f: Callable[[list[float]], float], xs: list[float], k: int, h: float) -> float:
    return (f(_shift(xs, k, h)) - f(_shift(xs, k, -h))) / (2 * h)


def _second(f: Callable[[list[float]], float], xs: list[float], k: int, h: float) -> float:
    return (f(_shift(xs, k, h)) - 2 * f(xs) + f(_shift(xs, k, -h))) / (h * h)


def _check_step(xs: Sequence[float], h: float) -> None:
    if not 1e-5 <= h <= 1e-3:
        msg = f"finite-difference step must lie in [1e-5, 1e-3], got {h}"
        raise ConditioningError(msg)
    gaps = np.diff(sorted(xs))
    if gaps.size and gaps.min() < 100 * h:
        msg = f"points closer than 100 h = {100 * h}: minimum gap {gaps.min()}"
        raise ConditioningError(msg)


def bpz_terms(
    f: Callable[[list[float]], float],
    xs: Sequence[float],
    weights: Sequence[float],
    j: int,
    h: float = 1e-4,
    reading: Reading = "k",
    richardson: bool = False,
) -> list[float]:
    """Individual terms of ``(3/2) d_j^2 + sum_k [2/(x_k-x_j) d_k - 2 Delta_k/(x_k-x_j)^2]``.

    ``reading="j"`` differentiates in ``x_j`` inside the sum instead of ``x_k``.
    ``j`` is 0-based.
    """
    x = [float(v) for v in xs]
    _check_step(x, h)

    def first(k: int) -> float:
        if not richardson:
            return _first(f, x, k, h)
        coarse, fine = _first(f, x, k, h), _first(f, x, k, h / 2)
        return fine + (fine - coarse) / 3

    def second(k: int) -> float:
        if not richardson:
            return _second(f, x, k, h)
        coarse, fine = _second(f, x, k, h), _second(f, x, k, h / 2)
        return fine + (fine - coarse) / 3

    value = f(x)
    terms = [1.5 * second(j)]
    for k in range(len(x)):
        if k == j:
            continue
        gap = x[k] - x[j]
        terms.append(2.0 / gap * first(k if reading == "k" else j))
        terms.append(-2.0 * weights[k] / gap**2 * value)
    return terms


def bpz_operator(
    f: Callable[[list[float]], float],
    xs: Sequence[float],
    weights: Sequence[float],
    j: int,
    h: float = 1e-4,
    reading: Reading = "k",
) -> float:
    """Raw value of the second-order operator applied to ``f`` at ``xs``."""
    return float(sum(bpz_terms(f, xs, weights, j, h, reading)))


def bpz_residual(
    formula: CorrelationFormula,
    j: int,
    h: float = 1e-4,
    reading: Reading = "k",
    richardson: bool = False,
) -> float:
    """Operator value normalized by the sum of its term magnitudes.

    Raises:
        FormulaError: Bulk family, or ``x_j`` is not a spin point.
        ConditioningError: Step out of range or points too close.
    """
    if not formula.spec.boundary:
        msg = f"{formula.family} has no boundary operator"
        raise FormulaError(msg)
    if formula.weights[j] != SPIN_WEIGHT:
        msg = f"point {j} carries weight {formula.weights[j]}, not a spin"
        raise FormulaError(msg)
    xs = _real(formula.points)

    def f(points: list[float]) -> float:
        return float(formula.evaluate(points))  # type: ignore[arg-type]

    terms = bpz_terms(f, xs, formula.weights, j, h, reading, richardson)
    scale = sum(abs(t) for t in terms)
    return abs(sum(terms)) / scale if scale else 0.0


def bpz_reading_comparison(
    xs: Sequence[float],
    h: float = 1e-4,
    tol: float = 1e-5,
) -> list[dict[str, float | int | str]]:
    """Residuals of both operator readings for ``mixed_RN`` and ``mixed_ZN`` at
    every spin index of ``xs`` (``N`` spins followed by two change points).

    ``annihilated_by`` names the readings whose residual is at most ``tol``:
    ``"k"``, ``"j"``, ``"both"`` or ``"none"``.
    """
    rows: list[dict[str, float | int | str]] = []
    for family in ("mixed_RN", "mixed_ZN"):
        formula = CorrelationFormula.build(family, xs)
        for j in range(len(xs) - 2):
            dk = bpz_residual(formula, j, h, "k")
            dj = bpz_residual(formula, j, h, "j")
            passing = [name for name, r in (("k", dk), ("j", dj)) if r <= tol]
            rows.append(
                {
                    "family": family,
                    "N": len(xs) - 2,
                    "j": j + 1,
                    "residual_dk": dk,
                    "residual_dj": dj,
                    "annihilated_by": "both" if len(passing) == 2 else (passing[0] if passing else "none"),
                }
            )
    rn_dk = max((float(r["residual_dk"]) for r in rows if r["family"] == "mixed_RN"), default=0.0)
    logger.info("bpz_readings_compared", rows=len(rows), N=len(xs) - 2, mixed_RN_worst_dk=rn_dk)
    return rows


def cauchy_riemann_residual(f: Callable[[complex], complex], z: complex, h: float = 1e-4) -> float:
    """``|f_x + i f_y| / |f_x|`` by central differences."""
    fx = (f(z + h) - f(z - h)) / (2 * h)
    fy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    return float(abs(fx + 1j * fy) / abs(fx))
