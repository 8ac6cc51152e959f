"""Verification suites run by ``fkcorr verify``.

Each suite evaluates a family of exact or numerical identities and returns
residual reports; a suite passes when every report is within tolerance.
"""

from __future__ import annotations

import itertools
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from fkcorr.continuum import (
    CorrelationFormula,
    bpz_reading_comparison,
    bpz_residual,
    covariance_sweep,
    eval_mixed_R,
)
from fkcorr.core.exceptions import ConfigurationError
from fkcorr.exact.enumeration import AuditReport, es_coupling_audit, pfaffian_audit
from fkcorr.exact.hightemp import free_observable_check, high_temp_check
from fkcorr.exact.interfaces import boundary_one_arm_identity
from fkcorr.lattice import BoundarySpec, LatticeDomain, build_box, build_dobrushin, build_domain
from fkcorr.utils.logging import get_logger, log_performance


logger = get_logger(__name__)

EXACT_TOLERANCE = 1e-10
COVARIANCE_TOLERANCE = 1e-10
BPZ_TOLERANCE = 1e-5
CLOSED_FORM_TOLERANCE = 1e-12


@dataclass
class SuiteResult:
    name: str
    reports: list[AuditReport] = field(default_factory=list)
    tables: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    duration_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def max_residual(self) -> float:
        return max((r.max_residual for r in self.reports), default=0.0)

    def to_json(self) -> dict[str, Any]:
        return {
            "suite": self.name,
            "passed": self.passed,
            "max_residual": self.max_residual,
            "duration_ms": round(self.duration_ms, 1),
            "reports": [r.to_json() for r in self.reports],
            "tables": self.tables,
        }


def fixture_domains() -> dict[str, LatticeDomain]:
    """Small graphs with at most 10 edges."""
    return {
        "path": build_domain([(0, 0), (1, 0), (2, 0), (3, 0)]),
        "box_2x2": build_box(1.0, ((0, 0), (1, 1))),
        "box_2x3": build_box(1.0, ((0, 0), (2, 1))),
        "l_shape": build_domain([(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2), (1, 2)]),
    }


def _rename(report: AuditReport, prefix: str) -> AuditReport:
    for row in report.rows:
        row["case"] = f"{prefix}: {row['case']}"
    return report


def es_coupling_suite() -> SuiteResult:
    result = SuiteResult("es-coupling")
    for name, domain in fixture_domains().items():
        result.reports.append(_rename(es_coupling_audit(domain, tolerance=EXACT_TOLERANCE), f"{name}/free"))
        odd = [(v,) for v in domain.vertices] + [tuple(c) for c in itertools.combinations(domain.vertices, 3)]
        even = [tuple(c) for c in itertools.combinations(domain.vertices, 2)]
        wired = es_coupling_audit(domain, BoundarySpec.wired(domain), odd + even, tolerance=EXACT_TOLERANCE)
        result.reports.append(_rename(wired, f"{name}/wired"))
    return result


def pfaffian_suite() -> SuiteResult:
    small = build_box(1.0, ((0, 0), (3, 1)))
    strip = build_box(1.0, ((0, 0), (4, 2)))
    cases = [
        ("free 4-point", small, [(0, 0), (1, 0), (2, 0), (3, 0)], None),
        ("free 4-point around a corner", small, [(0, 0), (3, 0), (3, 1), (1, 1)], None),
        ("free 6-point", strip, [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (4, 1)], None),
        ("mixed N=2", strip, [(1, 0), (3, 0)], ((3, 2), (1, 2))),
        ("mixed N=3", strip, [(0, 0), (2, 0), (4, 0)], ((3, 2), (1, 2))),
    ]
    return SuiteResult("pfaffian", [pfaffian_audit(cases, tolerance=EXACT_TOLERANCE)])


def high_temp_suite() -> SuiteResult:
    result = SuiteResult("high-temp")
    box = build_box(1.0, ((0, 0), (2, 1)))
    even = [tuple(c) for c in itertools.combinations(box.vertices, 2)] + [((0, 0), (1, 0), (2, 1), (0, 1))]
    result.reports.append(_rename(high_temp_check(box, BoundarySpec.free(), even, EXACT_TOLERANCE), "box_2x3/free"))
    mixed = BoundarySpec.mixed_free_plus(box, [(0, 0), (1, 0), (2, 0)], (2, 1), (0, 1))
    subsets = [((1, 0),), ((0, 0),), ((0, 0), (2, 0)), ((0, 0), (1, 0), (2, 0))]
    result.reports.append(_rename(high_temp_check(box, mixed, subsets, EXACT_TOLERANCE), "box_2x3/mixed"))
    return result


def observable_suite() -> SuiteResult:
    result = SuiteResult("observable")
    for name, corners, x1, x2 in (
        ("box_2x2", ((0, 0), (1, 1)), (1, 0), (1, 1)),
        ("box_3x3", ((0, 0), (2, 2)), (2, 0), (2, 2)),
    ):
        dob = build_dobrushin(build_box(1.0, corners), x1, x2)
        result.reports.append(_rename(boundary_one_arm_identity(dob, tolerance=EXACT_TOLERANCE), name))

    strip = build_box(1.0, ((0, 0), (2, 1)))
    bc = BoundarySpec.mixed_free_plus(strip, [(0, 0), (2, 0)], (2, 1), (0, 1))
    free = free_observable_check(strip, bc, (0, 0), (2, 0))
    report = AuditReport("free-observable", EXACT_TOLERANCE)
    report.add("box_2x3 |F(b2)| vs Z ratio", abs(free.value), free.ratio_target)
    result.reports.append(report)
    return result


def _random_tuple(rng: np.random.Generator, n: int, gap: float = 0.3) -> list[float]:
    return list(np.cumsum(rng.uniform(gap, 2.0, size=n)) - 1.0)


def _closed_R1(x: list[float]) -> float:
    return math.sqrt((x[2] - x[1]) / ((x[2] - x[0]) * (x[1] - x[0])))


def _closed_R2(x: list[float]) -> float:
    x1, x2, x3, x4 = x
    bracket = (x4 - x1) * (x3 - x2) + (x4 - x2) * (x3 - x1)
    return bracket / ((x2 - x1) * math.sqrt((x4 - x1) * (x3 - x1) * (x4 - x2) * (x3 - x2)))


COVARIANCE_CASES: tuple[tuple[str, tuple[complex, ...]], ...] = (
    ("bulk_P3", (0.3 + 1.0j, -0.5 + 0.7j, 1.1 + 2.0j)),
    ("boundary_R2", (0.0, 1.0)),
    ("boundary_R3", (0.0, 1.0, 3.0)),
    ("mixed_RN", (0.0, 1.0, 2.0)),
    ("mixed_RN", (0.0, 1.0, 2.0, 3.0)),
    ("mixed_RN", (0.0, 1.0, 2.0, 3.5, 5.0)),
    ("mixed_ZN", (0.0, 1.0, 2.0, 3.0)),
    ("free_pfaffian", (0.0, 1.0, 2.0, 3.0)),
    ("free_pfaffian", (0.0, 0.5, 1.7, 2.0, 3.1, 4.0)),
    ("bulk_boundary_Rz", (0.4 + 1.3j, 0.0)),
    ("magnetization_g", (0.2 + 0.8j,)),
)

BPZ_FAMILIES: tuple[tuple[str, int], ...] = (
    ("boundary_R2", 2),
    ("free_pfaffian", 4),
    ("free_pfaffian", 6),
    ("mixed_ZN", 3),
    ("mixed_ZN", 4),
    ("mixed_ZN", 5),
)


def continuum_suite(seed: int = 0, n_tuples: int = 20, n_closed: int = 1000) -> SuiteResult:
    rng = np.random.default_rng(seed)
    result = SuiteResult("continuum")

    covariance = AuditReport("covariance", COVARIANCE_TOLERANCE)
    for family, points in COVARIANCE_CASES:
        formula = CorrelationFormula.build(family, points)
        covariance.add(f"{family}{len(points)}", covariance_sweep(formula, 100, seed), 0.0)
    result.reports.append(covariance)

    bpz = AuditReport("bpz", BPZ_TOLERANCE)
    for family, size in BPZ_FAMILIES:
        spins = size - 2 if family.startswith("mixed") else size
        worst = 0.0
        for _ in range(n_tuples):
            formula = CorrelationFormula.build(family, _random_tuple(rng, size))
            worst = max(worst, *(bpz_residual(formula, j) for j in range(spins)))
        bpz.add(f"{family}{size}", worst, 0.0)
    result.reports.append(bpz)

    closed = AuditReport("closed-forms", CLOSED_FORM_TOLERANCE)
    for name, size, reference in (("R1", 3, _closed_R1), ("R2", 4, _closed_R2)):
        worst = 0.0
        for _ in range(n_closed):
            xs = _random_tuple(rng, size, gap=0.05)
            expected = reference(xs)
            worst = max(worst, abs(eval_mixed_R(size - 2, xs) - expected) / abs(expected))
        closed.add(name, worst, 0.0)
    result.reports.append(closed)

    result.tables["bpz_readings"] = [
        *bpz_reading_comparison([0.0, 1.0, 2.0, 3.0], tol=BPZ_TOLERANCE),
        *bpz_reading_comparison([0.0, 1.0, 2.5, 3.0, 4.5], tol=BPZ_TOLERANCE),
    ]
    return result


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "es-coupling": es_coupling_suite,
    "pfaffian": pfaffian_suite,
    "high-temp": high_temp_suite,
    "observable": observable_suite,
    "continuum": continuum_suite,
}


def run_suite(name: str) -> SuiteResult:
    """Run one named suite and log its outcome.

    Raises:
        ConfigurationError: Unknown suite name.
    """
    if name not in SUITES:
        msg = f"unknown suite {name!r}; choose from {', '.join(SUITES)}"
        raise ConfigurationError(msg)
    start = time.perf_counter()
    result = SUITES[name]()
    result.duration_ms = (time.perf_counter() - start) * 1000
    log_performance(
        logger,
        f"verify_{name}",
        result.duration_ms,
        success=result.passed,
        max_residual=result.max_residual,
    )
    return result
