"""Exhaustive enumeration oracles."""

from fkcorr.exact.cache import OracleCache
from fkcorr.exact.enumeration import (
    AuditReport,
    FKEnumeration,
    IsingEnumeration,
    enumerate_fk,
    enumerate_ising,
    es_coupling_audit,
)
from fkcorr.exact.hightemp import (
    HighTempGraph,
    build_high_temp_graph,
    fermionic_observable_free,
    high_temp_check,
    high_temp_Z,
)
from fkcorr.exact.interfaces import (
    ObservableField,
    boundary_one_arm_identity,
    fermionic_observable_dobrushin,
    trace_interfaces,
)


__all__ = [
    "AuditReport",
    "FKEnumeration",
    "HighTempGraph",
    "IsingEnumeration",
    "ObservableField",
    "OracleCache",
    "boundary_one_arm_identity",
    "build_high_temp_graph",
    "enumerate_fk",
    "enumerate_ising",
    "es_coupling_audit",
    "fermionic_observable_dobrushin",
    "fermionic_observable_free",
    "high_temp_Z",
    "high_temp_check",
    "trace_interfaces",
]
