"""fkcorr - critical FK-Ising simulation, exact lattice oracles and continuum formulas."""

from __future__ import annotations


__version__ = "0.1.0"

__all__ = ["__version__"]
