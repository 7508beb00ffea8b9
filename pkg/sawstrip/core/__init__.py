"""Numerical engine: lattice geometry, contact polynomials, signatures, the sweep."""
