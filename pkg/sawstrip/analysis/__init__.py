"""Crossings, extrapolation, honeycomb identities and published tables."""
