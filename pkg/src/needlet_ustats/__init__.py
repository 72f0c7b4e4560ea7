"""Needlet U-statistics on Poisson and i.i.d. point fields on S^q."""
