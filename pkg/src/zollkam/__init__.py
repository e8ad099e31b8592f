"""Numerical KAM reducibility engine for forced Schrodinger operators on Zoll manifolds."""
