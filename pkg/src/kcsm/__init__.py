"""Kinetically constrained spin models: exact spectra, bootstrap percolation and kinetic Monte Carlo."""
