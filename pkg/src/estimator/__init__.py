"""Cavity parameter estimation from quadrature spectra."""
