"""Continuous position/momentum measurement of a quadratic quantum particle:
extended-coherent-state filtering, a grid oracle for the stochastic
Schrodinger equation, and LQG feedback control of the filtered means."""

__version__ = "0.1.0"
