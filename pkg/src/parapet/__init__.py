"""Pseudospectral solver and verification toolkit for quasilinear
parabolic systems on the periodic torus."""

__version__ = "0.1.0"
