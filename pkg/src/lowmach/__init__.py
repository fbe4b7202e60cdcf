"""Fluctuating low Mach number hydrodynamics for binary mixtures on a 2D staggered grid."""

__version__ = "0.1.0"
