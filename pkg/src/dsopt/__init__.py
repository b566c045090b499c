"""Optomechanics of a nonlinearly driven few-level cavity.

Internal units throughout: hbar = 1 and cavity decay gamma = 1, so every
energy/frequency is a dimensionless multiple of gamma.
"""

__version__ = "0.1.0"
