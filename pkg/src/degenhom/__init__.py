"""Stochastic homogenization of degenerate p-growth integral functionals.

Cell-formula estimates of the homogenized integrand, growth-constant and
degeneracy diagnostics, Euler-Lagrange convergence studies and ergodic
averaging checks on seeded random coefficient fields.
"""

__version__ = "0.1.0"
