"""Numerical toolkit for the one-dimensional stochastic heat equation
``u_t = (nu/2) u_xx + rho(u) W`` driven by space-time white noise, started
from a measure: heat-kernel identities, exact moment formulas, explicit
increment-bound constants, a reproducible finite-difference Monte Carlo
simulator and Hölder-exponent estimators.
"""

__version__ = "0.1.0"
