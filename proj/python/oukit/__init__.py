"""Ornstein-Uhlenbeck simulation and parameter estimation (OLS, Kalman MLE, MLP)."""

from ._oukit import *  # noqa: F401,F403
from ._oukit import __doc__  # noqa: F401
