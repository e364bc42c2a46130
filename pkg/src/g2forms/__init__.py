"""Numerical exterior calculus for definite 3-forms in dimensions 6 and 7."""

__version__ = "0.1.0"
