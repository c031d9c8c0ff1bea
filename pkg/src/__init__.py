"""Numerical laboratory for the defocusing cubic alpha-NLS inverse problem."""

