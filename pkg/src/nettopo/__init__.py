"""Directed topology inference for linear and nonlinear network systems."""
