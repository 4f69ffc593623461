"""Discrete massive fermions of the near-critical Ising model."""
