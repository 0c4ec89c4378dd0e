"""Summation-by-parts finite differences with SAT boundary treatment."""
