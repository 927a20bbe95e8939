"""Finite-depth Bellman functions, A1 weights and martingale remodeling."""
