"""Geometric Brownian motion on SL(n): simulation and exact moments."""
