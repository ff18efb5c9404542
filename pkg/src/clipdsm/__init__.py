"""Decentralized clipped stochastic subgradient methods for weakly convex problems."""

__version__ = "0.1.0"
