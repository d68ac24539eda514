"""Melnikov vectors and potentials for penduli-rotator systems.

Computes first-order splitting of the stable and unstable manifolds of the
normally hyperbolic annulus {p = q = 0}, the associated action jumps, and
checks both against direct integration of the perturbed flow.
"""
__version__ = "0.1.0"
