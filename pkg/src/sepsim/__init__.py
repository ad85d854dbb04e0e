"""Boundary-driven generalized exclusion process toolkit.

Exact kinetic Monte Carlo simulation of the alpha-exclusion process with
reservoir coupling damped by n**(-theta), exact finite-system analysis,
a heat-equation solver with the matching Dirichlet/Robin/Neumann boundary
conditions, and the experiment harness that compares the two.
"""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
