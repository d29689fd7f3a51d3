"""Multilevel Monte Carlo for density-driven flow in a fractured aquifer.

The package bundles a deterministic nonlinear PDE solver (vertex-centered
finite volumes, implicit Euler, Newton, multigrid-preconditioned BiCGStab)
for a Henry-like saltwater intrusion problem with one embedded fracture,
the stochastic parameter laws, and the multilevel Monte Carlo machinery
(rate screening, level selection, optimal sample allocation, estimation,
cost reporting).
"""

from fracmlmc.params import (
    PhysicalConstants,
    StochasticModel,
    SamplePoint,
    ScenarioFields,
    build_scenario,
    density,
    fracture_width,
    permeability_from_porosity,
    porosity,
    recharge,
)

__version__ = "0.1.0"
