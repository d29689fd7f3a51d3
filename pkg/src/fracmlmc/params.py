"""Material laws and stochastic parameter models.

Physical constants follow the deterministic Henry-like benchmark
configuration; the three uniform random inputs control the fracture
aperture, the porosity/permeability field, and the freshwater recharge
intensity.  All laws are pure functions of their arguments, so scenarios
built from the same random draw are bitwise reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PhysicalConstants",
    "StochasticModel",
    "SamplePoint",
    "ScenarioFields",
    "density",
    "permeability_from_porosity",
    "fracture_width",
    "recharge",
    "porosity",
    "build_scenario",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """Deterministic model parameters (SI units).

    ``kozeny_denominator_exponent`` selects the denominator ``1 - phi**e``
    of the Kozeny-Carman-like law; ``e = 1`` reproduces the tabulated
    medium permeability 1.019368e-9 m^2 at phi = 0.35, ``e = 2`` is the
    alternative printed form.
    """

    diffusion: float = 18.8571e-6       # molecular diffusion D0 [m^2/s]
    gravity: float = 9.8                # magnitude, acts in -y [m/s^2]
    viscosity: float = 1.0e-3           # [kg/(m s)], constant
    rho_fresh: float = 1000.0           # density of pure water [kg/m^3]
    rho_brine: float = 1025.0           # density of brine (c = 1) [kg/m^3]
    porosity_fracture: float = 0.7
    permeability_fracture: float = 1.019368e-6   # tangential K_f [m^2]
    kozeny_scale: float = 1.5455e-8     # kappa_KC [m^2]
    kozeny_denominator_exponent: int = 1
    total_time: float = 6016.0          # simulated time horizon T [s]

    def __post_init__(self):
        if not (self.rho_brine > self.rho_fresh > 0.0):
            raise ValueError("need rho_brine > rho_fresh > 0")
        if not (0.0 < self.porosity_fracture < 1.0):
            raise ValueError("fracture porosity must lie in (0, 1)")
        if self.diffusion < 0.0:   # zero allowed: pure-advection studies
            raise ValueError("diffusion must be non-negative")
        for name in ("gravity", "viscosity",
                     "permeability_fracture", "kozeny_scale", "total_time"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.kozeny_denominator_exponent not in (1, 2):
            raise ValueError("kozeny_denominator_exponent must be 1 or 2")


@dataclass(frozen=True)
class StochasticModel:
    """Amplitudes of the three stochastic input laws.

    Defaults give
      aperture(x1)  = 0.01 * ((1 - 0.01) x1 + (1 + 0.01)) / 2
      recharge(t,x3)= 3.3e-6 * (1 + 0.1 x3) * (1 + 0.1 sin(pi t / 40))
      porosity(x,y,x2) = 0.35 * (1 + 0.02 (x2 cos(pi x / 2) + x2 sin(2 pi y)))
    """

    aperture_scale: float = 0.01
    aperture_ratio: float = 0.01        # min/max aperture ratio
    recharge_base: float = 3.3e-6       # [kg/(m^2 s)]
    recharge_amplitude: float = 0.1     # xi_3 modulation
    recharge_oscillation: float = 0.1   # time modulation amplitude
    recharge_period: float = 80.0       # [s], sin(2 pi t / period)
    porosity_base: float = 0.35
    porosity_amplitude: float = 0.02
    time_dependent_recharge: bool = True


@dataclass(frozen=True)
class SamplePoint:
    """One draw of the random vector (xi1, xi2, xi3), each U[-1, 1]."""

    xi: tuple[float, float, float]
    level: int = -1              # provenance: MLMC level, -1 = standalone
    index: int = -1              # provenance: sample index within level
    root_seed: int = 0

    def __post_init__(self):
        if len(self.xi) != 3:
            raise ValueError("sample point needs exactly 3 components")
        for v in self.xi:
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"xi component {v} outside [-1, 1]")


def density(c, constants: PhysicalConstants = PhysicalConstants()):
    """Linear density law rho(c) = rho0 + (rho1 - rho0) c.

    Extrapolates linearly outside [0, 1]; works elementwise on arrays.
    """
    out = constants.rho_fresh \
        + (constants.rho_brine - constants.rho_fresh) * np.asarray(c, dtype=float)
    return float(out) if np.isscalar(c) else out


def permeability_from_porosity(phi, constants: PhysicalConstants = PhysicalConstants()):
    """Kozeny-Carman-like law K(phi) = kappa * phi^3 / (1 - phi^e)."""
    phi_arr = np.asarray(phi, dtype=float)
    if np.any(phi_arr <= 0.0) or np.any(phi_arr >= 1.0):
        raise ValueError("porosity must lie strictly in (0, 1)")
    e = constants.kozeny_denominator_exponent
    out = constants.kozeny_scale * phi_arr**3 / (1.0 - phi_arr**e)
    return float(out) if np.isscalar(phi) else out


def fracture_width(xi1: float, model: StochasticModel = StochasticModel()) -> float:
    """Uncertain fracture aperture [m]; xi1 = 0 gives the mean 5.05e-3."""
    if not -1.0 <= xi1 <= 1.0:
        raise ValueError("xi1 outside [-1, 1]")
    r = model.aperture_ratio
    return model.aperture_scale * ((1.0 - r) * xi1 + (1.0 + r)) / 2.0


def recharge(t, xi3: float, model: StochasticModel = StochasticModel()):
    """Freshwater recharge mass flux [kg/(m^2 s)] at time t [s]."""
    osc = 1.0
    if model.time_dependent_recharge:
        osc = 1.0 + model.recharge_oscillation * np.sin(
            2.0 * math.pi * np.asarray(t, dtype=float) / model.recharge_period)
    out = model.recharge_base * (1.0 + model.recharge_amplitude * xi3) * osc
    return float(out) if np.isscalar(t) else out


def porosity(x, y, xi2: float, model: StochasticModel = StochasticModel()):
    """Porosity field on the aquifer domain; xi2 = 0 gives the base value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    wobble = xi2 * np.cos(math.pi * x / 2.0) + xi2 * np.sin(2.0 * math.pi * y)
    out = model.porosity_base * (1.0 + model.porosity_amplitude * wobble)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScenarioFields:
    """Material fields derived from one random draw.

    Field evaluators accept scalars or numpy arrays.  Interface
    coefficients follow the discrete-fracture closure: the normal
    permeability equals the bulk permeability and the normal diffusion
    equals the bulk porosity times the molecular diffusion.
    """

    sample: SamplePoint
    constants: PhysicalConstants
    model: StochasticModel
    aperture: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "aperture",
                           fracture_width(self.sample.xi[0], self.model))
        if self.aperture <= 0.0:
            raise ValueError("aperture must be positive")

    def porosity_bulk(self, x, y):
        return porosity(x, y, self.sample.xi[1], self.model)

    def permeability_bulk(self, x, y):
        return permeability_from_porosity(self.porosity_bulk(x, y), self.constants)

    def recharge_flux(self, t):
        return recharge(t, self.sample.xi[2], self.model)

    def diffusion_bulk(self, x, y):
        """Effective bulk diffusion phi_m * D0 (mechanical dispersion neglected)."""
        return self.porosity_bulk(x, y) * self.constants.diffusion

    def diffusion_fracture(self) -> float:
        """Tangential fracture diffusion phi_f * D0."""
        return self.constants.porosity_fracture * self.constants.diffusion

    def permeability_normal(self, x, y):
        """Interface normal permeability K_fn = K_m."""
        return self.permeability_bulk(x, y)

    def diffusion_normal(self, x, y):
        """Interface normal diffusion D_fn = phi_m * D0."""
        return self.diffusion_bulk(x, y)

    def density(self, c):
        return density(c, self.constants)


def build_scenario(sample: SamplePoint,
                   constants: PhysicalConstants = PhysicalConstants(),
                   model: StochasticModel = StochasticModel()) -> ScenarioFields:
    """Assemble all material fields for one random draw.

    Raises if the resulting fields violate their admissibility bounds
    (positive aperture, porosity in (0, 1), positive recharge).
    """
    scenario = ScenarioFields(sample=sample, constants=constants, model=model)
    # Porosity bounds: the trig wobble is bounded by 2 in magnitude.
    worst = model.porosity_base * (1.0 + 2.0 * model.porosity_amplitude)
    best = model.porosity_base * (1.0 - 2.0 * model.porosity_amplitude)
    if not (0.0 < best and worst < 1.0):
        raise ValueError("porosity amplitudes allow values outside (0, 1)")
    if model.recharge_base * (1.0 - model.recharge_amplitude) \
            * (1.0 - model.recharge_oscillation) <= 0.0:
        raise ValueError("recharge law allows non-positive flux")
    return scenario
