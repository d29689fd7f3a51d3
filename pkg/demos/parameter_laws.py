"""Walk through the material laws and their stochastic modulation.

Run:  python3 demos/parameter_laws.py
"""
import numpy as np

from fracmlmc.params import (
    PhysicalConstants,
    SamplePoint,
    build_scenario,
    density,
    fracture_width,
    permeability_from_porosity,
    porosity,
    recharge,
)

print("=== density: linear in the salt mass fraction ===")
for c in (0.0, 0.25, 0.5, 1.0):
    print(f"  rho({c:4.2f}) = {density(c):8.2f} kg/m^3")

print("\n=== Kozeny-Carman-like permeability ===")
pc1 = PhysicalConstants(kozeny_denominator_exponent=1)
pc2 = PhysicalConstants(kozeny_denominator_exponent=2)
for phi in (0.25, 0.35, 0.45):
    print(f"  phi={phi:4.2f}: K(e=1) = {permeability_from_porosity(phi, pc1):.4e}"
          f"   K(e=2) = {permeability_from_porosity(phi, pc2):.4e} m^2")
print("  (e=1 at phi=0.35 reproduces the benchmark medium permeability)")

print("\n=== fracture aperture vs its random input ===")
for xi in (-1.0, -0.5, 0.0, 0.5, 1.0):
    print(f"  xi1={xi:+4.1f} -> aperture {fracture_width(xi):.4e} m")

print("\n=== recharge: periodic in time, modulated by xi3 ===")
for t in (0.0, 20.0, 40.0, 60.0, 80.0):
    row = "  t={:5.1f}s".format(t)
    for xi in (-1.0, 0.0, 1.0):
        row += f"   q(xi3={xi:+.0f}) = {recharge(t, xi):.3e}"
    print(row)

print("\n=== porosity field snapshots along the domain ===")
xs = np.linspace(0.0, 2.0, 9)
for xi2 in (-1.0, 0.0, 1.0):
    vals = porosity(xs, np.full_like(xs, -0.8), xi2)
    pretty = " ".join(f"{v:.4f}" for v in np.atleast_1d(vals))
    print(f"  xi2={xi2:+.0f}, y=-0.8: {pretty}")

print("\n=== a full scenario bundles everything ===")
scenario = build_scenario(SamplePoint(xi=(0.3, -0.6, 0.9)))
print(f"  aperture          {scenario.aperture:.4e} m")
print(f"  porosity(1.1,-.8) {scenario.porosity_bulk(1.1, -0.8):.5f}")
print(f"  permeab.(1.1,-.8) {scenario.permeability_bulk(1.1, -0.8):.4e} m^2")
print(f"  recharge(t=960)   {scenario.recharge_flux(960.0):.4e} kg/(m^2 s)")
print(f"  fracture diffusion {scenario.diffusion_fracture():.4e} m^2/s")
