"""Parameter-law unit tests: exact values and structural properties."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracmlmc.params import (
    PhysicalConstants,
    SamplePoint,
    StochasticModel,
    build_scenario,
    density,
    fracture_width,
    permeability_from_porosity,
    porosity,
    recharge,
)

UNIT = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def test_density_endpoints():
    assert density(0.0) == pytest.approx(1000.0, rel=1e-12)
    assert density(1.0) == pytest.approx(1025.0, rel=1e-12)
    assert density(0.5) == pytest.approx(1012.5, rel=1e-12)


@given(a=st.floats(-0.5, 1.5), b=st.floats(-0.5, 1.5))
def test_density_is_affine(a, b):
    mid = density(0.5 * (a + b))
    assert mid == pytest.approx(0.5 * (density(a) + density(b)), abs=1e-9)


def test_permeability_matches_tabulated_value():
    # e = 1 reproduces the benchmark permeability at the base porosity
    k1 = permeability_from_porosity(0.35)
    assert k1 == pytest.approx(1.019368e-9, rel=1e-3)
    # printed variant with squared denominator
    pc2 = PhysicalConstants(kozeny_denominator_exponent=2)
    k2 = permeability_from_porosity(0.35, pc2)
    assert k2 == pytest.approx(7.5514e-10, rel=1e-3)
    # independent evaluation of the closed form
    assert k2 == pytest.approx(1.5455e-8 * 0.35**3 / (1 - 0.35**2), rel=1e-12)


@pytest.mark.parametrize("exponent", [1, 2])
def test_permeability_monotone_and_vanishing(exponent):
    pc = PhysicalConstants(kozeny_denominator_exponent=exponent)
    phis = np.linspace(1e-6, 0.97, 400)
    ks = permeability_from_porosity(phis, pc)
    assert np.all(np.diff(ks) > 0.0)
    assert permeability_from_porosity(1e-9, pc) < 1e-30


def test_permeability_rejects_bad_porosity():
    with pytest.raises(ValueError):
        permeability_from_porosity(0.0)
    with pytest.raises(ValueError):
        permeability_from_porosity(1.0)


def test_fracture_width_values():
    assert fracture_width(0.0) == pytest.approx(5.05e-3, rel=1e-12)
    assert fracture_width(1.0) == pytest.approx(1.0e-2, rel=1e-12)
    assert fracture_width(-1.0) == pytest.approx(1.0e-4, rel=1e-12)
    with pytest.raises(ValueError):
        fracture_width(1.5)


@given(xi=UNIT)
def test_fracture_width_range(xi):
    eps = fracture_width(xi)
    assert 1e-4 - 1e-15 <= eps <= 1e-2 + 1e-15


def test_recharge_values():
    assert recharge(0.0, 0.0) == pytest.approx(3.3e-6, rel=1e-12)
    assert recharge(20.0, 0.0) == pytest.approx(3.63e-6, rel=1e-12)
    assert recharge(0.0, -1.0) == pytest.approx(2.97e-6, rel=1e-12)


@given(t=st.floats(0.0, 6016.0), xi=UNIT)
def test_recharge_periodic_and_positive(t, xi):
    q = recharge(t, xi)
    assert q > 0.0
    assert recharge(t + 80.0, xi) == pytest.approx(q, rel=1e-12)


def test_recharge_oscillation_switch():
    model = StochasticModel(time_dependent_recharge=False)
    for t in (0.0, 13.0, 20.0):
        assert recharge(t, 0.5, model) == pytest.approx(3.3e-6 * 1.05, rel=1e-12)


def test_porosity_values():
    assert porosity(0.7, -0.3, 0.0) == pytest.approx(0.35, rel=1e-12)
    # cos(0) = 1 and sin(-3 pi / 2) = 1
    assert porosity(0.0, -0.75, 1.0) == pytest.approx(0.364, rel=1e-12)
    # cos(pi/2) = 0 and sin(-pi/2) = -1
    assert porosity(1.0, -0.25, 1.0) == pytest.approx(0.343, rel=1e-10)


def test_porosity_minimum_over_domain():
    xs, ys = np.meshgrid(np.linspace(0, 2, 201), np.linspace(-1, 0, 101))
    phi = porosity(xs, ys, 1.0)
    assert phi.min() >= 0.336 - 1e-12


def test_build_scenario_deterministic_table():
    s = build_scenario(SamplePoint(xi=(0.0, 0.0, 0.0)))
    assert s.aperture == pytest.approx(5.05e-3, rel=1e-12)
    xs = np.linspace(0.01, 1.99, 40)
    ys = np.linspace(-0.99, -0.01, 40)
    assert np.allclose(s.porosity_bulk(xs, ys), 0.35, rtol=1e-12)
    assert np.allclose(s.permeability_bulk(xs, ys), 1.019368e-9, rtol=1e-3)


@given(x1=UNIT, x2=UNIT, x3=UNIT)
def test_scenario_interface_coefficients(x1, x2, x3):
    s = build_scenario(SamplePoint(xi=(x1, x2, x3)))
    xs = np.array([0.3, 1.1, 1.9])
    ys = np.array([-0.9, -0.5, -0.1])
    assert np.allclose(s.permeability_normal(xs, ys), s.permeability_bulk(xs, ys))
    assert np.allclose(s.diffusion_normal(xs, ys),
                       s.porosity_bulk(xs, ys) * s.constants.diffusion)
    assert s.diffusion_fracture() == pytest.approx(0.7 * 18.8571e-6, rel=1e-12)


def test_scenario_bitwise_reproducible():
    a = build_scenario(SamplePoint(xi=(0.31, -0.62, 0.95)))
    b = build_scenario(SamplePoint(xi=(0.31, -0.62, 0.95)))
    xs = np.linspace(0, 2, 17)
    ys = np.linspace(-1, 0, 17)
    assert a.aperture == b.aperture
    assert np.array_equal(a.porosity_bulk(xs, ys), b.porosity_bulk(xs, ys))
    assert np.array_equal(a.permeability_bulk(xs, ys), b.permeability_bulk(xs, ys))
    ts = np.linspace(0, 6016, 95)
    assert np.array_equal(a.recharge_flux(ts), b.recharge_flux(ts))


def test_sample_point_validation():
    with pytest.raises(ValueError):
        SamplePoint(xi=(1.2, 0.0, 0.0))
    with pytest.raises(ValueError):
        SamplePoint(xi=(0.0, 0.0))
