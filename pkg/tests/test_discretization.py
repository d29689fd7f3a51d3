"""Assembly-level tests: exact balances, flux oracles, Jacobian consistency."""
import numpy as np
import pytest

from fracmlmc import _kernels
from fracmlmc.discretization import (
    Assembler,
    AssemblyError,
    LevelGeometry,
    TimeGrid,
    exchange_mass_fluxes,
    initial_state,
    mass_balance,
    normal_exchange_velocity,
    time_grid_for_level,
)
from fracmlmc.params import PhysicalConstants, SamplePoint, build_scenario


@pytest.fixture(scope="module")
def pc():
    return PhysicalConstants()


@pytest.fixture(scope="module")
def mini_geometry(mini_mesh, mini_hierarchy, pc):
    return LevelGeometry(mini_mesh, mini_hierarchy.dofmaps[0], pc)


@pytest.fixture(scope="module")
def coarse_geometry(coarse_mesh, hierarchy, pc):
    return LevelGeometry(coarse_mesh, hierarchy.dofmaps[0], pc)


def make_assembler(geometry, xi=(0.0, 0.0, 0.0), **kw):
    scenario = build_scenario(SamplePoint(xi=xi))
    return Assembler(geometry, scenario, **kw)


class ConstantScenario:
    """Duck-typed scenario with spatially constant material fields."""

    def __init__(self, permeability=1e-9, porosity=0.35, aperture=5.05e-3,
                 constants=None, recharge=3.3e-6):
        self.constants = constants or PhysicalConstants()
        self._k = permeability
        self._phi = porosity
        self.aperture = aperture
        self._recharge = recharge

    def porosity_bulk(self, x, y):
        return np.full_like(np.asarray(x, dtype=float), self._phi)

    def permeability_bulk(self, x, y):
        return np.full_like(np.asarray(x, dtype=float), self._k)

    permeability_normal = permeability_bulk

    def diffusion_bulk(self, x, y):
        return self.porosity_bulk(x, y) * self.constants.diffusion

    diffusion_normal = diffusion_bulk

    def diffusion_fracture(self):
        return self.constants.porosity_fracture * self.constants.diffusion

    def recharge_flux(self, t):
        return self._recharge


def hydrostatic_state(mesh, dofmap, pc, c_value):
    rho = pc.rho_fresh + (pc.rho_brine - pc.rho_fresh) * c_value
    u = np.zeros(dofmap.n)
    y = mesh.vertices[dofmap.dof_vertex(), 1]
    slots = np.arange(dofmap.n) % 2 == 1
    u[slots] = -rho * pc.gravity * y[slots]
    u[~slots] = c_value
    return u


# ---------------------------------------------------------------------------
# interface flux oracles
# ---------------------------------------------------------------------------

def test_normal_exchange_velocity_values(pc):
    assert normal_exchange_velocity(5.0, 5.0, 0.3, 0.3, 0.01, 1e-9, -9.8) == 0.0
    # horizontal normal: no buoyancy contribution
    q = normal_exchange_velocity(5e-3, 0.0, 0.0, 0.0, 0.01, 1e-9, 0.0)
    assert q == pytest.approx(-1e-6, rel=1e-12)
    q_flip = normal_exchange_velocity(-5e-3, 0.0, 0.0, 0.0, 0.01, 1e-9, 0.0)
    assert q_flip == pytest.approx(1e-6, rel=1e-12)


def test_normal_exchange_velocity_gravity_modes(pc):
    # heavier matrix fluid above the fracture is pulled in (negative flux)
    q = normal_exchange_velocity(0.0, 0.0, 1.0, 0.0, 0.01, 1e-9,
                                 g_dot_n=-9.8 * 0.9806)
    assert q < 0.0
    q0 = normal_exchange_velocity(0.0, 0.0, 1.0, 0.0, 0.01, 1e-9,
                                  g_dot_n=-9.8, gravity_mode="as_printed")
    assert q0 == 0.0


def test_exchange_mass_fluxes_values(pc):
    q_l, q_s = exchange_mass_fluxes(0.0, 1.0, 0.0, 6.6e-6, 0.01)
    assert q_l == 0.0
    assert q_s == pytest.approx(-1025.0 * 6.6e-6 / 0.005, rel=1e-12)
    assert q_s == pytest.approx(-1.3530, rel=1e-4)

    # inflow to the fracture upwinds the matrix concentration
    q_l, q_s = exchange_mass_fluxes(-1e-6, 0.7, 0.2, 0.0, 0.01)
    rho_m = 1000.0 + 25.0 * 0.7
    assert q_s == pytest.approx(rho_m * 0.7 * -1e-6, rel=1e-12)
    # outflow upwinds the fracture concentration
    _, q_s = exchange_mass_fluxes(1e-6, 0.7, 0.2, 0.0, 0.01)
    assert q_s == pytest.approx(rho_m * 0.2 * 1e-6, rel=1e-12)

    _, q_s = exchange_mass_fluxes(0.0, 0.4, 0.4, 6.6e-6, 0.01)
    assert q_s == 0.0


# ---------------------------------------------------------------------------
# bulk assembly
# ---------------------------------------------------------------------------

def test_hydrostatic_state_is_discrete_equilibrium(coarse_geometry, hierarchy, pc):
    asm = make_assembler(coarse_geometry)
    mesh, dm = hierarchy.levels[0], hierarchy.dofmaps[0]
    u = hydrostatic_state(mesh, dm, pc, c_value=0.4)
    r = asm.residual(u, u, 1.0 / 32.0, t_new=32.0,
                     apply_dirichlet=False, apply_influx=False)
    # scale: residual of a visibly out-of-equilibrium state (pressure zeroed)
    u_bad = u.copy()
    u_bad[1::2] = 0.0
    r_bad = asm.residual(u_bad, u_bad, 1.0 / 32.0, t_new=32.0,
                         apply_dirichlet=False, apply_influx=False)
    assert np.abs(r).max() <= 1e-10 * np.abs(r_bad).max()


def test_flux_telescoping_on_random_state(coarse_geometry, hierarchy):
    rng = np.random.default_rng(7)
    dm = hierarchy.dofmaps[0]
    u = np.empty(dm.n)
    u[0::2] = rng.uniform(0.0, 1.0, dm.n // 2)
    u[1::2] = rng.uniform(-1e4, 1e4, dm.n // 2)
    asm = make_assembler(coarse_geometry)
    r = asm.residual(u, u, 0.0, t_new=0.0,
                     apply_dirichlet=False, apply_influx=False)
    flux_scale = np.abs(r).sum()
    assert abs(r[1::2].sum()) <= 1e-12 * flux_scale
    assert abs(r[0::2].sum()) <= 1e-12 * flux_scale


def test_darcy_face_velocities(mini_mesh, mini_hierarchy):
    pc = PhysicalConstants(gravity=1e-30)
    geom = LevelGeometry(mini_mesh, mini_hierarchy.dofmaps[0], pc)
    scen = ConstantScenario(permeability=1e-9, constants=pc)
    asm = Assembler(geom, scen)
    dm = mini_hierarchy.dofmaps[0]
    delta = 123.0
    u = np.zeros(dm.n)
    x = mini_mesh.vertices[dm.dof_vertex(), 0]
    u[1::2] = delta * x[1::2]
    for batch, qn in zip(geom.batches, asm.face_velocities(u)):
        n_hat_x = batch.normals[..., 0] / np.hypot(batch.normals[..., 0],
                                                   batch.normals[..., 1])
        assert np.allclose(qn, -1e-6 * delta * n_hat_x, atol=1e-6 * delta * 1e-10)


def test_fracture_terms_scale_linearly_with_aperture():
    lengths = np.array([0.25, 0.25])
    g_t = np.array([0.0, 0.0])
    cl = np.array([[0.2, 0.8], [0.8, 0.5]])
    pl = np.array([[10.0, -3.0], [-3.0, 7.0]])
    cl_old = np.zeros_like(cl)
    out1 = np.empty((2, 4))
    out2 = np.empty((2, 4))
    dummy = np.empty((0, 4, 4))
    args = (lengths, g_t)
    common = dict(phi_fr=0.7, k_fr=1e-6, d_fr=1.3e-5, inv_tau=1 / 32.0,
                  rho0=1000.0, drho=25.0, mu_inv=1e3)
    _kernels.frac_batch(cl, pl, cl_old, *args, 0.005, *common.values(),
                        out1, dummy, False)
    _kernels.frac_batch(cl, pl, cl_old, *args, 0.01, *common.values(),
                        out2, dummy, False)
    assert np.allclose(out2, 2.0 * out1, rtol=1e-14)


def test_jacobian_matches_global_finite_differences(mini_geometry, mini_hierarchy):
    rng = np.random.default_rng(3)
    dm = mini_hierarchy.dofmaps[0]
    asm = make_assembler(mini_geometry, xi=(0.3, -0.5, 0.8))
    u = np.empty(dm.n)
    u[0::2] = rng.uniform(0.05, 0.95, dm.n // 2)
    u[1::2] = rng.uniform(-5e3, 5e3, dm.n // 2)
    u_old = u + rng.normal(scale=0.01, size=dm.n)
    inv_tau = 1.0 / 16.0

    r0, jac = asm.system(u, u_old, inv_tau, t_new=16.0)
    dense = jac.toarray()
    fd = np.empty_like(dense)
    sq = np.sqrt(np.finfo(float).eps)
    for j in range(dm.n):
        delta = sq * max(abs(u[j]), 1.0)
        up = u.copy()
        up[j] += delta
        fd[:, j] = (asm.residual(up, u_old, inv_tau, 16.0) - r0) / delta
    scale = np.abs(fd).max()
    assert np.abs(dense - fd).max() <= 1e-5 * scale


def test_dirichlet_rows_and_influx(coarse_geometry, hierarchy, pc):
    asm = make_assembler(coarse_geometry)
    geom = coarse_geometry
    mesh, dm = hierarchy.levels[0], hierarchy.dofmaps[0]
    u = hydrostatic_state(mesh, dm, pc, c_value=1.0)
    # brine state matches the sea-side Dirichlet data, so those rows vanish
    r = asm.residual(u, u, 0.0, t_new=0.0)
    sea = geom.dirichlet_values != 0.0
    assert np.abs(r[geom.dirichlet_dofs[sea]]).max() <= 1e-12
    c_rows = geom.dirichlet_values == 1.0
    assert np.abs(r[geom.dirichlet_dofs[c_rows]]).max() == 0.0

    # recharge faces integrate to the prescribed total over the unit height
    assert geom.influx_weights.sum() == pytest.approx(1.0, rel=1e-12)
    r_no = asm.residual(u, u, 0.0, t_new=0.0, apply_influx=False)
    dr = r_no - asm.residual(u, u, 0.0, t_new=0.0)
    assert dr[geom.influx_rows].sum() == pytest.approx(3.3e-6, rel=1e-12)


def test_nonfinite_assembly_names_dof(mini_geometry, mini_hierarchy):
    asm = make_assembler(mini_geometry)
    dm = mini_hierarchy.dofmaps[0]
    u = np.zeros(dm.n)
    u[4] = np.nan
    with pytest.raises(AssemblyError, match="non-finite assembly at dof"):
        asm.system(u, u, 1.0, t_new=1.0)


def test_mass_balance_identity(coarse_geometry, hierarchy, pc):
    rng = np.random.default_rng(11)
    dm = hierarchy.dofmaps[0]
    mesh = hierarchy.levels[0]
    asm = make_assembler(coarse_geometry, xi=(0.5, 0.5, -0.5))
    u_old = hydrostatic_state(mesh, dm, pc, 0.0)
    u_new = u_old + rng.normal(scale=1e-2, size=dm.n)
    mb = mass_balance(asm, u_new, u_old, 1.0 / 32.0, t_new=32.0)
    assert mb.relative_defect <= 1e-10
    assert mb.influx > 0.0


def test_initial_state_values(hierarchy, pc):
    mesh, dm = hierarchy.levels[0], hierarchy.dofmaps[0]
    u = initial_state(mesh, dm, pc)
    c = u[dm.all_c_dofs()]
    assert np.abs(c).max() == 0.0
    y = mesh.vertices[dm.dof_vertex(), 1]
    p = u[1::2]
    yp = y[1::2]
    bottom = np.isclose(yp, -1.0)
    assert np.allclose(p[bottom], 1025.0 * 9.8, rtol=1e-12)
    top = np.isclose(yp, 0.0)
    assert np.abs(p[top]).max() == 0.0


def test_time_grid_levels(pc):
    g0 = time_grid_for_level(0, pc)
    g2 = time_grid_for_level(2, pc)
    assert g0.tau == pytest.approx(32.0)
    assert g0.steps == 188
    assert g2.tau == pytest.approx(8.0)
    assert g2.steps == 752
    assert g0.t_end == pytest.approx(6016.0)
    assert len(g0.output_times()) == 95
    with pytest.raises(ValueError):
        TimeGrid(tau=48.0, steps=10, output_interval=64.0)