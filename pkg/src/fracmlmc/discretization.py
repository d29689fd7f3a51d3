"""Vertex-centered finite-volume discretization of the coupled system.

Control volumes are the classical dual boxes (element barycenters joined
to edge midpoints).  Convective terms use full upwind, face densities are
arithmetic means of the adjacent vertex densities, time stepping is
implicit Euler.  The fracture contributes a 1D discretization along its
polyline plus pointwise exchange fluxes with both bulk sides; bulk
control volumes at the fracture never exchange mass directly across it.

Residual row layout matches the dof layout: even slots carry the salt
balance, odd slots the liquid balance, so Dirichlet handling and the
pressure/mass-fraction pairing stay aligned.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from fracmlmc import _kernels
from fracmlmc.mesh import DofMap, MeshHierarchy, MeshLevel, V_PLAIN
from fracmlmc.params import (
    PhysicalConstants,
    SamplePoint,
    ScenarioFields,
    StochasticModel,
    build_scenario,
)
from fracmlmc.qoi import BoxIntegrator, PointEvaluator, QoiSeries, QoiSpec
from fracmlmc.solver import (
    GmgHierarchy,
    Ilu0,
    KrylovConfig,
    NewtonConfig,
    NewtonError,
    newton_solve,
)

__all__ = [
    "AssemblyError",
    "SimulationError",
    "TimeGrid",
    "time_grid_for_level",
    "normal_exchange_velocity",
    "exchange_mass_fluxes",
    "LevelGeometry",
    "Assembler",
    "initial_state",
    "mass_balance",
    "MassBalance",
    "SimulationOptions",
    "CostRecord",
    "SimulationResult",
    "Simulator",
    "simulate",
]


class AssemblyError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Implicit-Euler grid; output times are multiples of the interval."""

    tau: float
    steps: int
    output_interval: float = 64.0

    def __post_init__(self):
        ratio = self.output_interval / self.tau
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("output interval must be a multiple of the step")

    @property
    def t_end(self) -> float:
        return self.tau * self.steps

    def output_times(self) -> np.ndarray:
        n = int(round(self.t_end / self.output_interval))
        return self.output_interval * np.arange(n + 1)


def time_grid_for_level(level: int, constants: PhysicalConstants,
                        r0: int = 188, output_interval: float = 64.0) -> TimeGrid:
    steps = r0 * 2**level
    return TimeGrid(tau=constants.total_time / steps, steps=steps,
                    output_interval=output_interval)


# ---------------------------------------------------------------------------
# scalar reference forms of the interface fluxes
# ---------------------------------------------------------------------------

def normal_exchange_velocity(p_m: float, p_f: float, c_m: float, c_f: float,
                             aperture: float, k_fn: float, g_dot_n: float,
                             constants: PhysicalConstants = PhysicalConstants(),
                             gravity_mode: str = "matrix_side") -> float:
    """Normal Darcy velocity through one fracture face [m/s].

    Positive values point from the fracture into the bulk side.  The
    buoyancy term uses the matrix-side density against the fracture
    density; ``gravity_mode='as_printed'`` drops it (the printed form is
    identically zero).
    """
    if aperture <= 0.0:
        raise ValueError("aperture must be positive")
    grav = 0.0
    if gravity_mode == "matrix_side":
        rho_m = constants.rho_fresh + (constants.rho_brine - constants.rho_fresh) * c_m
        rho_f = constants.rho_fresh + (constants.rho_brine - constants.rho_fresh) * c_f
        grav = (rho_m - rho_f) * g_dot_n
    elif gravity_mode != "as_printed":
        raise ValueError(f"unknown gravity_mode {gravity_mode!r}")
    return -(k_fn / constants.viscosity) * ((p_m - p_f) / (aperture / 2.0) - grav)


def exchange_mass_fluxes(q_fn: float, c_m: float, c_f: float, d_fn: float,
                         aperture: float,
                         constants: PhysicalConstants = PhysicalConstants()):
    """(liquid, salt) interface mass fluxes per unit fracture area.

    Upwind: matrix concentration when the flow enters the fracture
    (q_fn < 0), fracture concentration otherwise.  The same values close
    the bulk-side balance (flux continuity).
    """
    if aperture <= 0.0:
        raise ValueError("aperture must be positive")
    rho_m = constants.rho_fresh + (constants.rho_brine - constants.rho_fresh) * c_m
    c_up = c_m if q_fn < 0.0 else c_f
    flux_liquid = rho_m * q_fn
    flux_salt = rho_m * c_up * q_fn - rho_m * d_fn * (c_m - c_f) / (aperture / 2.0)
    return flux_liquid, flux_salt


# ---------------------------------------------------------------------------
# per-level geometry (scenario independent, cached)
# ---------------------------------------------------------------------------

_REF_QUAD = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def _quad_ref_derivs(ref_pts: np.ndarray):
    s, t = ref_pts[:, 0], ref_pts[:, 1]
    d_ds = np.stack([-(1 - t), (1 - t), t, -t], axis=-1)
    d_dt = np.stack([-(1 - s), -s, s, (1 - s)], axis=-1)
    return d_ds, d_dt


def _quad_shape_values(ref_pts: np.ndarray):
    s, t = ref_pts[:, 0], ref_pts[:, 1]
    return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)


@dataclass
class _CellBatch:
    conn: np.ndarray        # (E, k) vertex ids
    dofs: np.ndarray        # (E, 2k) interleaved (c, p), side resolved
    normals: np.ndarray     # (E, k, 2) scaled face normals
    grads: np.ndarray       # (E, k, k, 2) shape grads at face points
    face_a: np.ndarray      # (k,)
    face_b: np.ndarray      # (k,)
    subarea: np.ndarray     # (E, k)
    vert_xy: np.ndarray     # (E, k, 2)
    face_xy: np.ndarray     # (E, k, 2)

    @property
    def k(self) -> int:
        return self.conn.shape[1]


def _build_cell_batch(mesh: MeshLevel, dofmap: DofMap, conn: np.ndarray) -> _CellBatch:
    n_el, k = conn.shape
    pts = mesh.vertices[conn]                       # (E, k, 2)
    bary = pts.mean(axis=1)                         # (E, 2)
    face_a = np.arange(k, dtype=np.int64)
    face_b = (face_a + 1) % k

    mids = 0.5 * (pts[:, face_a] + pts[:, face_b])  # (E, k, 2)
    seg = bary[:, None, :] - mids
    perp = np.stack([seg[..., 1], -seg[..., 0]], axis=-1)
    along = pts[:, face_b] - pts[:, face_a]
    orient = np.sign(np.einsum("efi,efi->ef", perp, along))
    if np.any(orient == 0.0):
        raise AssemblyError("degenerate sub-face in control-volume construction")
    normals = perp * orient[..., None]

    if k == 3:
        # constant P1 gradients, replicated on every face
        e1 = pts[:, 1] - pts[:, 0]
        e2 = pts[:, 2] - pts[:, 0]
        twice_area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        grads_const = np.empty((n_el, 3, 2))
        cyc = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
        for a, b, c in cyc:
            edge = pts[:, c] - pts[:, b]
            grads_const[:, a, 0] = -edge[:, 1] / twice_area
            grads_const[:, a, 1] = edge[:, 0] / twice_area
        grads = np.repeat(grads_const[:, None, :, :], 3, axis=1)
        face_xy = 0.5 * (mids + bary[:, None, :])
    else:
        ref_mids = 0.5 * (_REF_QUAD[face_a] + _REF_QUAD[face_b])
        ref_face = 0.5 * (ref_mids + 0.5)
        d_ds, d_dt = _quad_ref_derivs(ref_face)     # (k, 4) each
        grads = np.empty((n_el, k, 4, 2))
        for f in range(k):
            jx_s = pts[..., 0] @ d_ds[f]
            jx_t = pts[..., 0] @ d_dt[f]
            jy_s = pts[..., 1] @ d_ds[f]
            jy_t = pts[..., 1] @ d_dt[f]
            det = jx_s * jy_t - jx_t * jy_s
            # grad N_j = J^{-T} (dN/ds, dN/dt)
            grads[:, f, :, 0] = (jy_t[:, None] * d_ds[f][None, :]
                                 - jy_s[:, None] * d_dt[f][None, :]) / det[:, None]
            grads[:, f, :, 1] = (-jx_t[:, None] * d_ds[f][None, :]
                                 + jx_s[:, None] * d_dt[f][None, :]) / det[:, None]
        shapes = _quad_shape_values(ref_face)       # (k, 4)
        face_xy = np.einsum("fj,ejx->efx", shapes, pts)

    # sub-box areas: polygon (P_j, mid_j, bary, mid_{j-1})
    subarea = np.empty((n_el, k))
    for j in range(k):
        poly = np.stack([pts[:, j], mids[:, j], bary, mids[:, (j - 1) % k]], axis=1)
        x, y = poly[..., 0], poly[..., 1]
        subarea[:, j] = 0.5 * np.abs(
            np.einsum("ei,ei->e", x, np.roll(y, -1, axis=1))
            - np.einsum("ei,ei->e", y, np.roll(x, -1, axis=1)))

    sides = mesh.side_of(bary)
    from fracmlmc.mesh import V_SPLIT
    has_split = (dofmap.vertex_kind[conn] == V_SPLIT).any(axis=1)
    if np.any(has_split & (sides == 0)):
        raise AssemblyError("fracture-adjacent element straddles the fracture line")
    cplus = dofmap.c_dofs_for_side(1)
    cminus = dofmap.c_dofs_for_side(-1)
    cdofs = np.where(sides[:, None] < 0, cminus[conn], cplus[conn])
    dofs = np.empty((n_el, 2 * k), dtype=np.int64)
    dofs[:, 0::2] = cdofs
    dofs[:, 1::2] = cdofs + 1
    return _CellBatch(conn=conn, dofs=dofs, normals=normals, grads=grads,
                      face_a=face_a, face_b=face_b, subarea=subarea,
                      vert_xy=pts, face_xy=face_xy)


class LevelGeometry:
    """Scenario-independent assembly data for one mesh level."""

    def __init__(self, mesh: MeshLevel, dofmap: DofMap,
                 constants: PhysicalConstants):
        self.mesh = mesh
        self.dofmap = dofmap
        self.n = dofmap.n
        self.batches: list[_CellBatch] = []
        if len(mesh.triangles):
            self.batches.append(_build_cell_batch(mesh, dofmap, mesh.triangles))
        if len(mesh.quads):
            self.batches.append(_build_cell_batch(mesh, dofmap, mesh.quads))

        # fracture edges (1D) and exchange blocks (per chain vertex)
        chain = mesh.fracture_chain
        g_vec = np.array([0.0, -constants.gravity])
        if len(chain) >= 2:
            a, b = chain[:-1], chain[1:]
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            seg = pb - pa
            self.frac_lengths = np.hypot(seg[:, 0], seg[:, 1])
            tangents = seg / self.frac_lengths[:, None]
            self.frac_g_t = tangents @ g_vec
            self.frac_dofs = np.empty((len(a), 4), dtype=np.int64)
            self.frac_dofs[:, 0] = [dofmap.dof_cf(int(v)) for v in a]
            self.frac_dofs[:, 1] = self.frac_dofs[:, 0] + 1
            self.frac_dofs[:, 2] = [dofmap.dof_cf(int(v)) for v in b]
            self.frac_dofs[:, 3] = self.frac_dofs[:, 2] + 1

            areas = np.zeros(len(chain))
            areas[:-1] += 0.5 * self.frac_lengths
            areas[1:] += 0.5 * self.frac_lengths
            self.exch_areas = areas
            origin, d = mesh.fracture_line()
            self.exch_normal1 = np.tile([-d[1], d[0]], (len(chain), 1))
            self.exch_xy = mesh.vertices[chain]
            self.exch_dofs = np.empty((len(chain), 6), dtype=np.int64)
            for i, v in enumerate(chain):
                v = int(v)
                self.exch_dofs[i, 0] = dofmap.dof_c(v, 1)
                self.exch_dofs[i, 1] = dofmap.dof_p(v, 1)
                self.exch_dofs[i, 2] = dofmap.dof_c(v, -1)
                self.exch_dofs[i, 3] = dofmap.dof_p(v, -1)
                self.exch_dofs[i, 4] = dofmap.dof_cf(v)
                self.exch_dofs[i, 5] = dofmap.dof_pf(v)
        else:
            self.frac_lengths = np.empty(0)
            self.frac_g_t = np.empty(0)
            self.frac_dofs = np.empty((0, 4), dtype=np.int64)
            self.exch_areas = np.empty(0)
            self.exch_normal1 = np.empty((0, 2))
            self.exch_xy = np.empty((0, 2))
            self.exch_dofs = np.empty((0, 6), dtype=np.int64)

        self._build_boundary(constants)
        self._build_jacobian_pattern()

    # -- boundaries ---------------------------------------------------------

    def _build_boundary(self, constants: PhysicalConstants):
        mesh, dm = self.mesh, self.dofmap
        left = mesh.boundary_edges[mesh.boundary_markers == 0]
        right_vertices = np.unique(
            mesh.boundary_edges[mesh.boundary_markers == 1])

        dir_dofs, dir_vals = [], []
        for v in right_vertices:
            v = int(v)
            y = mesh.vertices[v, 1]
            p_sea = -constants.rho_brine * constants.gravity * y
            base, size = dm.base[v], dm.block_size(v)
            for s in range(size):
                dir_dofs.append(base + s)
                dir_vals.append(1.0 if s % 2 == 0 else p_sea)
        left_vertices = np.setdiff1d(np.unique(left), right_vertices)
        for v in left_vertices:
            v = int(v)
            base, size = dm.base[v], dm.block_size(v)
            for s in range(0, size, 2):
                dir_dofs.append(base + s)
                dir_vals.append(0.0)
        self.dirichlet_dofs = np.array(sorted(dir_dofs), dtype=np.int64)
        order = np.argsort(np.array(dir_dofs))
        self.dirichlet_values = np.array(dir_vals)[order]

        # recharge faces: liquid rows of left-boundary vertices
        weights: dict[int, float] = {}
        for a, b in left:
            a, b = int(a), int(b)
            length = float(np.hypot(*(mesh.vertices[b] - mesh.vertices[a])))
            for v in (a, b):
                if dm.vertex_kind[v] != V_PLAIN:
                    raise AssemblyError(
                        "fracture vertices on the recharge boundary are unsupported")
                weights[dm.dof_p(v)] = weights.get(dm.dof_p(v), 0.0) + 0.5 * length
        rows = np.array(sorted(weights), dtype=np.int64)
        self.influx_rows = rows
        self.influx_weights = np.array([weights[int(r)] for r in rows])

    # -- jacobian sparsity --------------------------------------------------

    def _block_dof_table(self):
        tables = [b.dofs for b in self.batches] + [self.frac_dofs, self.exch_dofs]
        return [t for t in tables if len(t)]

    def _build_jacobian_pattern(self):
        rows_list, cols_list = [], []
        for dofs in self._block_dof_table():
            m = dofs.shape[1]
            rows_list.append(np.repeat(dofs, m, axis=1).ravel())
            cols_list.append(np.tile(dofs, (1, m)).ravel())
        rows_list.append(np.arange(self.n, dtype=np.int64))
        cols_list.append(np.arange(self.n, dtype=np.int64))
        rows = np.concatenate(rows_list)
        cols = np.concatenate(cols_list)

        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        new = np.ones(len(rs), dtype=bool)
        new[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        uid = np.cumsum(new) - 1
        nnz = int(uid[-1]) + 1
        indices = cs[new]
        counts = np.bincount(rs[new], minlength=self.n)
        indptr = np.concatenate([[0], np.cumsum(counts)])

        mapping = np.empty(len(rows), dtype=np.int64)
        mapping[order] = uid
        self.jac_indptr = indptr.astype(np.int64)
        self.jac_indices = indices.astype(np.int64)
        self.jac_nnz = nnz
        self.jac_map_blocks = mapping[:-self.n]
        self.jac_diag_pos = mapping[-self.n:]

        row_of_entry = np.repeat(np.arange(self.n), np.diff(self.jac_indptr))
        dir_mask = np.zeros(self.n, dtype=bool)
        dir_mask[self.dirichlet_dofs] = True
        self.dirichlet_nnz = np.where(dir_mask[row_of_entry])[0]

        self.res_rows = np.concatenate(
            [t.ravel() for t in self._block_dof_table()]) \
            if self._block_dof_table() else np.empty(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# assembler (binds a scenario to the geometry)
# ---------------------------------------------------------------------------

class Assembler:
    """Residual and Jacobian assembly for one scenario on one level."""

    def __init__(self, geometry: LevelGeometry, scenario: ScenarioFields,
                 gravity_mode: str = "matrix_side"):
        if gravity_mode not in ("matrix_side", "as_printed"):
            raise ValueError(f"unknown gravity_mode {gravity_mode!r}")
        self.geom = geometry
        self.scenario = scenario
        pc = scenario.constants
        self.constants = pc
        self.rho0 = pc.rho_fresh
        self.drho = pc.rho_brine - pc.rho_fresh
        self.gx, self.gy = 0.0, -pc.gravity
        self.mu_inv = 1.0 / pc.viscosity
        self.d0 = pc.diffusion
        self.use_grav = 1.0 if gravity_mode == "matrix_side" else 0.0

        self.cell_material = []
        for b in geometry.batches:
            phi_v = scenario.porosity_bulk(b.vert_xy[..., 0], b.vert_xy[..., 1])
            phi_f = scenario.porosity_bulk(b.face_xy[..., 0], b.face_xy[..., 1])
            k_f = scenario.permeability_bulk(b.face_xy[..., 0], b.face_xy[..., 1])
            self.cell_material.append((np.ascontiguousarray(phi_v),
                                       np.ascontiguousarray(phi_f),
                                       np.ascontiguousarray(k_f)))
        self.aperture = scenario.aperture
        self.k_fn = np.ascontiguousarray(
            scenario.permeability_normal(geometry.exch_xy[:, 0],
                                         geometry.exch_xy[:, 1])) \
            if len(geometry.exch_xy) else np.empty(0)
        self.d_fn = np.ascontiguousarray(
            scenario.diffusion_normal(geometry.exch_xy[:, 0],
                                      geometry.exch_xy[:, 1])) \
            if len(geometry.exch_xy) else np.empty(0)
        self.phi_fr = pc.porosity_fracture
        self.k_fr = pc.permeability_fracture
        self.d_fr = scenario.diffusion_fracture()

    # -- raw block evaluation ------------------------------------------------

    def _evaluate(self, u, u_old, inv_tau, want_jac):
        geom = self.geom
        res_parts, jac_parts = [], []
        for batch, (phi_v, phi_f, k_f) in zip(geom.batches, self.cell_material):
            n_el, k = batch.conn.shape
            cl = u[batch.dofs[:, 0::2]]
            pl = u[batch.dofs[:, 1::2]]
            cl_old = u_old[batch.dofs[:, 0::2]]
            out_res = np.empty((n_el, 2 * k))
            out_jac = np.empty((n_el, 2 * k, 2 * k)) if want_jac \
                else np.empty((0, 2 * k, 2 * k))
            _kernels.cell_batch(cl, pl, cl_old, batch.normals, batch.grads,
                                batch.face_a, batch.face_b, batch.subarea,
                                phi_v, phi_f, k_f, inv_tau, self.rho0,
                                self.drho, self.gx, self.gy, self.mu_inv,
                                self.d0, out_res, out_jac, want_jac)
            res_parts.append(out_res.ravel())
            if want_jac:
                jac_parts.append(out_jac.ravel())

        if len(geom.frac_dofs):
            n_ed = len(geom.frac_dofs)
            cl = u[geom.frac_dofs[:, 0::2]]
            pl = u[geom.frac_dofs[:, 1::2]]
            cl_old = u_old[geom.frac_dofs[:, 0::2]]
            out_res = np.empty((n_ed, 4))
            out_jac = np.empty((n_ed, 4, 4)) if want_jac else np.empty((0, 4, 4))
            _kernels.frac_batch(cl, pl, cl_old, geom.frac_lengths, geom.frac_g_t,
                                self.aperture, self.phi_fr, self.k_fr, self.d_fr,
                                inv_tau, self.rho0, self.drho, self.mu_inv,
                                out_res, out_jac, want_jac)
            res_parts.append(out_res.ravel())
            if want_jac:
                jac_parts.append(out_jac.ravel())

            n_x = len(geom.exch_dofs)
            loc = u[geom.exch_dofs]
            out_res = np.empty((n_x, 6))
            out_jac = np.empty((n_x, 6, 6)) if want_jac else np.empty((0, 6, 6))
            _kernels.exch_batch(loc, loc, geom.exch_areas, geom.exch_normal1,
                                self.k_fn, self.d_fn, self.aperture,
                                self.use_grav, self.rho0, self.drho,
                                self.gx, self.gy, self.mu_inv,
                                out_res, out_jac, want_jac)
            res_parts.append(out_res.ravel())
            if want_jac:
                jac_parts.append(out_jac.ravel())
        return res_parts, jac_parts

    def residual(self, u, u_old, inv_tau, t_new,
                 apply_dirichlet=True, apply_influx=True) -> np.ndarray:
        geom = self.geom
        res_parts, _ = self._evaluate(u, u_old, inv_tau, want_jac=False)
        r = np.zeros(geom.n)
        if res_parts:
            _kernels.scatter_add(r, geom.res_rows, np.concatenate(res_parts))
        if apply_influx and len(geom.influx_rows):
            q_in = self.scenario.recharge_flux(t_new)
            r[geom.influx_rows] -= q_in * geom.influx_weights
        if apply_dirichlet and len(geom.dirichlet_dofs):
            r[geom.dirichlet_dofs] = u[geom.dirichlet_dofs] - geom.dirichlet_values
        return r

    def system(self, u, u_old, inv_tau, t_new):
        """(residual, Jacobian) with boundary conditions applied."""
        geom = self.geom
        res_parts, jac_parts = self._evaluate(u, u_old, inv_tau, want_jac=True)
        r = np.zeros(geom.n)
        if res_parts:
            _kernels.scatter_add(r, geom.res_rows, np.concatenate(res_parts))
        if len(geom.influx_rows):
            q_in = self.scenario.recharge_flux(t_new)
            r[geom.influx_rows] -= q_in * geom.influx_weights
        if len(geom.dirichlet_dofs):
            r[geom.dirichlet_dofs] = u[geom.dirichlet_dofs] - geom.dirichlet_values
        if not np.all(np.isfinite(r)):
            bad = int(np.flatnonzero(~np.isfinite(r))[0])
            raise AssemblyError(f"non-finite assembly at dof {bad}")

        data = np.zeros(geom.jac_nnz)
        if jac_parts:
            _kernels.scatter_add(data, geom.jac_map_blocks,
                                 np.concatenate(jac_parts))
        if len(geom.dirichlet_dofs):
            data[geom.dirichlet_nnz] = 0.0
            data[geom.jac_diag_pos[geom.dirichlet_dofs]] = 1.0
        jac = sp.csr_matrix((data, geom.jac_indices, geom.jac_indptr),
                            shape=(geom.n, geom.n))
        return r, jac

    def face_velocities(self, u):
        """Diagnostic: normal Darcy flux density q . n per cell sub-face."""
        out = []
        for batch, (_, _, k_f) in zip(self.geom.batches, self.cell_material):
            cl = u[batch.dofs[:, 0::2]]
            pl = u[batch.dofs[:, 1::2]]
            gp = np.einsum("efjx,ej->efx", batch.grads, pl)
            gc_a = cl[:, batch.face_a]
            gc_b = cl[:, batch.face_b]
            rho_face = self.rho0 + self.drho * 0.5 * (gc_a + gc_b)
            drive_x = gp[..., 0] - rho_face * self.gx
            drive_y = gp[..., 1] - rho_face * self.gy
            lengths = np.hypot(batch.normals[..., 0], batch.normals[..., 1])
            qn = -k_f * self.mu_inv * (
                drive_x * batch.normals[..., 0]
                + drive_y * batch.normals[..., 1]) / lengths
            out.append(qn)
        return out


# ---------------------------------------------------------------------------
# initial state and diagnostics
# ---------------------------------------------------------------------------

def initial_state(mesh: MeshLevel, dofmap: DofMap,
                  constants: PhysicalConstants) -> np.ndarray:
    """Zero mass fraction, hydrostatic sea-side pressure profile."""
    u = np.zeros(dofmap.n)
    y = mesh.vertices[dofmap.dof_vertex(), 1]
    p_slots = np.arange(dofmap.n) % 2 == 1
    u[p_slots] = -constants.rho_brine * constants.gravity * y[p_slots]
    return u


@dataclass
class MassBalance:
    accumulation: float
    influx: float
    boundary_supply: float
    defect: float

    @property
    def relative_defect(self) -> float:
        scale = max(abs(self.accumulation), abs(self.influx),
                    abs(self.boundary_supply), 1e-30)
        return abs(self.defect) / scale


def mass_balance(asm: Assembler, u_new, u_old, inv_tau, t_new) -> MassBalance:
    """Telescoping check of the discrete liquid-mass budget.

    Summed over every control volume, interior fluxes cancel pairwise, so
    total accumulation must equal recharge influx plus the supply through
    the Dirichlet (sea) boundary; ``defect`` is the leftover imbalance.
    """
    liquid = np.arange(asm.geom.n) % 2 == 1
    r_full = asm.residual(u_new, u_old, inv_tau, t_new, apply_dirichlet=False)
    r_flux = asm.residual(u_new, u_old, 0.0, t_new, apply_dirichlet=False)
    acc = float((r_full - r_flux)[liquid].sum())
    q_in = asm.scenario.recharge_flux(t_new)
    influx = float(q_in * asm.geom.influx_weights.sum())
    dir_liquid = asm.geom.dirichlet_dofs[asm.geom.dirichlet_dofs % 2 == 1]
    supply = -float(r_full[dir_liquid].sum())
    defect = float(r_full[liquid].sum()) - (acc - influx)
    return MassBalance(accumulation=acc, influx=influx,
                       boundary_supply=supply, defect=defect)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationOptions:
    newton: NewtonConfig = NewtonConfig()
    krylov: KrylovConfig = KrylovConfig()
    pre_smooth: int = 2
    post_smooth: int = 2
    gravity_mode: str = "matrix_side"
    max_step_halvings: int = 3
    rebuild_preconditioner_each_newton: bool = False
    check_conservation: bool = False
    r0: int = 188
    output_interval: float = 64.0
    assembly_work_weight: float = 10.0


@dataclass
class CostRecord:
    wall_seconds: float = 0.0
    work_units: float = 0.0
    newton_iterations: int = 0
    krylov_iterations: int = 0
    steps: int = 0
    substeps: int = 0
    halvings: int = 0

    @property
    def krylov_per_newton(self) -> float:
        return self.krylov_iterations / max(1, self.newton_iterations)


@dataclass
class SimulationResult:
    level: int
    sample: SamplePoint
    qoi_series: dict
    snapshots: dict
    cost: CostRecord
    c_min: float
    c_max: float
    final_state: np.ndarray
    final_step_delta_c: float
    max_balance_defect: float | None = None


class _TimeStepSystem:
    def __init__(self, asm: Assembler, u_old, inv_tau, t_new):
        self.asm = asm
        self.u_old = u_old
        self.inv_tau = inv_tau
        self.t_new = t_new

    def residual(self, u):
        return self.asm.residual(u, self.u_old, self.inv_tau, self.t_new)

    def jacobian_system(self, u):
        return self.asm.system(u, self.u_old, self.inv_tau, self.t_new)


class Simulator:
    """Runs deterministic simulations on hierarchy levels with caching."""

    def __init__(self, hierarchy: MeshHierarchy,
                 constants: PhysicalConstants = PhysicalConstants(),
                 model: StochasticModel = StochasticModel(),
                 options: SimulationOptions = SimulationOptions()):
        self.hierarchy = hierarchy
        self.constants = constants
        self.model = model
        self.options = options
        self._geometry: dict[int, LevelGeometry] = {}
        self._evaluators: dict = {}

    def geometry(self, level: int) -> LevelGeometry:
        if level not in self._geometry:
            self._geometry[level] = LevelGeometry(
                self.hierarchy.levels[level], self.hierarchy.dofmaps[level],
                self.constants)
        return self._geometry[level]

    def time_grid(self, level: int) -> TimeGrid:
        return time_grid_for_level(level, self.constants, self.options.r0,
                                   self.options.output_interval)

    def evaluator(self, level: int, spec: QoiSpec):
        key = (level, spec.cache_key())
        if key not in self._evaluators:
            mesh = self.hierarchy.levels[level]
            dm = self.hierarchy.dofmaps[level]
            if spec.kind == "point":
                self._evaluators[key] = PointEvaluator(mesh, dm, (spec.x, spec.y))
            elif spec.kind in ("box", "box_mean"):
                self._evaluators[key] = BoxIntegrator(mesh, dm, spec, self.constants)
            elif spec.kind == "field":
                self._evaluators[key] = None
            else:
                raise ValueError(spec.kind)
        return self._evaluators[key]

    def _build_preconditioner(self, jac, level: int):
        opts = self.options
        kind = opts.krylov.preconditioner
        if kind == "none":
            return None
        if kind == "ilu0":
            return Ilu0(jac).solve
        gmg = GmgHierarchy(jac, self.hierarchy.transfers[:level],
                           pre_smooth=opts.pre_smooth,
                           post_smooth=opts.post_smooth)
        return gmg.preconditioner()

    def _factory(self, level: int, pstate: dict):
        """Preconditioner reuse across Newton iterations and time steps.

        The Jacobian drifts slowly between steps, so a cached hierarchy
        keeps working; it is rebuilt once Krylov counts degrade (tracked
        deterministically via iteration counts) or after a solver failure.
        """
        opts = self.options

        def factory(jac, iteration):
            if opts.krylov.preconditioner == "none":
                return None
            if opts.rebuild_preconditioner_each_newton:
                return self._build_preconditioner(jac, level)
            if pstate.get("m") is None:
                pstate["m"] = self._build_preconditioner(jac, level)
                pstate["baseline"] = None
                pstate["age"] = 0
            return pstate["m"]

        return factory

    def _note_solve(self, pstate: dict, report) -> None:
        if pstate.get("m") is None or not report.krylov_iterations:
            return
        pstate["age"] = pstate.get("age", 0) + 1
        worst = max(report.krylov_iterations)
        if pstate.get("baseline") is None:
            pstate["baseline"] = worst
        elif worst > 1.5 * pstate["baseline"] + 2:
            pstate["m"] = None   # schedule a rebuild at the next solve

    def _advance(self, asm: Assembler, u_old, t_old, dt, level, depth,
                 stats, pstate):
        system = _TimeStepSystem(asm, u_old, 1.0 / dt, t_old + dt)
        for retry_fresh in (False, True):
            try:
                u_new, report = newton_solve(
                    system, u_old, self.options.newton, self.options.krylov,
                    preconditioner_factory=self._factory(level, pstate))
            except (NewtonError, AssemblyError) as exc:
                if not retry_fresh and pstate.get("age", 0) > 0:
                    # a stale preconditioner may be the culprit; retry once
                    pstate["m"] = None
                    continue
                if depth >= self.options.max_step_halvings:
                    raise SimulationError(
                        f"step at t={t_old:g} failed after "
                        f"{depth} halvings: {exc}") from exc
                stats["halvings"] += 1
                pstate["m"] = None
                u_mid = self._advance(asm, u_old, t_old, dt / 2, level,
                                      depth + 1, stats, pstate)
                return self._advance(asm, u_mid, t_old + dt / 2, dt / 2,
                                     level, depth + 1, stats, pstate)
            break
        stats["newton"] += report.newton_iterations
        stats["krylov"] += report.total_krylov
        stats["substeps"] += 1
        self._note_solve(pstate, report)
        return u_new

    def run(self, level: int, sample: SamplePoint, qois=(),
            field_times=(), check_conservation: bool | None = None) -> SimulationResult:
        t_start = time.perf_counter()
        if check_conservation is None:
            check_conservation = self.options.check_conservation
        geom = self.geometry(level)
        dm = self.hierarchy.dofmaps[level]
        scenario = build_scenario(sample, self.constants, self.model)
        asm = Assembler(geom, scenario, self.options.gravity_mode)
        grid = self.time_grid(level)
        evaluators = [(q, self.evaluator(level, q)) for q in qois]
        field_times = set(float(t) for t in field_times)

        u = initial_state(self.hierarchy.levels[level], dm, self.constants)
        series = {q.name: QoiSeries(q.name) for q, _ in evaluators}
        for q, ev in evaluators:
            if ev is not None:
                series[q.name].append(0.0, ev(u))
        snapshots = {}
        if 0.0 in field_times:
            snapshots[0.0] = u.copy()

        c_dofs = dm.all_c_dofs()
        c_min, c_max = 0.0, 0.0
        stats = {"newton": 0, "krylov": 0, "substeps": 0, "halvings": 0}
        pstate: dict = {}
        out_every = int(round(grid.output_interval / grid.tau))
        max_defect = 0.0 if check_conservation else None
        delta_c = np.inf

        for step in range(grid.steps):
            t_old = step * grid.tau
            u_new = self._advance(asm, u, t_old, grid.tau, level, 0, stats,
                                  pstate)
            if check_conservation:
                mb = mass_balance(asm, u_new, u, 1.0 / grid.tau, t_old + grid.tau)
                max_defect = max(max_defect, mb.relative_defect)
            c_vals = u_new[c_dofs]
            c_min = min(c_min, float(c_vals.min()))
            c_max = max(c_max, float(c_vals.max()))
            delta_c = float(np.abs(u_new[c_dofs] - u[c_dofs]).max())
            u = u_new
            t_new = (step + 1) * grid.tau
            if (step + 1) % out_every == 0:
                for q, ev in evaluators:
                    if ev is not None:
                        series[q.name].append(t_new, ev(u))
                if field_times and min(abs(t_new - ft) for ft in field_times) < 1e-9:
                    snapshots[t_new] = u.copy()

        wall = time.perf_counter() - t_start
        n = geom.n
        work = n * (self.options.assembly_work_weight * stats["newton"]
                    + stats["krylov"])
        cost = CostRecord(wall_seconds=wall, work_units=work,
                          newton_iterations=stats["newton"],
                          krylov_iterations=stats["krylov"],
                          steps=grid.steps, substeps=stats["substeps"],
                          halvings=stats["halvings"])
        return SimulationResult(level=level, sample=sample, qoi_series=series,
                                snapshots=snapshots, cost=cost,
                                c_min=c_min, c_max=c_max, final_state=u,
                                final_step_delta_c=delta_c,
                                max_balance_defect=max_defect)


def simulate(hierarchy: MeshHierarchy, level: int, sample: SamplePoint,
             qois=(), constants: PhysicalConstants = PhysicalConstants(),
             model: StochasticModel = StochasticModel(),
             options: SimulationOptions = SimulationOptions(),
             field_times=()) -> SimulationResult:
    """One deterministic simulation of a sampled scenario on one level."""
    sim = Simulator(hierarchy, constants, model, options)
    return sim.run(level, sample, qois=qois, field_times=field_times)
