"""Quantities of interest: point probes, box integrals, field snapshots.

The six default observation points sit in the high-variance region below
the fracture; each also anchors a 0.2 x 0.2 box for the salt-mass
integral I_i = integral of c * rho(c) over the box.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fracmlmc.mesh import DofMap, MeshLevel, locate_point
from fracmlmc.params import PhysicalConstants

__all__ = [
    "QoiSpec",
    "QoiSeries",
    "PointEvaluator",
    "BoxIntegrator",
    "default_observation_points",
    "default_point_qois",
    "default_box_qois",
    "evaluate_point",
    "evaluate_box_integral",
    "field_snapshot",
    "write_vtk_snapshot",
]

QOI_KINDS = ("point", "box", "box_mean", "field")

#: observation points in the high-variance region below the fracture
OBSERVATION_POINTS = (
    (1.1, -0.8), (1.2, -0.8), (1.3, -0.8),
    (1.1, -0.9), (1.2, -0.9), (1.3, -0.9),
)


@dataclass(frozen=True)
class QoiSpec:
    kind: str
    name: str
    x: float = 0.0
    y: float = 0.0
    half_width: float = 0.1
    times: tuple = (960.0,)

    def __post_init__(self):
        if self.kind not in QOI_KINDS:
            raise ValueError(f"unknown QoI kind {self.kind!r}")
        if self.kind in ("box", "box_mean") and self.half_width <= 0:
            raise ValueError("box half-width must be positive")
        if any(t < 0 for t in self.times):
            raise ValueError("QoI times must be non-negative")

    def cache_key(self):
        return (self.kind, round(self.x, 12), round(self.y, 12),
                round(self.half_width, 12))


def default_observation_points():
    return OBSERVATION_POINTS


def default_point_qois(times=(960.0,)) -> list[QoiSpec]:
    return [QoiSpec("point", f"c_x{i+1}", x, y, times=tuple(times))
            for i, (x, y) in enumerate(OBSERVATION_POINTS)]


def default_box_qois(times=(960.0,)) -> list[QoiSpec]:
    return [QoiSpec("box", f"I_{i+1}", x, y, times=tuple(times))
            for i, (x, y) in enumerate(OBSERVATION_POINTS)]


@dataclass
class QoiSeries:
    name: str
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, t: float, value: float):
        if self.times and t <= self.times[-1]:
            raise ValueError("QoI series times must be strictly increasing")
        self.times.append(float(t))
        self.values.append(float(value))

    def at(self, t: float) -> float:
        for tt, v in zip(self.times, self.values):
            if abs(tt - t) <= 1e-9:
                return v
        raise KeyError(f"no value recorded at t={t}")


class PointEvaluator:
    """Interpolates the bulk mass fraction at a fixed point.

    Uses the element containing the point and the dof copies of that
    element's fracture side, so probes next to the fracture read the
    correct branch of the two-valued field.
    """

    def __init__(self, mesh: MeshLevel, dofmap: DofMap, point):
        loc = locate_point(mesh, point)
        self.weights = loc.weights
        self.dofs = dofmap.c_dofs_for_side(loc.side)[loc.vertex_ids]
        self.side = loc.side

    def __call__(self, state: np.ndarray) -> float:
        return float(self.weights @ state[self.dofs])


def _triangle_lattice():
    """Centroids of the 16 similar subtriangles of a 4x4 split."""
    pts = []
    for i in range(4):
        for j in range(4 - i):
            pts.append(((3 * i + 1) / 12.0, (3 * j + 1) / 12.0))
    for i in range(3):
        for j in range(3 - i):
            pts.append(((3 * i + 2) / 12.0, (3 * j + 2) / 12.0))
    return np.array(pts)


def _quad_lattice():
    """4x4 tensor midpoints on the reference square."""
    q = (np.arange(4) + 0.5) / 4.0
    s, t = np.meshgrid(q, q, indexing="ij")
    return np.column_stack([s.ravel(), t.ravel()])


_TRI_LATTICE = _triangle_lattice()
_QUAD_LATTICE = _quad_lattice()


def _tri_shapes(ref):
    return np.column_stack([1.0 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])


def _quad_shapes(ref):
    s, t = ref[:, 0], ref[:, 1]
    return np.column_stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])


class BoxIntegrator:
    """First-order quadrature of c or c*rho(c) over an axis-aligned box.

    Every element is sampled on a fixed 16-point lattice with weight
    element_area / 16; lattice points outside the box are dropped.  The
    O(h^2) quadrature error stays below the O(h) discretization error.
    """

    def __init__(self, mesh: MeshLevel, dofmap: DofMap, spec: QoiSpec,
                 constants: PhysicalConstants = PhysicalConstants()):
        if spec.kind not in ("box", "box_mean"):
            raise ValueError("BoxIntegrator needs a box QoI")
        self.with_density = spec.kind == "box"
        self.constants = constants
        x0, x1 = spec.x - spec.half_width, spec.x + spec.half_width
        y0, y1 = spec.y - spec.half_width, spec.y + spec.half_width

        dof_rows, shape_rows, weights = [], [], []
        sides = mesh.side_of(mesh.element_barycenters())
        cplus = dofmap.c_dofs_for_side(1)
        cminus = dofmap.c_dofs_for_side(-1)
        t = len(mesh.triangles)
        for uid in range(mesh.n_elements):
            conn = mesh.element_vertices(uid)
            pts = mesh.vertices[conn]
            if pts[:, 0].max() < x0 or pts[:, 0].min() > x1 \
                    or pts[:, 1].max() < y0 or pts[:, 1].min() > y1:
                continue
            if uid < t:
                shapes = _tri_shapes(_TRI_LATTICE)
                u, w = pts[1] - pts[0], pts[2] - pts[0]
                area = 0.5 * abs(u[0] * w[1] - u[1] * w[0])
            else:
                shapes = _quad_shapes(_QUAD_LATTICE)
                x, y = pts[:, 0], pts[:, 1]
                area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
            phys = shapes @ pts
            inside = ((phys[:, 0] >= x0) & (phys[:, 0] <= x1)
                      & (phys[:, 1] >= y0) & (phys[:, 1] <= y1))
            if not inside.any():
                continue
            cdofs = (cplus if sides[uid] >= 0 else cminus)[conn]
            n_in = int(inside.sum())
            dof_rows.append(np.broadcast_to(cdofs, (n_in, len(conn))))
            shape_rows.append(shapes[inside])
            weights.append(np.full(n_in, area / 16.0))

        if dof_rows:
            # ragged (tri vs quad) rows are padded with a repeated dof
            width = max(r.shape[1] for r in dof_rows)
            self.dofs = np.vstack([
                np.pad(r, ((0, 0), (0, width - r.shape[1])), mode="edge")
                for r in dof_rows])
            self.shapes = np.vstack([
                np.pad(r, ((0, 0), (0, width - r.shape[1])))
                for r in shape_rows])
            self.weights = np.concatenate(weights)
            # rescale so constants integrate exactly to the box area
            box_area = (2.0 * spec.half_width) ** 2
            self.weights *= box_area / self.weights.sum()
        else:
            self.dofs = np.empty((0, 3), dtype=np.int64)
            self.shapes = np.empty((0, 3))
            self.weights = np.empty(0)

    def __call__(self, state: np.ndarray) -> float:
        if len(self.weights) == 0:
            return 0.0
        c = (state[self.dofs] * self.shapes).sum(axis=1)
        if self.with_density:
            rho = self.constants.rho_fresh \
                + (self.constants.rho_brine - self.constants.rho_fresh) * c
            return float(self.weights @ (c * rho))
        return float(self.weights @ c) / float(self.weights.sum())


def evaluate_point(state, mesh, dofmap, point) -> float:
    return PointEvaluator(mesh, dofmap, point)(state)


def evaluate_box_integral(state, mesh, dofmap, spec: QoiSpec,
                          constants: PhysicalConstants = PhysicalConstants()) -> float:
    return BoxIntegrator(mesh, dofmap, spec, constants)(state)


def field_snapshot(state, hierarchy, from_level: int, to_level: int) -> np.ndarray:
    """Interpolate a state vector onto a finer reference level."""
    if to_level < from_level:
        raise ValueError("reference level must not be coarser than the state level")
    return hierarchy.lift(state, from_level, to_level)


# ---------------------------------------------------------------------------
# field output
# ---------------------------------------------------------------------------

def write_vtk_snapshot(path, mesh: MeshLevel, dofmap: DofMap,
                       state: np.ndarray, title: str = "snapshot"):
    """Legacy ASCII VTK unstructured grid with point scalars c, p.

    Fracture vertices emit one geometric point per bulk side plus one for
    the fracture unknowns, so the discontinuity is visible; cell data
    'side' marks the two bulk sides (+1 / -1) and fracture line cells (0).
    """
    from fracmlmc.mesh import V_PLAIN, V_SPLIT, V_TIP

    point_ids: dict[tuple[int, int], int] = {}
    points, c_vals, p_vals = [], [], []

    def add_point(v: int, tag: int, cdof: int, pdof: int) -> int:
        key = (v, tag)
        if key not in point_ids:
            point_ids[key] = len(points)
            points.append(mesh.vertices[v])
            c_vals.append(state[cdof])
            p_vals.append(state[pdof])
        return point_ids[key]

    def bulk_point(v: int, side: int) -> int:
        kind = dofmap.vertex_kind[v]
        tag = side if kind == V_SPLIT else 0
        return add_point(v, tag, dofmap.dof_c(v, side), dofmap.dof_p(v, side))

    cells, cell_types, cell_sides = [], [], []
    sides = mesh.side_of(mesh.element_barycenters())
    for uid in range(mesh.n_elements):
        conn = mesh.element_vertices(uid)
        side = int(sides[uid]) or 1
        ids = [bulk_point(int(v), side) for v in conn]
        cells.append(ids)
        cell_types.append(5 if len(conn) == 3 else 9)
        cell_sides.append(side)
    for a, b in mesh.fracture_edges:
        ids = [add_point(int(v), 2, dofmap.dof_cf(int(v)), dofmap.dof_pf(int(v)))
               for v in (a, b)]
        cells.append(ids)
        cell_types.append(3)
        cell_sides.append(0)

    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(points)} double\n")
        for x, y in points:
            fh.write(f"{x:.12g} {y:.12g} 0\n")
        size = sum(len(c) + 1 for c in cells)
        fh.write(f"CELLS {len(cells)} {size}\n")
        for c in cells:
            fh.write(" ".join(str(i) for i in [len(c), *c]) + "\n")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        for t in cell_types:
            fh.write(f"{t}\n")
        fh.write(f"POINT_DATA {len(points)}\n")
        fh.write("SCALARS c double 1\nLOOKUP_TABLE default\n")
        for v in c_vals:
            fh.write(f"{v:.12g}\n")
        fh.write("SCALARS p double 1\nLOOKUP_TABLE default\n")
        for v in p_vals:
            fh.write(f"{v:.12g}\n")
        fh.write(f"CELL_DATA {len(cells)}\n")
        fh.write("SCALARS side int 1\nLOOKUP_TABLE default\n")
        for s in cell_sides:
            fh.write(f"{s}\n")
