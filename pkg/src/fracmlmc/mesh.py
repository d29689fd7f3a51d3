"""Conforming 2D grid hierarchy with an embedded fracture polyline.

The aquifer domain is covered by triangles and quadrilaterals; the
fracture is a chain of element edges running from an immersed tip to the
outer boundary.  Regular refinement (1:4 splits) keeps the polyline
resolved on every level.  Degrees of freedom: two per vertex (mass
fraction, pressure); vertices on the fracture carry additional slots for
the second bulk side and for the fracture unknowns, so the discrete
solution may jump across the fracture while the geometry stays
single-valued.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MeshError",
    "MeshLevel",
    "DofMap",
    "PointLocation",
    "MeshHierarchy",
    "load_coarse_mesh",
    "parse_mesh_text",
    "refine",
    "build_dof_map",
    "locate_point",
    "build_transfer",
]

BOUNDARY_MARKERS = ("left", "right", "top", "bottom")

# vertex kinds in a DofMap
V_PLAIN = 0   # 2 dofs: (c, p)
V_TIP = 1     # 4 dofs: (c, p, c_f, p_f) -- immersed fracture tip
V_SPLIT = 2   # 6 dofs: (c1, p1, c2, p2, c_f, p_f)

_COLLINEAR_TOL = 1e-12


class MeshError(ValueError):
    """Raised for parse errors and geometric invariant violations."""


def _polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True)
class MeshLevel:
    """One grid of the hierarchy (level 0 is the loaded coarse grid)."""

    level: int
    vertices: np.ndarray          # (V, 2) float
    triangles: np.ndarray         # (T, 3) int, counterclockwise
    quads: np.ndarray             # (Q, 4) int, counterclockwise
    fracture_chain: np.ndarray    # (Nf,) vertex ids, tip first, boundary last
    boundary_edges: np.ndarray    # (B, 2) int
    boundary_markers: np.ndarray  # (B,) int, index into BOUNDARY_MARKERS
    h: float                      # characteristic size, h0 * 2**(-level)
    vertex_parents: np.ndarray    # (V, 4) int, -1 padded; self for level 0
    element_parents: np.ndarray   # (T + Q,) int, unified coarse ids; self on level 0

    def __post_init__(self):
        for name in ("vertices", "triangles", "quads", "fracture_chain",
                     "boundary_edges", "boundary_markers", "vertex_parents",
                     "element_parents"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles) + len(self.quads)

    @property
    def fracture_edges(self) -> np.ndarray:
        """(F, 2) vertex-id pairs, ordered tip to boundary."""
        ch = self.fracture_chain
        if len(ch) < 2:
            return np.empty((0, 2), dtype=ch.dtype)
        return np.column_stack([ch[:-1], ch[1:]])

    def element_vertices(self, unified_id: int) -> np.ndarray:
        t = len(self.triangles)
        if unified_id < t:
            return self.triangles[unified_id]
        return self.quads[unified_id - t]

    def fracture_line(self):
        """(origin, unit direction) of the straight fracture, or None."""
        if len(self.fracture_chain) < 2:
            return None
        a = self.vertices[self.fracture_chain[0]]
        b = self.vertices[self.fracture_chain[-1]]
        d = b - a
        return a, d / np.hypot(d[0], d[1])

    def side_of(self, points: np.ndarray) -> np.ndarray:
        """+1 / -1 for the two fracture sides, 0 on the line (no fracture: +1).

        Side +1 lies to the left of the tip-to-boundary direction.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        line = self.fracture_line()
        if line is None:
            return np.ones(len(pts), dtype=np.int8)
        origin, d = line
        cross = d[0] * (pts[:, 1] - origin[1]) - d[1] * (pts[:, 0] - origin[0])
        out = np.zeros(len(pts), dtype=np.int8)
        out[cross > _COLLINEAR_TOL] = 1
        out[cross < -_COLLINEAR_TOL] = -1
        return out

    def element_barycenters(self) -> np.ndarray:
        centers = np.empty((self.n_elements, 2))
        t = len(self.triangles)
        if t:
            centers[:t] = self.vertices[self.triangles].mean(axis=1)
        if len(self.quads):
            centers[t:] = self.vertices[self.quads].mean(axis=1)
        return centers

    def domain_area(self) -> float:
        area = 0.0
        for conn in (self.triangles, self.quads):
            for el in conn:
                area += _polygon_area(self.vertices[el])
        return area

    def fracture_length(self) -> float:
        ch = self.fracture_chain
        if len(ch) < 2:
            return 0.0
        seg = np.diff(self.vertices[ch], axis=0)
        return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


@dataclass(frozen=True)
class DofMap:
    """Slot layout of all unknowns on one mesh level.

    Per-vertex blocks, in vertex-id order:
      plain vertex   [c, p]
      fracture tip   [c, p, c_f, p_f]
      split vertex   [c_side1, p_side1, c_side2, p_side2, c_f, p_f]
    """

    n: int
    vertex_kind: np.ndarray   # (V,) uint8
    base: np.ndarray          # (V,) int, first dof of the vertex block

    def __post_init__(self):
        self.vertex_kind.setflags(write=False)
        self.base.setflags(write=False)

    def block_size(self, v: int) -> int:
        return (2, 4, 6)[self.vertex_kind[v]]

    def dof_c(self, v: int, side: int = 1) -> int:
        if self.vertex_kind[v] == V_SPLIT and side == -1:
            return self.base[v] + 2
        return self.base[v]

    def dof_p(self, v: int, side: int = 1) -> int:
        return self.dof_c(v, side) + 1

    def dof_cf(self, v: int) -> int:
        kind = self.vertex_kind[v]
        if kind == V_TIP:
            return self.base[v] + 2
        if kind == V_SPLIT:
            return self.base[v] + 4
        raise KeyError(f"vertex {v} carries no fracture dofs")

    def dof_pf(self, v: int) -> int:
        return self.dof_cf(v) + 1

    def c_dofs_for_side(self, side: int) -> np.ndarray:
        """(V,) array: the c-dof of every vertex as seen from one bulk side."""
        out = self.base.copy()
        if side == -1:
            out[self.vertex_kind == V_SPLIT] += 2
        return out

    def bulk_c_dofs(self) -> np.ndarray:
        """All bulk mass-fraction dofs (both sides of split vertices)."""
        extra = self.base[self.vertex_kind == V_SPLIT] + 2
        return np.sort(np.concatenate([self.base, extra]))

    def fracture_c_dofs(self) -> np.ndarray:
        tips = self.base[self.vertex_kind == V_TIP] + 2
        splits = self.base[self.vertex_kind == V_SPLIT] + 4
        return np.sort(np.concatenate([tips, splits]))

    def all_c_dofs(self) -> np.ndarray:
        return np.sort(np.concatenate([self.bulk_c_dofs(), self.fracture_c_dofs()]))

    def dof_vertex(self) -> np.ndarray:
        """(n,) map from dof index to owning vertex id."""
        out = np.empty(self.n, dtype=np.int64)
        for v in range(len(self.base)):
            out[self.base[v]:self.base[v] + self.block_size(v)] = v
        return out


# ---------------------------------------------------------------------------
# parsing and validation
# ---------------------------------------------------------------------------

def parse_mesh_text(text: str) -> MeshLevel:
    """Parse the line-oriented coarse-mesh format (see README for grammar)."""
    sections: dict[str, list[list[str]]] = {
        "VERTICES": [], "ELEMENTS": [], "FRACTURE_EDGES": [], "BOUNDARY_EDGES": []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line in sections:
            current = line
            continue
        if current is None:
            raise MeshError(f"line {lineno}: content before any section header")
        sections[current].append(line.split())

    if not sections["VERTICES"]:
        raise MeshError("missing VERTICES section")
    if not sections["ELEMENTS"]:
        raise MeshError("missing ELEMENTS section")

    try:
        vid = np.array([int(r[0]) for r in sections["VERTICES"]])
        coords = np.array([[float(r[1]), float(r[2])] for r in sections["VERTICES"]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed vertex line: {exc}") from None
    nv = len(vid)
    if sorted(vid.tolist()) != list(range(nv)):
        raise MeshError("vertex ids must be 0..V-1")
    vertices = np.empty((nv, 2))
    vertices[vid] = coords

    tris, quads, order = [], [], []
    for row in sections["ELEMENTS"]:
        try:
            ids = [int(t) for t in row]
        except ValueError as exc:
            raise MeshError(f"malformed element line: {exc}") from None
        eid, conn = ids[0], ids[1:]
        if len(conn) == 3:
            order.append(("t", len(tris), eid))
            tris.append(conn)
        elif len(conn) == 4:
            order.append(("q", len(quads), eid))
            quads.append(conn)
        else:
            raise MeshError(f"element {eid}: need 3 or 4 vertices")

    frac_pairs = []
    for row in sections["FRACTURE_EDGES"]:
        if len(row) != 2:
            raise MeshError("fracture edge lines need exactly 2 vertex ids")
        frac_pairs.append((int(row[0]), int(row[1])))

    bedges, bmarkers = [], []
    for row in sections["BOUNDARY_EDGES"]:
        if len(row) != 3 or row[2] not in BOUNDARY_MARKERS:
            raise MeshError(f"bad boundary edge line {row!r}")
        bedges.append((int(row[0]), int(row[1])))
        bmarkers.append(BOUNDARY_MARKERS.index(row[2]))

    chain = _chain_from_pairs(frac_pairs)
    mesh = MeshLevel(
        level=0,
        vertices=vertices,
        triangles=np.array(tris, dtype=np.int64).reshape(-1, 3),
        quads=np.array(quads, dtype=np.int64).reshape(-1, 4),
        fracture_chain=chain,
        boundary_edges=np.array(bedges, dtype=np.int64).reshape(-1, 2),
        boundary_markers=np.array(bmarkers, dtype=np.int64),
        h=0.0,
        vertex_parents=np.column_stack(
            [np.arange(nv), -np.ones((nv, 3), dtype=np.int64)]),
        element_parents=np.arange(len(tris) + len(quads)),
    )
    _validate(mesh)
    h0 = _max_diameter(mesh)
    return MeshLevel(**{**_asdict(mesh), "h": h0})


def _asdict(m: MeshLevel) -> dict:
    return dict(level=m.level, vertices=m.vertices, triangles=m.triangles,
                quads=m.quads, fracture_chain=m.fracture_chain,
                boundary_edges=m.boundary_edges, boundary_markers=m.boundary_markers,
                h=m.h, vertex_parents=m.vertex_parents,
                element_parents=m.element_parents)


def _chain_from_pairs(pairs: list[tuple[int, int]]) -> np.ndarray:
    if not pairs:
        return np.empty(0, dtype=np.int64)
    chain = [pairs[0][0], pairs[0][1]]
    for a, b in pairs[1:]:
        if a != chain[-1]:
            raise MeshError(
                f"fracture edges must chain tip to boundary; edge ({a},{b}) "
                f"does not continue from vertex {chain[-1]}")
        chain.append(b)
    if len(set(chain)) != len(chain):
        raise MeshError("fracture polyline revisits a vertex")
    return np.array(chain, dtype=np.int64)


def _max_diameter(mesh: MeshLevel) -> float:
    best = 0.0
    for conn in (mesh.triangles, mesh.quads):
        for el in conn:
            pts = mesh.vertices[el]
            for i in range(len(el)):
                for j in range(i + 1, len(el)):
                    best = max(best, float(np.hypot(*(pts[i] - pts[j]))))
    return best


def _element_edge_multiset(mesh: MeshLevel) -> dict[tuple[int, int], int]:
    count: dict[tuple[int, int], int] = {}
    for conn in (mesh.triangles, mesh.quads):
        for el in conn:
            k = len(el)
            for i in range(k):
                a, b = int(el[i]), int(el[(i + 1) % k])
                key = (a, b) if a < b else (b, a)
                count[key] = count.get(key, 0) + 1
    return count


def _validate(mesh: MeshLevel) -> None:
    nv = mesh.n_vertices
    for conn, kind in ((mesh.triangles, "triangle"), (mesh.quads, "quadrilateral")):
        if conn.size and (conn.min() < 0 or conn.max() >= nv):
            raise MeshError(f"{kind} references unknown vertex id")

    # positive area, convex and counterclockwise
    uid = 0
    for conn in (mesh.triangles, mesh.quads):
        for el in conn:
            pts = mesh.vertices[el]
            if _polygon_area(pts) <= 1e-16:
                raise MeshError(f"degenerate element {uid}")
            k = len(el)
            for i in range(k):
                p0, p1, p2 = pts[i - 1], pts[i], pts[(i + 1) % k]
                u, w = p1 - p0, p2 - p1
                if u[0] * w[1] - u[1] * w[0] <= 1e-16:
                    raise MeshError(f"degenerate element {uid} (non-convex corner)")
            uid += 1

    # conformity: every element edge is interior (count 2) or boundary (count 1)
    counts = _element_edge_multiset(mesh)
    declared = {tuple(sorted(e)) for e in map(tuple, mesh.boundary_edges)}
    for edge, c in counts.items():
        if c > 2:
            raise MeshError(f"edge {edge} shared by more than two elements")
        if c == 1 and edge not in declared:
            raise MeshError(f"edge {edge} on the hull but not declared as boundary")
        if c == 2 and edge in declared:
            raise MeshError(f"declared boundary edge {edge} is interior")
    for edge in declared:
        if edge not in counts:
            raise MeshError(f"boundary edge {edge} is not an element edge")

    # boundary markers must match the bounding-box sides
    if len(mesh.boundary_edges):
        xmin, ymin = mesh.vertices.min(axis=0)
        xmax, ymax = mesh.vertices.max(axis=0)
        target = {0: (0, xmin), 1: (0, xmax), 2: (1, ymax), 3: (1, ymin)}
        for (a, b), mk in zip(mesh.boundary_edges, mesh.boundary_markers):
            axis, value = target[int(mk)]
            for v in (a, b):
                if abs(mesh.vertices[v, axis] - value) > 1e-12:
                    raise MeshError(
                        f"boundary edge ({a},{b}) marked "
                        f"'{BOUNDARY_MARKERS[mk]}' is off that side")

    # fracture polyline: element edges, straight, tip interior, end on boundary
    ch = mesh.fracture_chain
    if len(ch):
        if ch.min() < 0 or ch.max() >= nv:
            raise MeshError("fracture edge references unknown vertex id")
        boundary_vertices = set(np.unique(mesh.boundary_edges)) \
            if len(mesh.boundary_edges) else set()
        counts = _element_edge_multiset(mesh)
        for a, b in mesh.fracture_edges:
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            if counts.get(key, 0) != 2:
                raise MeshError(
                    f"fracture edge ({a},{b}) must be shared by exactly two elements")
        pa = mesh.vertices[ch[0]]
        pb = mesh.vertices[ch[-1]]
        d = pb - pa
        length = float(np.hypot(d[0], d[1]))
        if length <= 0:
            raise MeshError("fracture endpoints coincide")
        d = d / length
        for v in ch:
            off = mesh.vertices[v] - pa
            if abs(d[0] * off[1] - d[1] * off[0]) > _COLLINEAR_TOL:
                raise MeshError(f"fracture vertex {v} off the straight polyline")
        if int(ch[0]) in boundary_vertices:
            raise MeshError("fracture tip must be immersed (not on the boundary)")
        if int(ch[-1]) not in boundary_vertices:
            raise MeshError("fracture polyline must end on the boundary")


def load_coarse_mesh(path) -> MeshLevel:
    """Read and validate a level-0 mesh from the ASCII format."""
    text = Path(path).read_text()
    return parse_mesh_text(text)


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def refine(mesh: MeshLevel) -> MeshLevel:
    """Regular 1:4 refinement; fracture and boundary edges split in half."""
    nv = mesh.n_vertices
    edges = []
    for conn in (mesh.triangles, mesh.quads):
        for el in conn:
            k = len(el)
            for i in range(k):
                a, b = int(el[i]), int(el[(i + 1) % k])
                edges.append((a, b) if a < b else (b, a))
    edges = np.unique(np.array(edges, dtype=np.int64).reshape(-1, 2), axis=0)
    edge_index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}

    def mid(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        return nv + edge_index[key]

    n_edges = len(edges)
    n_quads = len(mesh.quads)
    vertices = np.empty((nv + n_edges + n_quads, 2))
    vertices[:nv] = mesh.vertices
    vertices[nv:nv + n_edges] = 0.5 * (mesh.vertices[edges[:, 0]]
                                       + mesh.vertices[edges[:, 1]])
    parents = -np.ones((len(vertices), 4), dtype=np.int64)
    parents[:nv, 0] = np.arange(nv)
    parents[nv:nv + n_edges, :2] = edges

    tris, quads = [], []
    tri_par, quad_par = [], []
    for t, el in enumerate(mesh.triangles):
        a, b, c = map(int, el)
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)])
        tri_par.extend([t] * 4)
    t_off = len(mesh.triangles)
    for q, el in enumerate(mesh.quads):
        a, b, c, d = map(int, el)
        o = nv + n_edges + q
        vertices[o] = mesh.vertices[el].mean(axis=0)
        parents[o] = el
        mab, mbc, mcd, mda = mid(a, b), mid(b, c), mid(c, d), mid(d, a)
        quads.extend([(a, mab, o, mda), (mab, b, mbc, o),
                      (o, mbc, c, mcd), (mda, o, mcd, d)])
        quad_par.extend([t_off + q] * 4)

    chain = []
    for a, b in mesh.fracture_edges:
        chain.extend([int(a), mid(int(a), int(b))])
    if len(mesh.fracture_chain):
        chain.append(int(mesh.fracture_chain[-1]))

    bedges, bmarkers = [], []
    for (a, b), mk in zip(mesh.boundary_edges, mesh.boundary_markers):
        m = mid(int(a), int(b))
        bedges.extend([(int(a), m), (m, int(b))])
        bmarkers.extend([int(mk), int(mk)])

    return MeshLevel(
        level=mesh.level + 1,
        vertices=vertices,
        triangles=np.array(tris, dtype=np.int64).reshape(-1, 3),
        quads=np.array(quads, dtype=np.int64).reshape(-1, 4),
        fracture_chain=np.array(chain, dtype=np.int64),
        boundary_edges=np.array(bedges, dtype=np.int64).reshape(-1, 2),
        boundary_markers=np.array(bmarkers, dtype=np.int64),
        h=mesh.h / 2.0,
        vertex_parents=parents,
        element_parents=np.concatenate([
            np.array(tri_par, dtype=np.int64),
            np.array(quad_par, dtype=np.int64)]) if (tri_par or quad_par)
        else np.empty(0, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# degrees of freedom
# ---------------------------------------------------------------------------

def build_dof_map(mesh: MeshLevel) -> DofMap:
    """Assign dof slots; ordering is a pure function of the mesh."""
    nv = mesh.n_vertices
    kind = np.zeros(nv, dtype=np.uint8)
    ch = mesh.fracture_chain
    if len(ch):
        kind[ch[0]] = V_TIP
        kind[ch[1:]] = V_SPLIT
    sizes = np.choose(kind, [2, 4, 6])
    base = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return DofMap(n=int(sizes.sum()), vertex_kind=kind, base=base)


# ---------------------------------------------------------------------------
# point location
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointLocation:
    element: int              # unified element id
    vertex_ids: np.ndarray    # (3,) or (4,)
    weights: np.ndarray       # interpolation weights, sum to 1
    side: int                 # fracture side of the element (+1 / -1)


def _bilinear_inverse(corners: np.ndarray, point: np.ndarray):
    """Reference coordinates (xi, eta) in [0,1]^2 of a point in a quad."""
    xi = np.array([0.5, 0.5])
    for _ in range(30):
        s, t = xi
        shape = np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
        r = shape @ corners - point
        if abs(r[0]) + abs(r[1]) < 1e-14:
            break
        ds = np.array([-(1 - t), (1 - t), t, -t]) @ corners
        dt = np.array([-(1 - s), -s, s, (1 - s)]) @ corners
        jac = np.column_stack([ds, dt])
        xi = xi - np.linalg.solve(jac.T, r)
    return xi


def locate_point(mesh: MeshLevel, point, tol: float = 1e-10) -> PointLocation:
    """Containing element and interpolation weights for a physical point.

    Points on the fracture polyline are rejected (the field is two-valued
    there); callers must offset to the intended side.
    """
    pt = np.asarray(point, dtype=float)
    line = mesh.fracture_line()
    if line is not None:
        origin, d = line
        off = pt - origin
        s = float(off @ d)
        seg_len = float(np.hypot(*(mesh.vertices[mesh.fracture_chain[-1]] - origin)))
        dist = abs(d[0] * off[1] - d[1] * off[0])
        if dist <= tol and -tol <= s <= seg_len + tol:
            raise MeshError(f"point {tuple(pt)} lies on the fracture")

    t = len(mesh.triangles)
    for e, el in enumerate(mesh.triangles):
        pts = mesh.vertices[el]
        area = _polygon_area(pts)
        w = np.empty(3)
        for i in range(3):
            sub = pts.copy()
            sub[i] = pt
            w[i] = _polygon_area(sub) / area
        if np.all(w >= -tol):
            side = int(mesh.side_of(pts.mean(axis=0)[None, :])[0]) or 1
            return PointLocation(e, el.copy(), w / w.sum(), side)
    for q, el in enumerate(mesh.quads):
        pts = mesh.vertices[el]
        if not (pts[:, 0].min() - tol <= pt[0] <= pts[:, 0].max() + tol
                and pts[:, 1].min() - tol <= pt[1] <= pts[:, 1].max() + tol):
            continue
        s, u = _bilinear_inverse(pts, pt)
        if -tol <= s <= 1 + tol and -tol <= u <= 1 + tol:
            w = np.array([(1 - s) * (1 - u), s * (1 - u), s * u, (1 - s) * u])
            side = int(mesh.side_of(pts.mean(axis=0)[None, :])[0]) or 1
            return PointLocation(t + q, el.copy(), w / w.sum(), side)
    raise MeshError(f"point {tuple(pt)} outside the meshed domain")


# ---------------------------------------------------------------------------
# transfer operators
# ---------------------------------------------------------------------------

def _slot_on_parent(coarse_dm: DofMap, parent: int, slot_kind: str, side: int) -> int:
    """Coarse dof feeding a fine slot; side resolves split parents."""
    kind = coarse_dm.vertex_kind[parent]
    if slot_kind == "c":
        return coarse_dm.dof_c(parent, side if kind == V_SPLIT else 1)
    if slot_kind == "p":
        return coarse_dm.dof_p(parent, side if kind == V_SPLIT else 1)
    if slot_kind == "cf":
        return coarse_dm.dof_cf(parent)
    if slot_kind == "pf":
        return coarse_dm.dof_pf(parent)
    raise KeyError(slot_kind)


def build_transfer(coarse: MeshLevel, fine: MeshLevel,
                   coarse_dm: DofMap | None = None,
                   fine_dm: DofMap | None = None) -> sp.csr_matrix:
    """Interpolation from coarse dofs to fine dofs (rows sum to 1).

    Bulk slots of split vertices interpolate only from matching-side
    parent copies; fracture slots only from fracture slots.
    """
    if fine.level != coarse.level + 1 or fine.n_vertices < coarse.n_vertices \
            or not np.array_equal(fine.vertices[:coarse.n_vertices], coarse.vertices):
        raise MeshError("meshes are not in a parent-child relation")
    if coarse_dm is None:
        coarse_dm = build_dof_map(coarse)
    if fine_dm is None:
        fine_dm = build_dof_map(fine)

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    fine_sides = None
    for v in range(fine.n_vertices):
        parents = fine.vertex_parents[v]
        parents = parents[parents >= 0]
        w = 1.0 / len(parents)
        kind = fine_dm.vertex_kind[v]
        if kind == V_PLAIN:
            side = None
            if any(coarse_dm.vertex_kind[p] == V_SPLIT for p in parents):
                if fine_sides is None:
                    fine_sides = fine.side_of(fine.vertices)
                side = int(fine_sides[v])
                if side == 0:
                    raise MeshError(
                        f"fine vertex {v} sits on the fracture line but is "
                        "not a fracture vertex; cannot pick a parent side")
            for p in parents:
                add(fine_dm.dof_c(v), _slot_on_parent(coarse_dm, int(p), "c", side), w)
                add(fine_dm.dof_p(v), _slot_on_parent(coarse_dm, int(p), "p", side), w)
        elif kind == V_TIP:
            # the tip is always a kept coarse vertex
            p = int(parents[0])
            add(fine_dm.dof_c(v), coarse_dm.dof_c(p), 1.0)
            add(fine_dm.dof_p(v), coarse_dm.dof_p(p), 1.0)
            add(fine_dm.dof_cf(v), coarse_dm.dof_cf(p), 1.0)
            add(fine_dm.dof_pf(v), coarse_dm.dof_pf(p), 1.0)
        else:
            for p in parents:
                p = int(p)
                add(fine_dm.dof_c(v, 1), _slot_on_parent(coarse_dm, p, "c", 1), w)
                add(fine_dm.dof_p(v, 1), _slot_on_parent(coarse_dm, p, "p", 1), w)
                add(fine_dm.dof_c(v, -1), _slot_on_parent(coarse_dm, p, "c", -1), w)
                add(fine_dm.dof_p(v, -1), _slot_on_parent(coarse_dm, p, "p", -1), w)
                add(fine_dm.dof_cf(v), coarse_dm.dof_cf(p), w)
                add(fine_dm.dof_pf(v), coarse_dm.dof_pf(p), w)

    op = sp.csr_matrix((vals, (rows, cols)), shape=(fine_dm.n, coarse_dm.n))
    op.sum_duplicates()
    return op


# ---------------------------------------------------------------------------
# hierarchy
# ---------------------------------------------------------------------------

class MeshHierarchy:
    """Immutable stack of regularly refined levels with transfer operators."""

    def __init__(self, coarse: MeshLevel, max_level: int):
        levels = [coarse]
        for _ in range(max_level):
            levels.append(refine(levels[-1]))
        self.levels: list[MeshLevel] = levels
        self.dofmaps: list[DofMap] = [build_dof_map(m) for m in levels]
        self.transfers: list[sp.csr_matrix] = [
            build_transfer(levels[i], levels[i + 1],
                           self.dofmaps[i], self.dofmaps[i + 1])
            for i in range(max_level)]

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def n_dofs(self, level: int) -> int:
        return self.dofmaps[level].n

    def lift(self, vec: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
        """Interpolate a dof vector up the hierarchy."""
        if not 0 <= from_level <= to_level <= self.max_level:
            raise ValueError("levels outside the hierarchy")
        out = vec
        for lvl in range(from_level, to_level):
            out = self.transfers[lvl] @ out
        return out
