"""Simplicial meshes: construction, nested refinement, grading, file IO.

Meshes are plain node/element arrays with explicit boundary facets.
Construction is deterministic: the same domain and parameters always
produce the same arrays, so reports built on top of them are
reproducible byte for byte.

Refinement is nested (edge-midpoint subdivision: quadrisection of
triangles, octasection of tetrahedra). Grading toward corner
singularities is a radial map applied inside disjoint vertex collars;
the grading parameters travel with the mesh so that further refinement
can undo the map, refine the underlying ungraded mesh, and reapply it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import (DEFAULT_NODE_CAP, GEOM_TOL, MIN_ANGLE_FLOOR,
                     SINGULAR_NODE_TOL)
from .errors import GeometryError, MeshFormatError, MeshSizeError
from .geometry import Polyhedron

MESH_MAGIC = "KLABMESH"
MESH_VERSION = 1


@dataclass(frozen=True)
class GradingSpec:
    """Radial grading toward corner points.

    Inside a collar of the given radius R around each center, the
    distance d to the center is remapped to R * (d / R) ** (1 / kappa)
    with 0 < kappa <= 1. kappa 1 is the identity; smaller values
    concentrate nodes at the centers, so elements at distance d from a
    center shrink like h * (d / R) ** (1 - kappa) and the layer nearest
    a center has size of order h ** (1 / kappa). Collars must be
    pairwise disjoint and clear of non-incident boundary faces.
    """

    kappa: float
    radius: float
    centers: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not 0.0 < self.kappa <= 1.0:
            raise GeometryError("grading kappa must lie in (0, 1]")
        if self.radius <= 0.0:
            raise GeometryError("grading radius must be positive")

    def apply(self, nodes: np.ndarray) -> np.ndarray:
        return self._map(nodes, 1.0 / self.kappa)

    def unapply(self, nodes: np.ndarray) -> np.ndarray:
        return self._map(nodes, self.kappa)

    def _map(self, nodes, exponent):
        out = np.array(nodes, dtype=float)
        for c in self.centers:
            rel = out - np.asarray(c)
            d = np.linalg.norm(rel, axis=1)
            sel = (d < self.radius) & (d > 0.0)
            scale = (d[sel] / self.radius) ** (exponent - 1.0)
            out[sel] = np.asarray(c) + rel[sel] * scale[:, None]
        return out


@dataclass
class SimplicialMesh:
    """Conforming simplicial mesh with explicit boundary facets."""

    dimension: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary_facets: np.ndarray
    grading: GradingSpec | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    def boundary_node_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_nodes, dtype=bool)
        if len(self.boundary_facets):
            mask[self.boundary_facets.ravel()] = True
        return mask

    def element_volumes(self) -> np.ndarray:
        vols, _ = kernels.simplex_geometry(self.nodes, self.elements)
        return vols

    def element_diameters(self) -> np.ndarray:
        el = self.nodes[self.elements]
        k = el.shape[1]
        d2 = np.zeros(len(el))
        for i in range(k):
            for j in range(i + 1, k):
                diff = el[:, i, :] - el[:, j, :]
                d2 = np.maximum(d2, np.einsum("ed,ed->e", diff, diff))
        return np.sqrt(d2)

    def h_max(self) -> float:
        return float(self.element_diameters().max())

    def h_min(self) -> float:
        return float(self.element_diameters().min())

    def total_volume(self) -> float:
        return float(kernels.neumaier_sum(self.element_volumes()))

    def validate(self) -> None:
        n = self.num_nodes
        if n > DEFAULT_NODE_CAP:
            raise MeshSizeError(f"{n} nodes exceeds the cap {DEFAULT_NODE_CAP}")
        if self.elements.ndim != 2 or self.elements.shape[1] != self.dimension + 1:
            raise MeshFormatError("element arity does not match dimension")
        if self.elements.min(initial=0) < 0 or self.elements.max(initial=-1) >= n:
            raise MeshFormatError("element references a node out of range")
        for row in self.elements:
            if len(set(row.tolist())) != len(row):
                raise MeshFormatError("element with a repeated node")
        if len(self.boundary_facets):
            if self.boundary_facets.min() < 0 or self.boundary_facets.max() >= n:
                raise MeshFormatError("boundary facet references a node out of range")
        vols = self.element_volumes()
        if vols.min(initial=np.inf) <= 0.0:
            raise GeometryError("mesh contains a degenerate or inverted element")


def _oriented(dimension: int, nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Swap the last two nodes of any negatively oriented simplex."""
    elements = np.ascontiguousarray(elements, dtype=np.int64)
    vols, _ = kernels.simplex_geometry(nodes, elements)
    bad = vols < 0
    if np.any(bad):
        elements = elements.copy()
        elements[bad] = elements[bad][:, list(range(dimension - 1)) + [dimension, dimension - 1]]
    return elements


def derive_boundary_facets(elements: np.ndarray) -> np.ndarray:
    """Facets that belong to exactly one simplex, sorted deterministically."""
    k = elements.shape[1]
    count: dict = {}
    for row in elements:
        for drop in range(k):
            facet = tuple(sorted(v for t, v in enumerate(row) if t != drop))
            count[facet] = count.get(facet, 0) + 1
    boundary = sorted(f for f, c in count.items() if c == 1)
    return np.array(boundary, dtype=np.int64).reshape(-1, k - 1)


# ---------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------


def build_mesh(domain: Polyhedron, h: float,
               grading: GradingSpec | None = None) -> SimplicialMesh:
    """Mesh the domain with target grid spacing h.

    Element diameters are at most sqrt(d) * h. Axis-aligned domains are
    meshed by structured subdivision of their grid cells; other
    polygons by ear clipping followed by uniform quadrisection.
    """
    if h <= 0.0:
        raise MeshSizeError("mesh spacing h must be positive")
    box = np.ptp(np.asarray(domain.vertices, dtype=float), axis=0)
    estimate = float(np.prod(box / h))
    if estimate > DEFAULT_NODE_CAP:
        raise MeshSizeError(
            f"h = {h} implies about {estimate:.3g} nodes, beyond the cap "
            f"{DEFAULT_NODE_CAP}")
    if domain.dimension == 2:
        if domain.cells is not None:
            mesh = _structured_mesh_2d(domain, h)
        else:
            mesh = _ear_clip_mesh(domain, h)
    else:
        mesh = _kuhn_mesh(domain, h)
    mesh.provenance = {"generator": domain.generator, "h": h}
    mesh.validate()
    if grading is not None:
        mesh = _apply_grading(mesh, grading)
    _assert_shape_regular(mesh)
    return mesh


class _NodePool:
    """Deduplicating node registry keyed by rounded coordinates."""

    def __init__(self):
        self.index: dict = {}
        self.coords: list = []

    def add(self, p) -> int:
        key = tuple(round(float(c), 12) for c in p)
        if key not in self.index:
            self.index[key] = len(self.coords)
            self.coords.append([float(c) for c in p])
        return self.index[key]

    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)


def _structured_mesh_2d(domain: Polyhedron, h: float) -> SimplicialMesh:
    pool = _NodePool()
    tris: list = []
    for lo, hi in domain.cells:
        nx = max(1, math.ceil((hi[0] - lo[0]) / h - 1e-12))
        ny = max(1, math.ceil((hi[1] - lo[1]) / h - 1e-12))
        xs = lo[0] + (hi[0] - lo[0]) * np.arange(nx + 1) / nx
        ys = lo[1] + (hi[1] - lo[1]) * np.arange(ny + 1) / ny
        ids = np.empty((nx + 1, ny + 1), dtype=np.int64)
        for i in range(nx + 1):
            for j in range(ny + 1):
                ids[i, j] = pool.add((xs[i], ys[j]))
        for i in range(nx):
            for j in range(ny):
                sw, se = ids[i, j], ids[i + 1, j]
                nw, ne = ids[i, j + 1], ids[i + 1, j + 1]
                tris.append((sw, se, ne))
                tris.append((sw, ne, nw))
    nodes = pool.array()
    elements = _oriented(2, nodes, np.array(tris, dtype=np.int64))
    return SimplicialMesh(2, nodes, elements, derive_boundary_facets(elements))


def _ear_clip_mesh(domain: Polyhedron, h: float) -> SimplicialMesh:
    verts = domain.vertices
    tris = _ear_clip(verts)
    nodes = np.array(verts, dtype=float)
    elements = _oriented(2, nodes, np.array(tris, dtype=np.int64))
    mesh = SimplicialMesh(2, nodes, elements, derive_boundary_facets(elements))
    target = math.sqrt(2.0) * h
    while mesh.h_max() > target * (1 + 1e-12):
        mesh = refine(mesh)
    return mesh


def _ear_clip(verts: np.ndarray) -> list:
    """Triangulate a simple counterclockwise polygon by ear clipping."""
    remaining = list(range(len(verts)))
    tris = []
    guard = 0
    while len(remaining) > 3:
        guard += 1
        if guard > 10 * len(verts) ** 2:
            raise GeometryError("ear clipping failed; polygon may be invalid")
        clipped = False
        for pos in range(len(remaining)):
            i_prev = remaining[pos - 1]
            i_cur = remaining[pos]
            i_next = remaining[(pos + 1) % len(remaining)]
            a, b, c = verts[i_prev], verts[i_cur], verts[i_next]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= GEOM_TOL:
                continue
            ok = True
            for k in remaining:
                if k in (i_prev, i_cur, i_next):
                    continue
                if _in_triangle(verts[k], a, b, c):
                    ok = False
                    break
            if ok:
                tris.append((i_prev, i_cur, i_next))
                remaining.pop(pos)
                clipped = True
                break
        if not clipped:
            raise GeometryError("no ear found; polygon may be self-intersecting")
    tris.append(tuple(remaining))
    return tris


def _in_triangle(p, a, b, c, tol=1e-12) -> bool:
    def side(p1, p2):
        return (p2[0] - p1[0]) * (p[1] - p1[1]) - (p2[1] - p1[1]) * (p[0] - p1[0])

    s1, s2, s3 = side(a, b), side(b, c), side(c, a)
    return s1 >= -tol and s2 >= -tol and s3 >= -tol


_KUHN_ORDERS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def _kuhn_mesh(domain: Polyhedron, h: float) -> SimplicialMesh:
    """Six tetrahedra per grid cube, consistent across cube faces."""
    pool = _NodePool()
    tets: list = []
    for lo, hi in domain.cells:
        counts = [max(1, math.ceil((hi[d] - lo[d]) / h - 1e-12)) for d in range(3)]
        axes = [lo[d] + (hi[d] - lo[d]) * np.arange(counts[d] + 1) / counts[d]
                for d in range(3)]
        ids = np.empty((counts[0] + 1, counts[1] + 1, counts[2] + 1), dtype=np.int64)
        for i in range(counts[0] + 1):
            for j in range(counts[1] + 1):
                for k in range(counts[2] + 1):
                    ids[i, j, k] = pool.add((axes[0][i], axes[1][j], axes[2][k]))
        for i in range(counts[0]):
            for j in range(counts[1]):
                for k in range(counts[2]):
                    corner = np.array([i, j, k])
                    for order in _KUHN_ORDERS:
                        path = [corner.copy()]
                        for ax in order:
                            nxt = path[-1].copy()
                            nxt[ax] += 1
                            path.append(nxt)
                        tets.append(tuple(ids[tuple(p)] for p in path))
    nodes = pool.array()
    elements = _oriented(3, nodes, np.array(tets, dtype=np.int64))
    return SimplicialMesh(3, nodes, elements, derive_boundary_facets(elements))


# ---------------------------------------------------------------------
# refinement and grading
# ---------------------------------------------------------------------


def refine(mesh: SimplicialMesh, levels: int = 1,
           grading: GradingSpec | None = None) -> SimplicialMesh:
    """Nested edge-midpoint refinement, reapplying any grading map.

    A graded mesh is refined by pulling its nodes back through the
    inverse radial map, refining the ungraded mesh (midpoints of
    straight edges), and mapping forward again, so the graded family
    stays nested in the ungraded coordinates.
    """
    if levels < 1:
        raise MeshSizeError("refinement levels must be >= 1")
    if grading is not None and mesh.grading is not None and grading != mesh.grading:
        raise GeometryError("mesh already carries a different grading")
    spec = grading if grading is not None else mesh.grading

    nodes = mesh.nodes
    if mesh.grading is not None:
        nodes = mesh.grading.unapply(nodes)
    elements = mesh.elements
    facets = mesh.boundary_facets
    for _ in range(levels):
        nodes, elements, facets = _refine_once(mesh.dimension, nodes, elements, facets)
        if len(nodes) > DEFAULT_NODE_CAP:
            raise MeshSizeError(f"refinement exceeds the node cap {DEFAULT_NODE_CAP}")
    elements = _oriented(mesh.dimension, nodes, elements)
    out = SimplicialMesh(mesh.dimension, nodes, elements, facets,
                         provenance=dict(mesh.provenance))
    out.provenance["refined"] = out.provenance.get("refined", 0) + levels
    if spec is not None:
        out = _apply_grading(out, spec)
    _assert_shape_regular(out)
    return out


def _refine_once(dim, nodes, elements, facets):
    pool_coords = [tuple(p) for p in nodes]
    midpoint: dict = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in midpoint:
            p = 0.5 * (nodes[a] + nodes[b])
            midpoint[key] = len(pool_coords)
            pool_coords.append(tuple(p))
        return midpoint[key]

    children = []
    if dim == 2:
        for (a, b, c) in elements:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            children += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    else:
        for (x0, x1, x2, x3) in elements:
            m01, m02, m03 = mid(x0, x1), mid(x0, x2), mid(x0, x3)
            m12, m13, m23 = mid(x1, x2), mid(x1, x3), mid(x2, x3)
            children += [
                (x0, m01, m02, m03), (m01, x1, m12, m13),
                (m02, m12, x2, m23), (m03, m13, m23, x3),
                (m01, m02, m03, m13), (m01, m02, m12, m13),
                (m02, m03, m13, m23), (m02, m12, m13, m23),
            ]
    new_facets = []
    for f in facets:
        if dim == 2:
            a, b = f
            m = mid(a, b)
            new_facets += [(a, m), (m, b)]
        else:
            a, b, c = f
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_facets += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return (np.array(pool_coords, dtype=float),
            np.array(children, dtype=np.int64),
            np.array(new_facets, dtype=np.int64))


def _apply_grading(mesh: SimplicialMesh, spec: GradingSpec) -> SimplicialMesh:
    centers = np.array(spec.centers, dtype=float)
    if len(centers) > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        np.fill_diagonal(d, np.inf)
        if d.min() < 2 * spec.radius:
            raise GeometryError("grading collars overlap")
    out = SimplicialMesh(mesh.dimension, spec.apply(mesh.nodes), mesh.elements,
                         mesh.boundary_facets, grading=spec,
                         provenance=dict(mesh.provenance))
    vols = out.element_volumes()
    if vols.min(initial=np.inf) <= 0.0:
        raise GeometryError("grading map inverted an element; increase kappa or "
                            "reduce the collar radius")
    return out


def default_grading(domain: Polyhedron, kappa: float) -> GradingSpec:
    """Collars at every singular vertex, radius a quarter of the clearance."""
    sep = domain.min_singular_separation()
    clear = domain.vertex_clearance()
    radius = 0.25 * min(sep, clear)
    centers = tuple(tuple(float(c) for c in v) for v in domain.vertices)
    return GradingSpec(kappa=kappa, radius=radius, centers=centers)


def singular_node_mask(mesh: SimplicialMesh, domain: Polyhedron,
                       tol: float = SINGULAR_NODE_TOL) -> np.ndarray:
    """Nodes lying on the singular set (corners; edges and corners in 3D)."""
    pts = mesh.nodes
    d = np.full(len(pts), np.inf)
    if domain.dimension == 2:
        verts = domain.singular_vertex_array()
        dd, _ = kernels.nearest_points(pts, verts)
        d = np.minimum(d, dd)
    else:
        segs = domain.singular_segments()
        dd, _, _ = kernels.nearest_on_segments(pts, segs[:, 0], segs[:, 1])
        d = np.minimum(d, dd)
    return d <= tol


def _assert_shape_regular(mesh: SimplicialMesh) -> None:
    angle = minimum_angle(mesh)
    mesh.provenance["min_angle"] = angle
    if angle <= MIN_ANGLE_FLOOR:
        raise GeometryError(
            f"generated mesh has minimum angle {angle:.2e} rad, below the "
            f"shape-regularity floor {MIN_ANGLE_FLOOR}")


def minimum_angle(mesh: SimplicialMesh) -> float:
    """Shape-regularity measure, radians.

    Smallest interior angle over all triangles in 2D; smallest dihedral
    angle over all tetrahedra in 3D. The built-in generators keep this
    above config.MIN_ANGLE_FLOOR for the whole refined family because
    refinement is nested and the grading map has bounded anisotropy
    (the radial stretch is at most 1 / kappa inside a collar).
    """
    el = mesh.nodes[mesh.elements]
    worst = np.pi
    if mesh.dimension == 2:
        for i in range(3):
            u = el[:, (i + 1) % 3] - el[:, i]
            v = el[:, (i + 2) % 3] - el[:, i]
            dot = np.einsum("ed,ed->e", u, v)
            nrm = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            ang = np.arccos(np.clip(dot / nrm, -1.0, 1.0))
            worst = min(worst, float(ang.min()))
        return worst
    # Outward unit normal of the face opposite each vertex; every pair
    # of faces shares one edge, and the interior dihedral angle there
    # is arccos(-n1 . n2).
    normals = []
    for m in range(4):
        rest = [k for k in range(4) if k != m]
        u = el[:, rest[1]] - el[:, rest[0]]
        v = el[:, rest[2]] - el[:, rest[0]]
        n = np.cross(u, v)
        n /= np.linalg.norm(n, axis=1)[:, None]
        toward = np.einsum("ed,ed->e", n, el[:, m] - el[:, rest[0]])
        n[toward > 0.0] *= -1.0
        normals.append(n)
    for m1 in range(4):
        for m2 in range(m1 + 1, 4):
            dot = np.einsum("ed,ed->e", normals[m1], normals[m2])
            ang = np.arccos(np.clip(-dot, -1.0, 1.0))
            worst = min(worst, float(ang.min()))
    return worst


# ---------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------


def write_mesh(path, mesh: SimplicialMesh) -> None:
    """Plain-text mesh file; floats use repr so round trips are exact."""
    lines = [f"{MESH_MAGIC} {MESH_VERSION}", f"DIM {mesh.dimension}"]
    lines.append(f"NODES {mesh.num_nodes}")
    for i, p in enumerate(mesh.nodes):
        lines.append(f"{i + 1} " + " ".join(repr(float(c)) for c in p))
    lines.append(f"ELEMENTS {mesh.num_elements}")
    for i, el in enumerate(mesh.elements):
        lines.append(f"{i + 1} " + " ".join(str(int(v) + 1) for v in el))
    lines.append(f"BOUNDARY {len(mesh.boundary_facets)}")
    for f in mesh.boundary_facets:
        lines.append(" ".join(str(int(v) + 1) for v in f))
    if mesh.grading is not None:
        g = mesh.grading
        lines.append(f"GRADING {g.kappa!r} {g.radius!r} {len(g.centers)}")
        for c in g.centers:
            lines.append(" ".join(repr(float(x)) for x in c))
    lines.append("END")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialMesh:
    with open(path, "r", encoding="utf-8") as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    cursor = 0

    def take():
        nonlocal cursor
        if cursor >= len(raw):
            raise MeshFormatError("unexpected end of mesh file")
        line = raw[cursor]
        cursor += 1
        return line

    head = take().split()
    if len(head) != 2 or head[0] != MESH_MAGIC:
        raise MeshFormatError("not a mesh file (bad magic line)")
    if int(head[1]) != MESH_VERSION:
        raise MeshFormatError(f"unsupported mesh format version {head[1]}")
    dim_line = take().split()
    if dim_line[0] != "DIM" or len(dim_line) != 2:
        raise MeshFormatError("expected DIM line")
    dim = int(dim_line[1])
    if dim not in (2, 3):
        raise MeshFormatError("DIM must be 2 or 3")

    def section(name, width, dtype, with_id):
        header = take().split()
        if header[0] != name or len(header) != 2:
            raise MeshFormatError(f"expected {name} section")
        count = int(header[1])
        if count < 0:
            raise MeshFormatError(f"negative {name} count")
        rows = []
        for k in range(count):
            parts = take().split()
            if with_id:
                if int(parts[0]) != k + 1:
                    raise MeshFormatError(f"{name} ids must be sequential from 1")
                parts = parts[1:]
            if len(parts) != width:
                raise MeshFormatError(f"{name} row with {len(parts)} fields, expected {width}")
            rows.append([dtype(x) for x in parts])
        return rows

    nodes = np.array(section("NODES", dim, float, True), dtype=float).reshape(-1, dim)
    elements = np.array(section("ELEMENTS", dim + 1, int, True),
                        dtype=np.int64).reshape(-1, dim + 1) - 1
    facets = np.array(section("BOUNDARY", dim, int, False),
                      dtype=np.int64).reshape(-1, dim) - 1

    grading = None
    tail = take().split()
    if tail[0] == "GRADING":
        kappa, radius, ncenters = float(tail[1]), float(tail[2]), int(tail[3])
        centers = tuple(tuple(float(x) for x in take().split()) for _ in range(ncenters))
        for c in centers:
            if len(c) != dim:
                raise MeshFormatError("grading center with wrong dimension")
        grading = GradingSpec(kappa=kappa, radius=radius, centers=centers)
        tail = take().split()
    if tail[0] != "END":
        raise MeshFormatError("expected END line")

    mesh = SimplicialMesh(dim, nodes, elements, facets, grading=grading)
    mesh.validate()
    return mesh


def read_gmsh(path) -> SimplicialMesh:
    """Minimal Gmsh 2.2 ASCII import (linear triangles and tetrahedra)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = [ln.strip() for ln in fh]
    try:
        fmt_at = raw.index("$MeshFormat")
        version = raw[fmt_at + 1].split()
        if not version[0].startswith("2"):
            raise MeshFormatError("only Gmsh format 2 ASCII is supported")
        if len(version) > 1 and version[1] != "0":
            raise MeshFormatError("binary Gmsh files are not supported")
        n_at = raw.index("$Nodes")
        n_count = int(raw[n_at + 1])
        id_map: dict = {}
        coords = []
        for k in range(n_count):
            parts = raw[n_at + 2 + k].split()
            id_map[int(parts[0])] = k
            coords.append([float(x) for x in parts[1:4]])
        e_at = raw.index("$Elements")
        e_count = int(raw[e_at + 1])
        tris, tets = [], []
        for k in range(e_count):
            parts = [int(x) for x in raw[e_at + 2 + k].split()]
            etype, ntags = parts[1], parts[2]
            conn = parts[3 + ntags:]
            if etype == 2:
                tris.append([id_map[v] for v in conn])
            elif etype == 4:
                tets.append([id_map[v] for v in conn])
            elif etype in (1, 15):
                continue
            else:
                raise MeshFormatError(f"unsupported Gmsh element type {etype}")
    except (ValueError, IndexError, KeyError) as exc:
        raise MeshFormatError(f"malformed Gmsh file: {exc}") from exc

    nodes = np.array(coords, dtype=float)
    if tets:
        dim, elements = 3, np.array(tets, dtype=np.int64)
    elif tris:
        dim, elements = 2, np.array(tris, dtype=np.int64)
        nodes = nodes[:, :2]
    else:
        raise MeshFormatError("no triangles or tetrahedra in Gmsh file")
    used = np.zeros(len(nodes), dtype=bool)
    used[elements.ravel()] = True
    if not used.all():
        remap = -np.ones(len(nodes), dtype=np.int64)
        remap[used] = np.arange(int(used.sum()))
        nodes = nodes[used]
        elements = remap[elements]
    elements = _oriented(dim, nodes, elements)
    mesh = SimplicialMesh(dim, nodes, elements, derive_boundary_facets(elements))
    mesh.validate()
    return mesh
