"""Spherical polygons: vertex figures of polyhedral corners.

A corner of a polyhedron cuts the unit sphere around it in a spherical
polygon (the vertex link). For the lattice-generated domains built in
:mod:`klab.geometry` every corner is a corner of one or more grid cells,
so its link is a union of coordinate octant triangles. That structure
gives an exact coarse triangulation, an exact Girard area, and an exact
membership test, and it seeds the geodesic refinement used by the
spherical-cap eigenvalue solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .config import GEOM_TOL
from .errors import DegenerateLinkError

_ROUND = 12  # coordinate rounding for node dedup on the unit sphere


def _unit(v):
    return v / np.linalg.norm(v)


def _tangent(at, towards):
    """Unit tangent at `at` of the great-circle arc running to `towards`."""
    t = towards - np.dot(at, towards) * at
    n = np.linalg.norm(t)
    if n < GEOM_TOL:
        raise DegenerateLinkError("degenerate arc between (anti)parallel directions")
    return t / n


def triangle_angles(a, b, c) -> np.ndarray:
    """Interior angles of the spherical triangle (a, b, c)."""
    out = np.empty(3)
    for i, (p, q, r) in enumerate(((a, b, c), (b, c, a), (c, a, b))):
        t1 = _tangent(p, q)
        t2 = _tangent(p, r)
        out[i] = np.arctan2(np.linalg.norm(np.cross(t1, t2)), np.dot(t1, t2))
    return out


@dataclass
class SphericalPolygon:
    """Spherical polygon given as a cycle of great-circle arcs.

    vertices   (m, 3) unit directions, region to the left of the cycle
    angles     (m,) interior angles
    area       surface area (Girard sum over the coarse triangles)
    triangles  (T, 3, 3) coarse spherical triangles covering the region
    octant_signs  sign triples of the coordinate octants making up the
               region, when the region is an exact union of octants
    """

    vertices: np.ndarray
    angles: np.ndarray
    area: float
    triangles: np.ndarray
    octant_signs: tuple[tuple[int, int, int], ...] | None = None

    def contains_directions(self, u: np.ndarray) -> np.ndarray:
        """Exact membership for octant-union regions (boundary excluded)."""
        if self.octant_signs is None:
            raise DegenerateLinkError("membership requires an octant decomposition")
        u = np.atleast_2d(u)
        inside = np.zeros(len(u), dtype=bool)
        for signs in self.octant_signs:
            ok = np.ones(len(u), dtype=bool)
            for d, s in enumerate(signs):
                ok &= s * u[:, d] > 0.0
            inside |= ok
        return inside

    def sample_directions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Directions drawn from the coarse triangles (coverage sampling)."""
        tri = rng.integers(0, len(self.triangles), size=n)
        bary = rng.dirichlet(np.ones(3), size=n)
        pts = np.einsum("nk,nkd->nd", bary, self.triangles[tri])
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def polygon_from_triangles(triangles: np.ndarray,
                           octant_signs=None) -> SphericalPolygon:
    """Assemble a SphericalPolygon from right-handed spherical triangles.

    The triangles must tile the region: shared arcs cancel in opposite
    directions, the remaining directed arcs must chain into one cycle.
    """
    triangles = np.asarray(triangles, dtype=float)
    if len(triangles) == 0:
        raise DegenerateLinkError("empty link")

    def key(v):
        return tuple(np.round(v, _ROUND))

    # Orient every triangle right-handed so boundary arcs keep the
    # region on their left.
    tris = []
    for t in triangles:
        if np.linalg.det(t) < 0:
            t = t[[0, 2, 1]]
        tris.append(t)
    tris = np.array(tris)

    _validate_connected(tris, key)

    directed = {}
    for t in tris:
        for i in range(3):
            a, b = key(t[i]), key(t[(i + 1) % 3])
            if (b, a) in directed:
                del directed[(b, a)]
            else:
                directed[(a, b)] = (t[i], t[(i + 1) % 3])
    if not directed:
        raise DegenerateLinkError("link has no boundary (full sphere)")

    succ = {}
    for (a, b), arc in directed.items():
        if a in succ:
            raise DegenerateLinkError("link boundary is not a simple cycle")
        succ[a] = (b, arc)

    start = min(succ)
    cycle = [succ[start][1][0]]
    cur = start
    while True:
        nxt, arc = succ.pop(cur)
        if nxt == start:
            break
        cycle.append(succ[nxt][1][0])
        cur = nxt
    if succ:
        raise DegenerateLinkError("link boundary splits into several loops")

    cycle = _merge_collinear(cycle)
    m = len(cycle)
    angles = np.empty(m)
    for i in range(m):
        u = cycle[i]
        t_in = _tangent(u, cycle[(i - 1) % m])
        t_out = _tangent(u, cycle[(i + 1) % m])
        ang = np.arctan2(np.dot(np.cross(t_out, t_in), u), np.dot(t_out, t_in))
        angles[i] = ang % (2.0 * np.pi)

    area = 0.0
    for t in tris:
        area += triangle_angles(*t).sum() - np.pi
    if area < GEOM_TOL:
        raise DegenerateLinkError("link has zero area")

    return SphericalPolygon(np.array(cycle), angles, float(area), tris,
                            octant_signs)


def _merge_collinear(cycle):
    """Drop cycle vertices whose two arcs lie on one great circle.

    A merge is skipped when it would create an arc of length >= pi,
    which the vertex-cycle representation cannot express.
    """
    changed = True
    while changed and len(cycle) > 3:
        changed = False
        for i in range(len(cycle)):
            p = cycle[(i - 1) % len(cycle)]
            u = cycle[i]
            q = cycle[(i + 1) % len(cycle)]
            n1 = np.cross(p, u)
            n2 = np.cross(u, q)
            same_circle = np.linalg.norm(np.cross(n1, n2)) < GEOM_TOL and np.dot(n1, n2) > 0
            merged_len = (np.arccos(np.clip(np.dot(p, u), -1, 1))
                          + np.arccos(np.clip(np.dot(u, q), -1, 1)))
            if same_circle and merged_len < np.pi - 1e-9:
                cycle.pop(i)
                changed = True
                break
    return cycle


def _validate_connected(tris, key):
    by_edge: dict = {}
    for idx, t in enumerate(tris):
        for i in range(3):
            e = tuple(sorted((key(t[i]), key(t[(i + 1) % 3]))))
            by_edge.setdefault(e, []).append(idx)
    adj = {i: set() for i in range(len(tris))}
    for members in by_edge.values():
        for a in members:
            for b in members:
                if a != b:
                    adj[a].add(b)
    seen = {0}
    stack = [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != len(tris):
        raise DegenerateLinkError("link is not connected")


def octant() -> SphericalPolygon:
    """First-octant triangle: three right angles, area pi/2."""
    e = np.eye(3)
    return polygon_from_triangles(np.array([[e[0], e[1], e[2]]]),
                                  octant_signs=((1, 1, 1),))


def hemisphere() -> SphericalPolygon:
    """Upper hemisphere as four octant triangles around the pole."""
    x, y, z = np.eye(3)
    tris = np.array([[x, y, z], [y, -x, z], [-x, -y, z], [-y, x, z]])
    signs = ((1, 1, 1), (-1, 1, 1), (-1, -1, 1), (1, -1, 1))
    return polygon_from_triangles(tris, octant_signs=signs)


def refine_triangulation(triangles: np.ndarray, levels: int):
    """Geodesic midpoint refinement of a spherical triangulation.

    Returns (nodes (N, 3), elements (T, 3), boundary (N,) bool). Nodes
    are deduplicated across triangles; boundary nodes are those lying on
    arcs owned by a single triangle at the finest level.
    """
    node_index: dict = {}
    nodes: list = []

    def add(v):
        k = tuple(np.round(v, _ROUND))
        if k not in node_index:
            node_index[k] = len(nodes)
            nodes.append(np.asarray(v, dtype=float))
        return node_index[k]

    elements = []
    for t in triangles:
        elements.append([add(t[0]), add(t[1]), add(t[2])])
    elements = np.array(elements, dtype=np.int64)

    for _ in range(levels):
        mid_cache: dict = {}

        def midpoint(i, j):
            k = (min(i, j), max(i, j))
            if k not in mid_cache:
                mid_cache[k] = add(_unit(0.5 * (nodes[i] + nodes[j])))
            return mid_cache[k]

        new_elems = []
        for a, b, c in elements:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_elems.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        elements = np.array(new_elems, dtype=np.int64)

    nodes = np.array(nodes)
    edge_count: dict = {}
    for a, b, c in elements:
        for e in ((a, b), (b, c), (c, a)):
            k = (min(e), max(e))
            edge_count[k] = edge_count.get(k, 0) + 1
    boundary = np.zeros(len(nodes), dtype=bool)
    for (a, b), cnt in edge_count.items():
        if cnt == 1:
            boundary[a] = True
            boundary[b] = True
    return nodes, elements, boundary


def surface_p1_matrices(nodes: np.ndarray, elements: np.ndarray):
    """P1 stiffness and consistent mass on an embedded triangle surface."""
    ne = len(elements)
    coords = nodes[elements]  # (T, 3, 3)
    a, b, c = coords[:, 0], coords[:, 1], coords[:, 2]
    e1 = b - a
    l1 = np.linalg.norm(e1, axis=1, keepdims=True)
    e1 = e1 / l1
    ca = c - a
    proj = np.einsum("td,td->t", ca, e1)
    e2 = ca - proj[:, None] * e1
    l2 = np.linalg.norm(e2, axis=1, keepdims=True)
    e2 = e2 / l2

    flat = np.zeros((3 * ne, 2))
    flat[1::3, 0] = l1[:, 0]
    flat[2::3, 0] = proj
    flat[2::3, 1] = l2[:, 0]
    local_elems = np.arange(3 * ne, dtype=np.int64).reshape(ne, 3)
    vols, grads = kernels.simplex_geometry(flat, local_elems)
    k_loc = kernels.local_stiffness(vols, grads)

    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_loc = vols[:, None, None] * mass_ref[None, :, :]

    rows = np.repeat(elements, 3, axis=1).ravel()
    cols = np.tile(elements, (1, 3)).ravel()
    n = len(nodes)
    k_mat = sp.coo_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    m_mat = sp.coo_matrix((m_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    k_mat.sum_duplicates()
    m_mat.sum_duplicates()
    return k_mat, m_mat
