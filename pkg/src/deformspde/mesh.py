"""Triangulation of a convex observation domain plus a barrier extension.

The mesh covers the domain and an outer buffer whose width is a multiple of
the smallest local practical range.  Nodes start on a hexagonal lattice and
boundary polylines; triangles are then refined by longest-edge bisection
until every edge meets the local bound (range / 5).  Boundary segments are
protected by splitting them whenever a new point would encroach on them,
which keeps the domain boundary present in the Delaunay triangulation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .deformation import LocalAnisotropy

EDGE_FRACTION = 5.0  # longest edge <= local range / EDGE_FRACTION


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangle mesh.

    Attributes
    ----------
    nodes : (N, 2) array
    triangles : (M, 3) int array, counter-clockwise
    is_extension : (M,) bool, triangle lies outside the observation domain
    domain : (V, 2) convex polygon of the observation domain (CCW)
    r_min : smallest local practical range on the domain at build time
    barrier : ``(nu, r_min)`` once :func:`apply_barrier` has been called
    """

    nodes: np.ndarray
    triangles: np.ndarray
    is_extension: np.ndarray
    domain: np.ndarray
    r_min: float = float("nan")
    barrier: tuple[float, float] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.nodes, self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges ``(E, 2)`` with ``i < j``."""
        if "edges" not in self._cache:
            self._edge_tables()
        return self._cache["edges"]

    def edge_counts(self) -> np.ndarray:
        """Number of triangles sharing each edge of :meth:`edges`."""
        if "edge_counts" not in self._cache:
            self._edge_tables()
        return self._cache["edge_counts"]

    def _edge_tables(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        self._cache["edges"] = uniq
        self._cache["edge_counts"] = counts

    def boundary_nodes(self) -> np.ndarray:
        """Nodes on the outer boundary (edges used by a single triangle)."""
        if "boundary" not in self._cache:
            e = self.edges()[self.edge_counts() == 1]
            self._cache["boundary"] = np.unique(e)
        return self._cache["boundary"]

    def triangle_edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return np.stack(
            [
                np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            ],
            axis=1,
        )

    def locate(self, points, tol: float = 1e-10):
        """Containing triangle and barycentric weights for each point.

        Returns ``(tri_index, weights)``; ``tri_index`` is -1 for points
        outside the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if "tree" not in self._cache:
            self._cache["tree"] = cKDTree(self.centroids)
        tree = self._cache["tree"]
        n_cand = min(12, self.n_triangles)
        _, cand = tree.query(pts, k=n_cand)
        cand = np.atleast_2d(cand).reshape(len(pts), n_cand)
        tri_idx = np.full(len(pts), -1)
        weights = np.zeros((len(pts), 3))
        for c in range(n_cand):
            todo = tri_idx < 0
            if not todo.any():
                break
            t = cand[todo, c]
            w = _barycentric(self.nodes[self.triangles[t]], pts[todo])
            ok = np.all(w >= -tol, axis=1)
            idx = np.flatnonzero(todo)[ok]
            tri_idx[idx] = t[ok]
            weights[idx] = w[ok]
        for i in np.flatnonzero(tri_idx < 0):
            w = _barycentric(self.nodes[self.triangles], np.repeat(pts[i][None], self.n_triangles, 0))
            ok = np.flatnonzero(np.all(w >= -tol, axis=1))
            if len(ok):
                tri_idx[i] = ok[0]
                weights[i] = w[ok[0]]
        weights = np.clip(weights, 0.0, None)
        weights /= np.where(tri_idx[:, None] >= 0, weights.sum(axis=1, keepdims=True), 1.0)
        return tri_idx, weights


def _barycentric(tri_pts, pts):
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    v0, v1, v2 = b - a, c - a, pts - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    return np.stack([1 - l1 - l2, l1, l2], axis=1)


def signed_areas(nodes, triangles) -> np.ndarray:
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


# -- polygon helpers -----------------------------------------------------

def convex_polygon(vertices) -> np.ndarray:
    """Validate a convex polygon and return it counter-clockwise."""
    poly = np.asarray(vertices, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise MeshError("domain polygon needs at least 3 vertices")
    if np.allclose(poly[0], poly[-1]) and len(poly) > 3:
        poly = poly[:-1]
    area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if abs(area) < 1e-12 * max(1.0, np.ptp(poly) ** 2):
        raise MeshError("domain polygon is degenerate (zero area)")
    if area < 0:
        poly = poly[::-1]
    e1 = np.roll(poly, -1, axis=0) - poly
    e2 = np.roll(e1, -1, axis=0)
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(cross < -1e-12 * np.abs(cross).max()):
        raise MeshError("domain polygon is not convex")
    return poly


def points_in_polygon(points, poly, tol: float = 0.0) -> np.ndarray:
    """Inside test for a CCW convex polygon; ``tol > 0`` grows the polygon."""
    pts = np.atleast_2d(points)
    inside = np.ones(len(pts), dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        e = b - a
        cross = e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])
        inside &= cross >= -tol * np.hypot(*e)
    return inside


def offset_polygon(poly, width: float, arc_step: float) -> np.ndarray:
    """Outer boundary of the Minkowski sum of a convex polygon and a disc."""
    if width <= 0:
        return poly.copy()
    out = []
    n = len(poly)
    for i in range(n):
        prev_e = poly[i] - poly[i - 1]
        next_e = poly[(i + 1) % n] - poly[i]
        a0 = np.arctan2(-prev_e[0], prev_e[1])  # outward normal of incoming edge
        a1 = np.arctan2(-next_e[0], next_e[1])
        if a1 < a0:
            a1 += 2 * np.pi
        n_arc = max(1, int(np.ceil((a1 - a0) * width / arc_step)))
        for a in np.linspace(a0, a1, n_arc + 1):
            out.append(poly[i] + width * np.array([np.cos(a), np.sin(a)]))
    out = np.array(out)
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(out, axis=0), axis=1) > 1e-12 * width
    return out[keep]


def _sample_polygon(poly, n: int = 40) -> np.ndarray:
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    grid = grid[points_in_polygon(grid, poly, tol=1e-9)]
    edge_pts = [a + t * (b - a) for a, b in zip(poly, np.roll(poly, -1, axis=0)) for t in np.linspace(0, 1, n, endpoint=False)]
    return np.vstack([grid, np.array(edge_pts)])


def _hex_lattice(lo, hi, spacing):
    dy = spacing * np.sqrt(3) / 2
    ys = np.arange(lo[1], hi[1] + dy, dy)
    pts = []
    for j, y in enumerate(ys):
        xs = np.arange(lo[0] + (spacing / 2 if j % 2 else 0.0), hi[0] + spacing, spacing)
        pts.append(np.column_stack([xs, np.full(len(xs), y)]))
    return np.vstack(pts)


def _polyline_points(poly, spacing_fn):
    """Points along a closed polygon with spacing from ``spacing_fn``."""
    pts, segs = [], []
    start = 0
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        length = np.linalg.norm(b - a)
        t = np.linspace(0, 1, 9)
        h = np.min(spacing_fn(a + t[:, None] * (b - a)))
        m = max(1, int(np.ceil(length / h)))
        for i in range(m):
            pts.append(a + (i / m) * (b - a))
    pts = np.array(pts)
    n = len(pts)
    segs = np.column_stack([np.arange(n), (np.arange(n) + 1) % n]) + start
    return pts, segs


def _distance_to_segments(points, seg_a, seg_b):
    """Minimum distance from each point to a set of segments (dense, chunked)."""
    out = np.full(len(points), np.inf)
    d = seg_b - seg_a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    for start in range(0, len(points), 2048):
        p = points[start:start + 2048]
        rel = p[:, None, :] - seg_a[None]
        t = np.clip(np.einsum("pij,ij->pi", rel, d) / dd, 0, 1)
        proj = seg_a[None] + t[..., None] * d[None]
        out[start:start + 2048] = np.linalg.norm(p[:, None] - proj, axis=2).min(axis=1)
    return out


def build_mesh(
    domain,
    range_field,
    extension_factor: float = 2.0,
    *,
    max_iter: int = 200,
    smoothing_cycles: int = 2,
    edge_fraction: float = EDGE_FRACTION,
) -> TriMesh:
    """Mesh the convex ``domain`` plus a buffer of ``extension_factor * r_min``.

    Parameters
    ----------
    domain : (V, 2) array_like
        Convex polygon.
    range_field : callable
        Maps an ``(n, 2)`` array of points to positive local practical ranges.
    extension_factor : float
        Buffer width in units of the minimum range over the domain.
    edge_fraction : float
        Longest admissible edge as a fraction of the local range; values
        above 5 give finer meshes that still honour the fifth-of-range rule.
    """
    poly = convex_polygon(domain)
    if edge_fraction < EDGE_FRACTION:
        raise MeshError(f"edge_fraction must be at least {EDGE_FRACTION}")
    if extension_factor < 0:
        raise MeshError("extension_factor must be non-negative")

    def rng(p):
        r = np.asarray(range_field(np.atleast_2d(p)), dtype=float).reshape(-1)
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise MeshError("range_field returned a non-positive or non-finite value")
        return r

    r_min = float(rng(_sample_polygon(poly)).min())
    width = extension_factor * r_min
    h_ext = r_min / EDGE_FRACTION  # the buffer stays coarse
    outer = offset_polygon(poly, width, arc_step=0.95 * h_ext)

    def target(p):
        p = np.atleast_2d(p)
        inside = points_in_polygon(p, poly, tol=1e-9)
        out = np.full(len(p), h_ext)
        if inside.any():
            out[inside] = rng(p[inside]) / edge_fraction
        return out

    spacing = lambda p: 0.85 * target(p)
    dom_pts, dom_segs = _polyline_points(poly, spacing)
    seg_list = [dom_segs]
    pts_list = [dom_pts]
    if width > 0:
        out_pts, out_segs = _polyline_points(outer, spacing)
        seg_list.append(out_segs + len(dom_pts))
        pts_list.append(out_pts)
    boundary = np.vstack(pts_list)
    segments = np.vstack(seg_list)

    lo, hi = outer.min(axis=0), outer.max(axis=0)
    lattice = _graded_lattice(lo, hi, spacing, outer)
    if len(lattice):
        dist = _distance_to_segments(lattice, boundary[segments[:, 0]], boundary[segments[:, 1]])
        lattice = lattice[dist > 0.5 * spacing(lattice)]
    points = np.vstack([boundary, lattice])
    segs = {tuple(sorted(s)) for s in segments.tolist()}

    def tri_bound(pts, tris):
        cen = pts[tris].mean(axis=1)
        ext = ~points_in_polygon(cen, poly)
        bound = np.full(len(tris), h_ext)
        if (~ext).any():
            r_tri = rng(cen[~ext])
            for v in range(3):
                r_tri = np.minimum(r_tri, rng(pts[tris[~ext, v]]))
            bound[~ext] = r_tri / edge_fraction
        return bound

    for cycle in range(smoothing_cycles + 1):
        points, tris, segs = _refine(points, segs, tri_bound, max_iter)
        if cycle < smoothing_cycles:
            fixed = np.zeros(len(points), dtype=bool)
            fixed[list({i for s in segs for i in s})] = True
            points = _smooth(points, tris, fixed, iterations=4)

    areas = signed_areas(points, tris)
    used = np.unique(tris)
    remap = -np.ones(len(points), dtype=int)
    remap[used] = np.arange(len(used))
    nodes = points[used]
    tris = remap[tris]
    cen = nodes[tris].mean(axis=1)
    is_ext = ~points_in_polygon(cen, poly)
    return TriMesh(nodes=nodes, triangles=tris, is_extension=is_ext, domain=poly, r_min=r_min)


def _graded_lattice(lo, hi, spacing_fn, outer):
    """Nested hexagonal lattices; each point comes from the coarsest level
    whose spacing does not exceed the local target."""
    probe = _hex_lattice(lo, hi, np.ptp(np.vstack([lo, hi]), axis=0).max() / 40)
    probe = probe[points_in_polygon(probe, outer, tol=-1e-9)]
    s_max = float(spacing_fn(probe).max())
    s_min = float(spacing_fn(probe).min())
    n_levels = int(np.ceil(np.log2(s_max / s_min))) + 1 if s_max > s_min * 1.05 else 1
    keep = []
    for lvl in range(n_levels):
        s = s_max / 2**lvl
        pts = _hex_lattice(lo, hi, s)
        pts = pts[points_in_polygon(pts, outer, tol=-1e-9)]
        if not len(pts):
            continue
        t = spacing_fn(pts)
        # coarsest level with spacing <= target; the finest level takes the rest
        sel = np.ones(len(pts), dtype=bool)
        if lvl > 0:
            sel &= t < 2 * s
        if lvl < n_levels - 1:
            sel &= t >= s
        keep.append(pts[sel])
    pts = np.vstack(keep)
    _, idx = np.unique(np.round(pts, 10), axis=0, return_index=True)
    return pts[np.sort(idx)]


def _circumcenters(points, tris):
    a, b, c = (points[tris[:, i]] for i in range(3))
    ba, ca = b - a, c - a
    d = 2.0 * (ba[:, 0] * ca[:, 1] - ba[:, 1] * ca[:, 0])
    nb, nc = (ba**2).sum(1), (ca**2).sum(1)
    ux = (ca[:, 1] * nb - ba[:, 1] * nc) / d
    uy = (ba[:, 0] * nc - ca[:, 0] * nb) / d
    return a + np.stack([ux, uy], axis=1)


def _refine(points, segs, tri_bound, max_iter):
    """Refine until every triangle meets its edge bound and every protected
    segment is an edge of the triangulation.

    Oversized triangles receive their circumcenter unless it encroaches on a
    protected segment, in which case that segment is bisected instead.
    """
    segs = set(segs)
    for _ in range(max_iter):
        tris = _delaunay(points)
        mesh_edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        mesh_edges.sort(axis=1)
        edge_set = set(map(tuple, mesh_edges.tolist()))
        missing = [s for s in segs if s not in edge_set]
        bound = tri_bound(points, tris)
        lengths = _tri_edge_lengths(points, tris)
        bad = np.flatnonzero(lengths.max(axis=1) > bound)
        if not len(bad) and not missing:
            return points, tris, segs
        seg_arr = np.array(sorted(segs))
        seg_mid = 0.5 * (points[seg_arr[:, 0]] + points[seg_arr[:, 1]])
        seg_rad = 0.5 * np.linalg.norm(points[seg_arr[:, 0]] - points[seg_arr[:, 1]], axis=1)
        tree = cKDTree(seg_mid)
        to_split = set(missing)
        new_pts = []
        if len(bad):
            # largest triangles first; skip candidates crowding an accepted one
            order = bad[np.argsort(-lengths[bad].max(axis=1))]
            cc = _circumcenters(points, tris[order])
            outside = Delaunay(points).find_simplex(cc) < 0
            cc[outside] = points[tris[order[outside]]].mean(axis=1)
            near = tree.query_ball_point(cc, seg_rad.max() * (1 + 1e-9))
            free = []
            for i, (t, m, nb) in enumerate(zip(order, cc, near)):
                enc = [j for j in nb if np.linalg.norm(m - seg_mid[j]) < seg_rad[j] * (1 - 1e-9)]
                if enc:
                    to_split.update(tuple(seg_arr[j]) for j in enc)
                else:
                    free.append(i)
            if free:
                cand = cc[free]
                free = order[free]
                ctree = cKDTree(cand)
                blocked = np.zeros(len(free), dtype=bool)
                for i, t in enumerate(free):
                    if blocked[i]:
                        continue
                    new_pts.append(cand[i])
                    blocked[ctree.query_ball_point(cand[i], 0.5 * bound[t])] = True
        n0 = len(points)
        extra = []
        for a_, b_ in sorted(to_split):
            idx = n0 + len(extra)
            extra.append(0.5 * (points[a_] + points[b_]))
            segs.discard((a_, b_))
            segs.add((min(a_, idx), max(a_, idx)))
            segs.add((min(b_, idx), max(b_, idx)))
        add = np.array(extra + list(new_pts)).reshape(-1, 2)
        if len(new_pts):
            # drop circumcenters that land on top of existing or split points
            d, _ = cKDTree(np.vstack([points, add[: len(extra)]])).query(add[len(extra):])
            ok = np.concatenate([np.ones(len(extra), bool), d > 1e-9 * np.ptp(points, axis=0).max()])
            add = add[ok]
        points = np.vstack([points, add])
    raise MeshError("mesh refinement did not converge")


def _smooth(points, tris, fixed, iterations: int = 3):
    """Laplacian smoothing of the free nodes."""
    import scipy.sparse as sp

    n = len(points)
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    adj = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    adj = ((adj + adj.T) > 0).astype(float)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    pts = points.copy()
    free = ~fixed & (deg > 0)
    for _ in range(iterations):
        avg = (adj @ pts) / np.maximum(deg, 1)[:, None]
        pts[free] = avg[free]
    return pts


def _delaunay(points) -> np.ndarray:
    tris = Delaunay(points).simplices.astype(int)
    areas = signed_areas(points, tris)
    scale = np.max(np.ptp(points, axis=0)) ** 2
    keep = np.abs(areas) > 1e-14 * scale
    tris = tris[keep]
    flip = areas[keep] < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _tri_edge_lengths(points, tris):
    p = points[tris]
    return np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        ],
        axis=1,
    )


def grid_mesh(x, y) -> TriMesh:
    """Structured mesh on a rectangular lattice (no extension); for tests."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X, Y = np.meshgrid(x, y)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nx = len(x)
    tris = []
    for j in range(len(y) - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b, c, d = a + 1, a + nx, a + nx + 1
            tris += [[a, b, d], [a, d, c]]
    poly = np.array([[x[0], y[0]], [x[-1], y[0]], [x[-1], y[-1]], [x[0], y[-1]]])
    tris = np.array(tris)
    return TriMesh(nodes=nodes, triangles=tris, is_extension=np.zeros(len(tris), bool), domain=poly)


# -- barrier -------------------------------------------------------------

def barrier_anisotropy(nu: float, r_min: float) -> LocalAnisotropy:
    """Local parameters enforcing practical range ``r_min`` isotropically.

    The inverse-deformation Jacobian is ``c * I`` with ``c = sqrt(8 nu)/r_min``;
    then ``H_tilde = J^{-1} J^{-T} = c^-2 I`` and, as for any point,
    ``kappa = det(H_tilde)^(-1/2) = c^2`` and ``H = kappa^2 H_tilde = c^2 I``.
    """
    if not r_min > 0:
        raise MeshError("r_min must be positive")
    if not nu > 0:
        raise MeshError("nu must be positive")
    c = np.sqrt(8.0 * nu) / r_min
    return LocalAnisotropy(H_tilde=np.eye(2) / c**2, kappa=float(c**2), H=np.eye(2) * c**2)


def apply_barrier(mesh: TriMesh, nu: float, r_min: float) -> TriMesh:
    """Mark extension triangles to use the barrier parameters."""
    barrier_anisotropy(nu, r_min)  # validation
    return replace(mesh, barrier=(float(nu), float(r_min)), _cache={})


# -- serialization -------------------------------------------------------

def write_mesh(mesh: TriMesh, nodes_path, triangles_path) -> None:
    meta = {
        "format": "deformspde-mesh",
        "version": 1,
        "domain": mesh.domain.tolist(),
        "r_min": mesh.r_min,
        "barrier": list(mesh.barrier) if mesh.barrier else None,
    }
    with open(nodes_path, "w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("x,y\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r},{float(y)!r}\n")
    with open(triangles_path, "w") as fh:
        fh.write("a,b,c,extension\n")
        for (a, b, c), e in zip(mesh.triangles, mesh.is_extension):
            fh.write(f"{a},{b},{c},{int(e)}\n")


def read_mesh(nodes_path, triangles_path) -> TriMesh:
    with open(nodes_path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise MeshError(f"{nodes_path}: missing JSON header line")
        meta = json.loads(first[1:])
        if meta.get("format") != "deformspde-mesh":
            raise MeshError(f"{nodes_path}: not a mesh node file")
        nodes = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    tri = np.loadtxt(triangles_path, delimiter=",", skiprows=1, dtype=int, ndmin=2)
    return TriMesh(
        nodes=nodes,
        triangles=tri[:, :3],
        is_extension=tri[:, 3].astype(bool),
        domain=np.asarray(meta["domain"], dtype=float),
        r_min=float(meta["r_min"]) if meta["r_min"] is not None else float("nan"),
        barrier=tuple(meta["barrier"]) if meta["barrier"] else None,
    )


def edge_length_histogram(mesh: TriMesh, bins: int = 10):
    e = mesh.edges()
    lengths = np.linalg.norm(mesh.nodes[e[:, 0]] - mesh.nodes[e[:, 1]], axis=1)
    return np.histogram(lengths, bins=bins)
