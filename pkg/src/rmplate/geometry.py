"""Domains, triangular meshes and region integrals.

Meshes are immutable; every generator returns a conforming, positively
oriented triangulation whose boundary edges are oriented with the domain on
their left.  Disk meshes realise each requested circle exactly as a union of
element edges (vertices lie on the circle), so integrals over the marked
disks are plain sums over triangles.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.spatial import cKDTree

from . import quadrature as quad


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    """Geometric constants of a Lipschitz domain.

    ``rho0`` is the length scale, ``M0`` the Lipschitz constant, ``M1`` the
    diameter bound factor and ``B_{s0*rho0}(x0)`` a disk inside the domain.
    """

    rho0: float = 1.0
    M0: float = 1.0
    M1: float = 2.0
    s0: float = 0.25
    x0: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.rho0 > 0 or not self.M0 > 0:
            raise ValueError("rho0 and M0 must be positive")
        if not self.s0 > 0 or not self.M1 > 0:
            raise ValueError("s0 and M1 must be positive")

    def check(self, mesh):
        """Return a list of violated conditions on ``mesh`` (empty if fine)."""
        problems = []
        if mesh.diameter > self.M1 * self.rho0 * (1 + 1e-12):
            problems.append(
                f"diam = {mesh.diameter:.6g} exceeds M1*rho0 = {self.M1 * self.rho0:.6g}"
            )
        if not disk_inside(mesh, self.x0, self.s0 * self.rho0):
            problems.append("inscribed disk B_{s0 rho0}(x0) is not inside the mesh")
        return problems


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    circle_markers: tuple = ()

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        bedges = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = tuple(str(t) for t in self.boundary_tags)
        if len(tags) != len(bedges):
            raise MeshError("one tag per boundary edge is required")
        markers = tuple(
            ((float(c[0]), float(c[1])), float(r)) for c, r in self.circle_markers
        )
        for arr in (nodes, tris, bedges):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_edges", bedges)
        object.__setattr__(self, "boundary_tags", tags)
        object.__setattr__(self, "circle_markers", markers)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def vertices(self):
        return self.nodes[self.triangles]

    @cached_property
    def signed_areas(self):
        v = self.vertices
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def areas(self):
        return np.abs(self.signed_areas)

    @property
    def area(self):
        return float(self.areas.sum())

    @cached_property
    def centroids(self):
        return self.vertices.mean(axis=1)

    @cached_property
    def quad_points(self):
        """Quadrature points of the 7-point rule, shape (m, 7, 2)."""
        return quad.triangle_points(self.vertices)

    @cached_property
    def quad_weights(self):
        """Physical quadrature weights, shape (m, 7)."""
        return self.areas[:, None] * quad.TRI_WEIGHTS[None, :]

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        srt = np.sort(local.reshape(-1, 2), axis=1)
        keys = srt[:, 0] * self.n_nodes + srt[:, 1]
        ukeys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        edges = srt[first]
        return ukeys, edges, inverse.reshape(-1, 3)

    @property
    def edges(self):
        """Unique undirected edges (sorted node pairs)."""
        return self._edge_data[1]

    @property
    def triangle_edges(self):
        """Edge ids of local edges (0,1), (1,2), (2,0) of every triangle."""
        return self._edge_data[2]

    def edge_ids(self, pairs):
        """Look up edge ids for node pairs (any orientation); -1 if absent."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        keys = pairs[:, 0] * self.n_nodes + pairs[:, 1]
        ukeys = self._edge_data[0]
        pos = np.searchsorted(ukeys, keys)
        pos = np.clip(pos, 0, len(ukeys) - 1)
        return np.where(ukeys[pos] == keys, pos, -1)

    @cached_property
    def edge_triangles(self):
        """For each edge, the (up to two) adjacent triangles; -1 pads."""
        ne = len(self.edges)
        out = -np.ones((ne, 2), dtype=np.int64)
        te = self.triangle_edges.ravel()
        tri = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(te, kind="stable")
        te, tri = te[order], tri[order]
        starts = np.searchsorted(te, np.arange(ne))
        out[:, 0] = tri[starts]
        second = starts + 1
        has2 = (second < len(te)) & (te[np.minimum(second, len(te) - 1)] == np.arange(ne))
        out[has2, 1] = tri[second[has2]]
        return out

    @cached_property
    def boundary_geometry(self):
        """Start points, end points, lengths, unit tangents and outward normals."""
        a = self.nodes[self.boundary_edges[:, 0]]
        b = self.nodes[self.boundary_edges[:, 1]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        tangent = d / length[:, None]
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        return a, b, length, tangent, normal

    @property
    def perimeter(self):
        return float(self.boundary_geometry[2].sum())

    @cached_property
    def diameter(self):
        pts = self.nodes[np.unique(self.boundary_edges)] if len(self.boundary_edges) else self.nodes
        if len(pts) > 2000:
            from scipy.spatial import ConvexHull

            pts = pts[ConvexHull(pts).vertices]
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    @cached_property
    def _trifinder(self):
        import matplotlib.tri as mtri

        tri = mtri.Triangulation(self.nodes[:, 0], self.nodes[:, 1], self.triangles)
        return tri.get_trifinder()

    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.centroids)

    def locate(self, points, nearest=False):
        """Triangle index containing each point (-1 outside).

        With ``nearest`` points outside the mesh are attributed to the
        triangle with the closest centroid.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        idx = np.asarray(self._trifinder(pts[:, 0], pts[:, 1]), dtype=np.int64)
        if nearest and (idx < 0).any():
            miss = idx < 0
            idx[miss] = self._centroid_tree.query(pts[miss])[1]
        return idx

    def marker_index(self, center, radius, rtol=1e-9):
        c = np.asarray(center, dtype=float)
        for i, (cc, r) in enumerate(self.circle_markers):
            if np.allclose(cc, c, atol=rtol * max(1.0, r)) and abs(r - radius) <= rtol * r:
                return i
        raise MeshError(f"no circle marker of radius {radius} centred at {tuple(c)}")

    def disk_triangles(self, index):
        (cx, cy), r = self.circle_markers[index]
        d = np.hypot(self.centroids[:, 0] - cx, self.centroids[:, 1] - cy)
        return np.flatnonzero(d < r)


@dataclass(frozen=True)
class Region:
    """Subset of mesh triangles: whole domain, a marked disk, or explicit."""

    kind: str = "whole"
    index: int = -1
    explicit: tuple = field(default=())

    @classmethod
    def whole(cls):
        return cls("whole")

    @classmethod
    def disk(cls, index):
        return cls("disk", int(index))

    @classmethod
    def of(cls, triangles):
        return cls("explicit", -1, tuple(int(t) for t in triangles))

    def triangles(self, mesh):
        if self.kind == "whole":
            tris = np.arange(mesh.n_triangles)
        elif self.kind == "disk":
            tris = mesh.disk_triangles(self.index)
        elif self.kind == "explicit":
            tris = np.asarray(self.explicit, dtype=np.int64)
            if tris.size and (tris.min() < 0 or tris.max() >= mesh.n_triangles):
                raise MeshError("region references triangles outside the mesh")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if tris.size == 0:
            raise MeshError("empty region")
        return tris


# ---------------------------------------------------------------------------
# generators


def make_rect_mesh(a, b, n, center=(0.0, 0.0)):
    """Structured mesh of the rectangle R_{a,b}(center).

    The rectangle is cut into 2n x 2n cells; each cell is split along the
    diagonal that passes closest to the centre (alternating "union jack"
    pattern), so the mesh is symmetric under x1 -> -x1 and x2 -> -x2.
    ``(1, 1, 1)`` gives 8 triangles on 9 nodes.
    """
    if not (a > 0 and b > 0):
        raise MeshError("rectangle half-sizes must be positive")
    n = int(n)
    if n < 1:
        raise MeshError("subdivision count must be >= 1")
    m = 2 * n
    cx, cy = center
    xs = np.linspace(cx - a, cx + a, m + 1)
    ys = np.linspace(cy - b, cy + b, m + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    def nid(i, j):
        return j * (m + 1) + i

    tris = []
    for j in range(m):
        for i in range(m):
            p00, p10, p01, p11 = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris += [(p00, p10, p11), (p00, p11, p01)]
            else:
                tris += [(p00, p10, p01), (p10, p11, p01)]
    edges, tags = [], []
    for i in range(m):
        edges.append((nid(i, 0), nid(i + 1, 0)))
        tags.append("bottom")
    for j in range(m):
        edges.append((nid(m, j), nid(m, j + 1)))
        tags.append("right")
    for i in range(m, 0, -1):
        edges.append((nid(i, m), nid(i - 1, m)))
        tags.append("top")
    for j in range(m, 0, -1):
        edges.append((nid(0, j), nid(0, j - 1)))
        tags.append("left")
    return Mesh(nodes, np.array(tris), np.array(edges), tuple(tags))


def _zipper(inner_ids, inner_ang, outer_ids, outer_ang):
    """Triangulate the strip between two closed rings sorted by angle."""
    na, nb = len(inner_ids), len(outer_ids)
    ia = np.append(inner_ang, inner_ang[0] + 2 * np.pi)
    ob = np.append(outer_ang, outer_ang[0] + 2 * np.pi)
    i = j = 0
    tris = []
    while i < na or j < nb:
        adv_inner = j >= nb or (i < na and ia[i + 1] <= ob[j + 1])
        if adv_inner:
            tris.append((inner_ids[i % na], outer_ids[j % nb], inner_ids[(i + 1) % na]))
            i += 1
        else:
            tris.append((inner_ids[i % na], outer_ids[j % nb], outer_ids[(j + 1) % nb]))
            j += 1
    return tris


def make_disk_mesh(center=(0.0, 0.0), radius=1.0, circles=None, n_angular=16, n_refine=0):
    """Disk mesh with concentric circles realised as unions of element edges.

    Every requested circle carries ``n_angular`` equally spaced vertices.  The
    core inside the innermost circle is filled with rings of decreasing vertex
    count and a central fan; annuli between circles get geometrically spaced
    rings so that radial and angular spacing are comparable.  Each refinement
    level splits triangles into four, moving new vertices on marked circles
    onto the exact circle.
    """
    if not radius > 0:
        raise MeshError("radius must be positive")
    radii = np.asarray([radius] if circles is None else circles, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or radii[0] <= 0:
        raise MeshError("circle radii must be a non-empty positive sequence")
    if np.any(np.diff(radii) <= 0):
        raise MeshError("circle radii must be strictly increasing")
    if not math.isclose(radii[-1], radius, rel_tol=1e-12):
        raise MeshError("the largest circle must coincide with the disk radius")
    N = int(n_angular)
    if N < 8:
        raise MeshError("n_angular must be >= 8")

    step = 2 * np.pi * radii[0] / N
    core = []
    cur, cnt = radii[0], N
    while cur > 1.5 * step:
        cur -= step
        cnt = min(cnt, max(6, int(round(2 * np.pi * cur / step))))
        core.append((cur, cnt))
    rings = []
    for k, (r, c) in enumerate(reversed(core)):
        rings.append((r, c, (k % 2) * np.pi / c))
    rings.append((radii[0], N, 0.0))
    grow = np.log1p(2 * np.pi / N)
    for r_in, r_out in zip(radii[:-1], radii[1:]):
        layers = max(1, int(round(np.log(r_out / r_in) / grow)))
        for k in range(1, layers + 1):
            r = r_in * (r_out / r_in) ** (k / layers)
            offset = 0.0 if k == layers else (k % 2) * np.pi / N
            rings.append((r, N, offset))

    cx, cy = center
    nodes = [(cx, cy)]
    ring_ids, ring_ang = [], []
    for r, c, off in rings:
        ang = off + 2 * np.pi * np.arange(c) / c
        start = len(nodes)
        nodes.extend(zip(cx + r * np.cos(ang), cy + r * np.sin(ang)))
        ring_ids.append(np.arange(start, start + c))
        ring_ang.append(ang)
    first = ring_ids[0]
    tris = [(0, first[k], first[(k + 1) % len(first)]) for k in range(len(first))]
    for k in range(len(rings) - 1):
        tris += _zipper(ring_ids[k], ring_ang[k], ring_ids[k + 1], ring_ang[k + 1])
    outer = ring_ids[-1]
    bedges = np.stack([outer, np.roll(outer, -1)], axis=1)
    mesh = Mesh(
        np.array(nodes),
        _orient(np.array(nodes), np.array(tris)),
        bedges,
        ("outer",) * len(bedges),
        tuple(((cx, cy), float(r)) for r in radii),
    )
    return refine(mesh, n_refine)


def _orient(nodes, tris):
    v = nodes[tris]
    d1, d2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris = tris.copy()
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def refine(mesh, levels=1):
    """Uniform red refinement; new vertices on marked circles are snapped."""
    for _ in range(int(levels)):
        mesh = _refine_once(mesh)
    return mesh


def _refine_once(mesh):
    nv = mesh.n_nodes
    edges = mesh.edges
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    for (cx, cy), r in mesh.circle_markers:
        c = np.array([cx, cy])
        d0 = np.hypot(*(mesh.nodes[edges[:, 0]] - c).T)
        d1 = np.hypot(*(mesh.nodes[edges[:, 1]] - c).T)
        on = (np.abs(d0 - r) <= 1e-10 * r) & (np.abs(d1 - r) <= 1e-10 * r)
        v = mids[on] - c
        mids[on] = c + r * v / np.hypot(v[:, 0], v[:, 1])[:, None]
    nodes = np.vstack([mesh.nodes, mids])
    t = mesh.triangles
    m01, m12, m20 = (nv + mesh.triangle_edges[:, k] for k in range(3))
    children = np.concatenate(
        [
            np.stack([t[:, 0], m01, m20], axis=1),
            np.stack([m01, t[:, 1], m12], axis=1),
            np.stack([m20, m12, t[:, 2]], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    # keep children of one parent contiguous: parent k -> rows 4k..4k+3
    m = mesh.n_triangles
    order = np.arange(4 * m).reshape(4, m).T.ravel()
    tris = children[order]
    be = mesh.boundary_edges
    bm = nv + mesh.edge_ids(be)
    bedges = np.stack([np.stack([be[:, 0], bm], 1), np.stack([bm, be[:, 1]], 1)], axis=1).reshape(-1, 2)
    tags = tuple(t for tag in mesh.boundary_tags for t in (tag, tag))
    return Mesh(nodes, tris, bedges, tags, mesh.circle_markers)


# ---------------------------------------------------------------------------
# validation


@dataclass
class MeshDiagnostics:
    checks: dict
    messages: list
    min_angle_deg: float
    n_nodes: int
    n_triangles: int

    @property
    def ok(self):
        return all(self.checks.values())

    def raise_if_failed(self):
        if not self.ok:
            raise MeshError("; ".join(self.messages))

    def as_dict(self):
        return {
            "checks": dict(self.checks),
            "messages": list(self.messages),
            "min_angle_deg": self.min_angle_deg,
            "n_nodes": self.n_nodes,
            "n_triangles": self.n_triangles,
            "ok": self.ok,
        }


def mesh_validate(mesh, min_angle_deg=1e-6, strict=False):
    """Check conformity, orientation, angles, boundary closure and markers."""
    checks, msgs = {}, []
    t = mesh.triangles
    if t.size and (t.min() < 0 or t.max() >= mesh.n_nodes):
        checks["indices"] = False
        msgs.append("triangle references a non-existent node")
        diag = MeshDiagnostics(checks, msgs, float("nan"), mesh.n_nodes, mesh.n_triangles)
        if strict:
            diag.raise_if_failed()
        return diag
    checks["indices"] = True

    sa = mesh.signed_areas
    bad = np.flatnonzero(sa <= 0)
    checks["orientation"] = bad.size == 0
    if bad.size:
        msgs.append(f"non-positive orientation in triangles {bad[:10].tolist()}")

    conform = True
    scale = max(mesh.diameter, 1e-300)
    pairs = cKDTree(mesh.nodes).query_pairs(1e-12 * scale, output_type="ndarray")
    if len(pairs):
        conform = False
        msgs.append(f"duplicated nodes {pairs[:5].tolist()}")
    counts = np.bincount(mesh.triangle_edges.ravel(), minlength=len(mesh.edges))
    if (counts > 2).any():
        conform = False
        msgs.append(f"edges shared by more than two triangles: {np.flatnonzero(counts > 2)[:10].tolist()}")
    single = set(np.flatnonzero(counts == 1).tolist())
    bids = mesh.edge_ids(mesh.boundary_edges)
    if (bids < 0).any():
        conform = False
        msgs.append("boundary edge that is not a mesh edge")
    bset = set(bids[bids >= 0].tolist())
    if single != bset:
        conform = False
        extra = sorted(single - bset)[:10]
        msgs.append(f"open edges not tagged as boundary: {[mesh.edges[e].tolist() for e in extra]}")
    used = np.zeros(mesh.n_nodes, dtype=bool)
    used[t.ravel()] = True
    if not used.all():
        conform = False
        msgs.append(f"nodes not used by any triangle: {np.flatnonzero(~used)[:10].tolist()}")
    checks["conformity"] = conform

    be = mesh.boundary_edges
    closed = True
    starts = np.bincount(be[:, 0], minlength=mesh.n_nodes)
    ends = np.bincount(be[:, 1], minlength=mesh.n_nodes)
    if not np.array_equal(starts, ends) or (starts > 1).any():
        closed = False
        msgs.append("boundary edges do not form closed loops")
    # domain must lie to the left of every boundary edge
    directed = {}
    for k in range(3):
        a, b = t[:, k], t[:, (k + 1) % 3]
        directed.update(zip(zip(a.tolist(), b.tolist()), [True] * len(a)))
    wrong = [i for i, (a, b) in enumerate(be.tolist()) if (a, b) not in directed]
    if wrong:
        closed = False
        msgs.append(f"boundary edges with the domain on their right: {wrong[:10]}")
    checks["boundary_closure"] = closed

    v = mesh.vertices
    angs = []
    for k in range(3):
        p, q, r = v[:, k], v[:, (k + 1) % 3], v[:, (k + 2) % 3]
        u, w = q - p, r - p
        cosang = (u * w).sum(1) / (np.hypot(*u.T) * np.hypot(*w.T) + 1e-300)
        angs.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
    min_angle = float(np.min(angs)) if mesh.n_triangles else float("nan")
    checks["min_angle"] = bool(min_angle > min_angle_deg)
    if not checks["min_angle"]:
        msgs.append(f"minimum angle {min_angle:.3g} deg below {min_angle_deg}")

    markers_ok = True
    for i, ((cx, cy), r) in enumerate(mesh.circle_markers):
        tris = mesh.disk_triangles(i)
        if tris.size == 0:
            markers_ok = False
            msgs.append(f"circle marker {i} encloses no triangle")
            continue
        local = mesh.triangle_edges[tris].ravel()
        cnt = np.bincount(local, minlength=len(mesh.edges))
        rim = mesh.edges[cnt == 1]
        d = np.hypot(mesh.nodes[rim][..., 0] - cx, mesh.nodes[rim][..., 1] - cy)
        if not np.allclose(d, r, rtol=1e-9, atol=0):
            markers_ok = False
            msgs.append(f"circle marker {i} (r={r}) is not a union of element edges")
        area = mesh.areas[tris].sum()
        if not 0.9 * np.pi * r * r < area <= np.pi * r * r * (1 + 1e-12):
            markers_ok = False
            msgs.append(f"circle marker {i} sub-mesh area {area:.6g} inconsistent with r={r}")
    checks["circle_markers"] = markers_ok

    diag = MeshDiagnostics(checks, msgs, min_angle, mesh.n_nodes, mesh.n_triangles)
    if strict:
        diag.raise_if_failed()
    return diag


def shoelace_area(points):
    x, y = np.asarray(points, dtype=float).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def boundary_loops(mesh):
    """Boundary node loops in traversal order."""
    nxt = dict(zip(mesh.boundary_edges[:, 0].tolist(), mesh.boundary_edges[:, 1].tolist()))
    loops, seen = [], set()
    for s in mesh.boundary_edges[:, 0].tolist():
        if s in seen:
            continue
        loop, cur = [], s
        while cur not in seen:
            seen.add(cur)
            loop.append(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


def disk_inside(mesh, center, radius, samples=256):
    """True if the closed disk lies inside the meshed (polygonal) domain."""
    th = 2 * np.pi * np.arange(samples) / samples
    rr = np.concatenate([[0.0], np.full(samples, radius)])
    pts = np.array(center, dtype=float) + np.stack(
        [rr * np.concatenate([[1.0], np.cos(th)]), rr * np.concatenate([[0.0], np.sin(th)])], axis=1
    )
    if (mesh.locate(pts) < 0).any():
        return False
    # a disk touching a polygonal boundary only at vertices is accepted
    return True


# ---------------------------------------------------------------------------
# integrals


def integrate(mesh, fn, region=None):
    """Integral of a callable ``fn(points) -> values`` over a region."""
    tris = (region or Region.whole()).triangles(mesh)
    pts = mesh.quad_points[tris]
    vals = np.asarray(fn(pts.reshape(-1, 2)), dtype=float)
    vals = vals.reshape(len(tris), pts.shape[1], *vals.shape[1:])
    w = mesh.quad_weights[tris]
    return np.tensordot(w, vals, axes=([0, 1], [0, 1]))


def integral_mean(mesh, fieldvals, region=None):
    """Mean value (1/|E|) int_E v of a field over a region.

    ``fieldvals`` is either a callable of points or an array of P2 nodal
    coefficients with shape (ndof,) or (ndof, k).
    """
    region = region or Region.whole()
    tris = region.triangles(mesh)
    area = mesh.areas[tris].sum()
    if callable(fieldvals):
        return integrate(mesh, fieldvals, region) / area
    from .fem import P2Space

    space = P2Space.of(mesh)
    vals = space.values(np.asarray(fieldvals, dtype=float), tris)
    w = mesh.quad_weights[tris]
    return np.tensordot(w, vals, axes=([0, 1], [0, 1])) / area


# ---------------------------------------------------------------------------
# ASCII mesh files


def write_mesh(mesh, path):
    """Write the NODES/TRIANGLES/BOUNDARY/CIRCLES text format."""
    lines = [f"NODES {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes.tolist()]
    lines.append(f"TRIANGLES {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"BOUNDARY {len(mesh.boundary_edges)}")
    lines += [f"{a} {b} {tag}" for (a, b), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)]
    lines.append(f"CIRCLES {len(mesh.circle_markers)}")
    lines += [f"{c[0]:.17g} {c[1]:.17g} {r:.17g}" for c, r in mesh.circle_markers]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    with open(path, encoding="ascii") as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    sections, i = {}, 0
    while i < len(rows):
        head = rows[i]
        if len(head) != 2 or head[0] not in ("NODES", "TRIANGLES", "BOUNDARY", "CIRCLES"):
            raise MeshError(f"malformed section header: {' '.join(head)}")
        n = int(head[1])
        sections[head[0]] = rows[i + 1 : i + 1 + n]
        if len(sections[head[0]]) != n:
            raise MeshError(f"section {head[0]} truncated")
        i += n + 1
    for name in ("NODES", "TRIANGLES", "BOUNDARY"):
        if name not in sections:
            raise MeshError(f"missing section {name}")
    nodes = np.array([[float(v) for v in r] for r in sections["NODES"]]).reshape(-1, 2)
    tris = np.array([[int(v) for v in r] for r in sections["TRIANGLES"]]).reshape(-1, 3)
    bedges = np.array([[int(r[0]), int(r[1])] for r in sections["BOUNDARY"]]).reshape(-1, 2)
    tags = tuple(r[2] if len(r) > 2 else "" for r in sections["BOUNDARY"])
    circles = tuple(
        ((float(r[0]), float(r[1])), float(r[2])) for r in sections.get("CIRCLES", [])
    )
    return Mesh(nodes, tris, bedges, tags, circles)
