"""Conforming triangulations: structured unit-square grids, uniform red
refinement, graded longest-edge bisection toward marked points, and
ASCII MSH v2.2 import/export.

Meshes are immutable after construction; refinement returns a new mesh
that remembers its parent and the parent triangle of every child, so
nested pairs support exact cross-mesh evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections import defaultdict

import numpy as np

from subfem.errors import (
    MeshBudgetError,
    MshParseError,
    NonConformingMeshError,
    NonPlanarMeshError,
)


class TriMesh:
    """Triangulation of a polygon.

    vertices       (nv, 2) float
    triangles      (nt, 3) int, positively oriented
    boundary_edges (ne, 2) int vertex pairs covering the boundary
    boundary_markers (ne,) int
    level          refinement generation
    parent, parent_tri  lineage for nested evaluation
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_markers=None,
                 level=0, parent=None, parent_tri=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        if boundary_markers is None:
            boundary_markers = np.zeros(len(self.boundary_edges), dtype=np.int64)
        self.boundary_markers = np.ascontiguousarray(boundary_markers, dtype=np.int64)
        self.level = level
        self.parent = parent
        self.parent_tri = None if parent_tri is None else np.asarray(parent_tri, dtype=np.int64)
        self._adjacency = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def __repr__(self):
        return (f"TriMesh(level={self.level}, {self.n_vertices} vertices, "
                f"{self.n_triangles} triangles)")

    def signed_areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def diameters(self):
        p = self.vertices[self.triangles]
        e0 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        e1 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
        e2 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
        return np.maximum(e0, np.maximum(e1, e2))

    def h_max(self):
        return float(self.diameters().max())

    def barycenters(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edge_use_counts(self):
        """Map sorted vertex pair -> number of incident triangles."""
        counts = defaultdict(int)
        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                counts[(min(u, v), max(u, v))] += 1
        return counts

    def adjacency(self):
        """(nt, 3) neighbor triangle across local edge i (opposite vertex i),
        -1 on the boundary.  Built lazily and cached."""
        if self._adjacency is None:
            edge_owner = {}
            adj = np.full((self.n_triangles, 3), -1, dtype=np.int64)
            for t, (a, b, c) in enumerate(self.triangles):
                # local edge i is opposite local vertex i
                for i, (u, v) in enumerate(((b, c), (c, a), (a, b))):
                    key = (min(u, v), max(u, v))
                    if key in edge_owner:
                        s, j = edge_owner.pop(key)
                        adj[t, i] = s
                        adj[s, j] = t
                    else:
                        edge_owner[key] = (t, i)
            self._adjacency = adj
        return self._adjacency

    def min_angle(self):
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosv = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0))))
        return float(np.min(angles))


@dataclass(frozen=True)
class GradingSpec:
    """Graded-size request: local diameter ~ |x - x0|^(1-gamma) * h inside
    the patch, floored at h_star ~ h^(1/gamma) near the centers."""

    centers: tuple
    gamma: float
    h: float
    d0: float | None = None
    h_star: float | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.h <= 0.0:
            raise ValueError("h must be positive")
        object.__setattr__(self, "centers",
                           tuple(tuple(map(float, c)) for c in self.centers))
        if self.h_star is not None and self.h_star > self.h:
            raise ValueError("h_star must be <= h")

    def floor_size(self):
        return self.h_star if self.h_star is not None else self.h ** (1.0 / self.gamma)

    def target_size(self, points):
        """Admissible diameter at each point: max(h_star, dist^(1-gamma) h)."""
        points = np.atleast_2d(points)
        d = np.full(len(points), np.inf)
        for c in self.centers:
            d = np.minimum(d, np.linalg.norm(points - np.asarray(c), axis=1))
        return np.maximum(self.floor_size(), d ** (1.0 - self.gamma) * self.h)

    def resolve_d0(self, mesh: TriMesh) -> float:
        """Half the distance from each center to the nearest boundary edge,
        capped at 0.25 (interior-center default)."""
        if self.d0 is not None:
            return self.d0
        dmin = np.inf
        for c in self.centers:
            c = np.asarray(c)
            for a, b in mesh.boundary_edges:
                pa, pb = mesh.vertices[a], mesh.vertices[b]
                ab = pb - pa
                t = np.clip(np.dot(c - pa, ab) / np.dot(ab, ab), 0.0, 1.0)
                dmin = min(dmin, np.linalg.norm(pa + t * ab - c))
        return min(0.5 * dmin, 0.25)


def structured_square(n: int) -> TriMesh:
    """n x n grid of the unit square, each cell split along the
    positive-slope diagonal: 2 n^2 triangles, (n+1)^2 vertices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    xv, yv = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    edges, markers = [], []
    for i in range(n):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        markers.append(1)
        edges.append((vid(i, n), vid(i + 1, n)))
        markers.append(3)
        edges.append((vid(0, i), vid(0, i + 1)))
        markers.append(4)
        edges.append((vid(n, i), vid(n, i + 1)))
        markers.append(2)
    return TriMesh(vertices, tris, edges, markers)


def jittered_square(n: int, jitter: float = 0.25, seed: int = 0,
                    keep_rows: tuple = ()) -> TriMesh:
    """structured_square(n) with interior vertices displaced by a
    deterministic uniform perturbation of amplitude jitter * h.

    Perfectly uniform grids superconverge for some element degrees and
    mask the generic rates the convergence studies target; a jittered
    base mesh behaves like the unstructured meshes those studies assume.
    Vertices with a y-coordinate in keep_rows stay put (so a segment
    lying on a mesh line stays covered by edges).
    """
    mesh = structured_square(n)
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-jitter, jitter, size=(mesh.n_vertices, 2)) / n
    verts = mesh.vertices.copy()
    interior = np.all((verts > 1e-12) & (verts < 1.0 - 1e-12), axis=1)
    for y in keep_rows:
        interior &= np.abs(verts[:, 1] - y) > 1e-12
    verts[interior] += shift[interior]
    out = TriMesh(verts, mesh.triangles, mesh.boundary_edges,
                  mesh.boundary_markers)
    if np.any(out.signed_areas() <= 0.0):
        raise ValueError("jitter amplitude flipped a triangle")
    return out


def red_refine(mesh: TriMesh) -> TriMesh:
    """Split every triangle into four congruent children at the edge
    midpoints."""
    verts = list(map(tuple, mesh.vertices))
    midpoint = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        m = midpoint.get(key)
        if m is None:
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            verts.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            m = len(verts) - 1
            midpoint[key] = m
        return m

    tris, parent_tri = [], []
    for t, (a, b, c) in enumerate(mesh.triangles):
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)])
        parent_tri.extend([t, t, t, t])
    edges, markers = [], []
    for (a, b), mk in zip(mesh.boundary_edges, mesh.boundary_markers):
        m = mid(a, b)
        edges.extend([(a, m), (m, b)])
        markers.extend([mk, mk])
    return TriMesh(verts, tris, edges, markers, level=mesh.level + 1,
                   parent=mesh, parent_tri=parent_tri)


class _Bisector:
    """Mutable scratch structure for conforming longest-edge bisection."""

    def __init__(self, mesh: TriMesh):
        self.verts = list(map(tuple, mesh.vertices))
        self.tris = [tuple(t) for t in mesh.triangles]
        self.alive = [True] * len(self.tris)
        self.origin = list(range(len(self.tris)))
        self.edge2tris = defaultdict(set)
        for t, tri in enumerate(self.tris):
            for e in self._edges(tri):
                self.edge2tris[e].add(t)
        self.boundary = {}
        for (a, b), mk in zip(mesh.boundary_edges, mesh.boundary_markers):
            self.boundary[(min(a, b), max(a, b))] = int(mk)
        self.midpoint = {}

    @staticmethod
    def _edges(tri):
        a, b, c = tri
        return ((min(a, b), max(a, b)), (min(b, c), max(b, c)),
                (min(c, a), max(c, a)))

    def longest_edge(self, t):
        tri = self.tris[t]
        best, best_key = None, None
        for e in self._edges(tri):
            pa, pb = self.verts[e[0]], self.verts[e[1]]
            l2 = (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2
            key = (l2, e)  # deterministic tie-break by vertex ids
            if best_key is None or key > best_key:
                best, best_key = e, key
        return best

    def n_alive(self):
        return sum(self.alive)

    def _split_edge(self, e):
        m = self.midpoint.get(e)
        if m is None:
            pa, pb = self.verts[e[0]], self.verts[e[1]]
            self.verts.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            m = len(self.verts) - 1
            self.midpoint[e] = m
            mk = self.boundary.pop(e, None)
            if mk is not None:
                self.boundary[(min(e[0], m), max(e[0], m))] = mk
                self.boundary[(min(e[1], m), max(e[1], m))] = mk
        return m

    def _replace(self, t, children):
        self.alive[t] = False
        for e in self._edges(self.tris[t]):
            self.edge2tris[e].discard(t)
        for child in children:
            cid = len(self.tris)
            self.tris.append(child)
            self.alive.append(True)
            self.origin.append(self.origin[t])
            for e in self._edges(child):
                self.edge2tris[e].add(cid)

    def _bisect_at(self, t, e, m):
        a, b = e
        tri = self.tris[t]
        c = next(v for v in tri if v not in e)
        # preserve orientation: children inherit the cyclic order of (tri)
        i = tri.index(a)
        if tri[(i + 1) % 3] == b:
            self._replace(t, [(a, m, c), (m, b, c)])
        else:
            self._replace(t, [(b, m, c), (m, a, c)])

    def refine(self, marked):
        """Bisect every marked triangle at its longest edge, recursively
        bisecting neighbors first when their longest edge differs
        (Rivara's longest-edge propagation path)."""
        stack = list(marked)
        while stack:
            t = stack[-1]
            if not self.alive[t]:
                stack.pop()
                continue
            e = self.longest_edge(t)
            nbs = [s for s in self.edge2tris[e] if s != t and self.alive[s]]
            nb = nbs[0] if nbs else None
            if nb is not None and self.longest_edge(nb) != e:
                stack.append(nb)
                continue
            m = self._split_edge(e)
            self._bisect_at(t, e, m)
            if nb is not None:
                self._bisect_at(nb, e, m)
            stack.pop()

    def to_mesh(self, base: TriMesh) -> TriMesh:
        ids = [t for t in range(len(self.tris)) if self.alive[t]]
        tris = [self.tris[t] for t in ids]
        parent_tri = [self.origin[t] for t in ids]
        edges = list(self.boundary.keys())
        markers = [self.boundary[e] for e in edges]
        return TriMesh(self.verts, tris, edges, markers, level=base.level + 1,
                       parent=base, parent_tri=parent_tri)


def graded_refine(mesh: TriMesh, spec: GradingSpec,
                  budget: int = 2_000_000) -> TriMesh:
    """Conforming longest-edge bisection until every triangle satisfies
    diam(K) <= max(h_star, dist(barycenter, nearest center)^(1-gamma) h).

    Idempotent: a mesh already satisfying the predicate is returned as-is
    (same object).  Raises MeshBudgetError beyond the triangle budget.
    """
    work = _Bisector(mesh)
    changed = False
    while True:
        ids = [t for t in range(len(work.tris)) if work.alive[t]]
        pts = np.array([[work.verts[v] for v in work.tris[t]] for t in ids])
        bary = pts.mean(axis=1)
        diam = np.maximum(
            np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1),
            np.maximum(np.linalg.norm(pts[:, 2] - pts[:, 1], axis=1),
                       np.linalg.norm(pts[:, 0] - pts[:, 2], axis=1)))
        target = spec.target_size(bary)
        marked = [ids[i] for i in np.flatnonzero(diam > target * (1.0 + 1e-12))]
        if not marked:
            break
        changed = True
        work.refine(marked)
        if work.n_alive() > budget:
            raise MeshBudgetError(
                f"grading to h={spec.h} exceeds the {budget}-triangle budget")
    if not changed:
        return mesh
    return work.to_mesh(mesh)


def validate(mesh: TriMesh, check_hanging: bool = True) -> None:
    """Raise NonConformingMeshError unless the mesh is a conforming,
    positively oriented triangulation whose count-1 edges exactly cover
    the declared boundary."""
    areas = mesh.signed_areas()
    if np.any(areas <= 0.0):
        raise NonConformingMeshError(
            f"{int(np.sum(areas <= 0))} non-positive triangle(s)")
    counts = mesh.edge_use_counts()
    bad = [e for e, c in counts.items() if c > 2]
    if bad:
        raise NonConformingMeshError(f"edge(s) used by >2 triangles: {bad[:5]}")
    declared = {(min(a, b), max(a, b)) for a, b in mesh.boundary_edges}
    exposed = {e for e, c in counts.items() if c == 1}
    if declared != exposed:
        raise NonConformingMeshError(
            f"boundary mismatch: {len(declared ^ exposed)} edge(s) differ")
    if check_hanging and mesh.n_vertices * len(exposed) <= 50_000_000:
        # A vertex strictly inside an exposed edge is a hanging node.
        used = np.zeros(mesh.n_vertices, dtype=bool)
        used[mesh.triangles.ravel()] = True
        pts = mesh.vertices
        for a, b in exposed:
            pa, pb = pts[a], pts[b]
            ab = pb - pa
            ab2 = np.dot(ab, ab)
            t = ((pts - pa) @ ab) / ab2
            d2 = np.sum((pts - (pa + np.outer(t, ab))) ** 2, axis=1)
            on = used & (d2 < 1e-24) & (t > 1e-12) & (t < 1.0 - 1e-12)
            on[[a, b]] = False
            if np.any(on):
                raise NonConformingMeshError(
                    f"hanging node {int(np.flatnonzero(on)[0])} on edge ({a},{b})")


def ancestor_triangles(fine: TriMesh, coarse: TriMesh,
                       tri_idx: np.ndarray) -> np.ndarray:
    """Map triangle indices of `fine` to the containing triangle indices
    of the ancestor mesh `coarse` through the refinement lineage."""
    from subfem.errors import NonNestedMeshError

    idx = np.asarray(tri_idx, dtype=np.int64)
    mesh = fine
    while mesh is not coarse:
        if mesh.parent is None or mesh.parent_tri is None:
            raise NonNestedMeshError("meshes are not in one refinement lineage")
        idx = mesh.parent_tri[idx]
        mesh = mesh.parent
    return idx


def read_msh(path) -> TriMesh:
    """Read an ASCII MSH v2.2 file with 2D triangle elements.

    Boundary edges come from 2-node line elements when present (marker =
    first tag), otherwise they are inferred from triangle adjacency.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()

    def fail(msg, ln):
        raise MshParseError(msg, line=ln + 1)

    i = 0
    nodes, node_ids = [], []
    tris, blines, markers = [], [], []
    seen_nodes = seen_elements = False
    while i < len(lines):
        tok = lines[i].strip()
        if tok == "$MeshFormat":
            if i + 1 >= len(lines):
                fail("truncated $MeshFormat", i)
            parts = lines[i + 1].split()
            if not parts or not parts[0].startswith("2."):
                fail(f"unsupported MSH version {parts[:1]}", i + 1)
            i += 2
            if i >= len(lines) or lines[i].strip() != "$EndMeshFormat":
                fail("missing $EndMeshFormat", min(i, len(lines) - 1))
        elif tok == "$Nodes":
            seen_nodes = True
            if i + 1 >= len(lines):
                fail("truncated $Nodes", i)
            try:
                count = int(lines[i + 1])
            except ValueError:
                fail("bad node count", i + 1)
            if i + 1 + count >= len(lines):
                fail("truncated node list", len(lines) - 1)
            for j in range(count):
                parts = lines[i + 2 + j].split()
                if len(parts) < 4:
                    fail("node needs 'id x y z'", i + 2 + j)
                try:
                    nid = int(parts[0])
                    x, y, z = map(float, parts[1:4])
                except ValueError:
                    fail("bad node line", i + 2 + j)
                if abs(z) > 1e-12:
                    raise NonPlanarMeshError(f"node {nid} has z = {z}")
                node_ids.append(nid)
                nodes.append((x, y))
            i += 2 + count
            if i >= len(lines) or lines[i].strip() != "$EndNodes":
                fail("missing $EndNodes", min(i, len(lines) - 1))
        elif tok == "$Elements":
            seen_elements = True
            try:
                count = int(lines[i + 1])
            except (IndexError, ValueError):
                fail("bad element count", i + 1)
            if i + 1 + count >= len(lines):
                fail("truncated element list", len(lines) - 1)
            for j in range(count):
                parts = lines[i + 2 + j].split()
                try:
                    vals = list(map(int, parts))
                except ValueError:
                    fail("bad element line", i + 2 + j)
                if len(vals) < 3:
                    fail("element needs 'id type ntags ...'", i + 2 + j)
                etype, ntags = vals[1], vals[2]
                body = vals[3:]
                if len(body) < ntags:
                    fail("truncated element tags", i + 2 + j)
                tags, conn = body[:ntags], body[ntags:]
                if etype == 2:
                    if len(conn) != 3:
                        fail("triangle needs 3 nodes", i + 2 + j)
                    tris.append(conn)
                elif etype == 1:
                    if len(conn) != 2:
                        fail("line needs 2 nodes", i + 2 + j)
                    blines.append(conn)
                    markers.append(tags[0] if tags else 0)
                # other element types (points etc.) are ignored
            i += 2 + count
            if i >= len(lines) or lines[i].strip() != "$EndElements":
                fail("missing $EndElements", min(i, len(lines) - 1))
        i += 1

    if not seen_nodes or not seen_elements:
        fail("missing $Nodes or $Elements section", len(lines) - 1)
    if not tris:
        fail("no triangles in file", len(lines) - 1)

    remap = {nid: k for k, nid in enumerate(node_ids)}
    try:
        tris = [[remap[v] for v in t] for t in tris]
        blines = [[remap[v] for v in e] for e in blines]
    except KeyError as exc:
        raise MshParseError(f"element references unknown node {exc}") from exc

    vertices = np.asarray(nodes)
    tris = np.asarray(tris)
    p = vertices[tris]
    areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    if np.any(areas == 0.0):
        raise NonConformingMeshError("degenerate (zero-area) triangle")
    flip = areas < 0.0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    counts = defaultdict(int)
    for a, b, c in tris:
        for u, v in ((a, b), (b, c), (c, a)):
            counts[(min(u, v), max(u, v))] += 1
    exposed = {e for e, c in counts.items() if c == 1}
    declared = {(min(a, b), max(a, b)): mk for (a, b), mk in zip(blines, markers)}
    edges = sorted(exposed)
    edge_markers = [declared.get(e, 0) for e in edges]

    mesh = TriMesh(vertices, tris, edges, edge_markers)
    validate(mesh)
    return mesh


def write_msh(mesh: TriMesh, path) -> None:
    """Write the mesh as ASCII MSH v2.2 (triangles + marked boundary lines)."""
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.n_vertices}\n")
        for k, (x, y) in enumerate(mesh.vertices, start=1):
            fh.write(f"{k} {x:.17g} {y:.17g} 0\n")
        fh.write("$EndNodes\n$Elements\n")
        ne = len(mesh.boundary_edges)
        fh.write(f"{ne + mesh.n_triangles}\n")
        eid = 1
        for (a, b), mk in zip(mesh.boundary_edges, mesh.boundary_markers):
            fh.write(f"{eid} 1 2 {mk} {mk} {a + 1} {b + 1}\n")
            eid += 1
        for a, b, c in mesh.triangles:
            fh.write(f"{eid} 2 2 0 0 {a + 1} {b + 1} {c + 1}\n")
            eid += 1
        fh.write("$EndElements\n")
