"""Conforming P1 triangulations of polygons: ear clipping, red refinement,
boundary-edge bookkeeping and measure transfer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConsistencyError, GeometryError
from .geometry import BoundaryMeasure, PrefractalPolygon


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TriMesh:
    """Triangulation with boundary edges kept in polygon (cyclic) order.

    ``bedge_fraction`` is the share of the parent polygon edge covered by
    each boundary edge.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    bedges: np.ndarray
    bedge_parent: np.ndarray
    bedge_fraction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(self, "bedges", _frozen(self.bedges, np.int64))
        object.__setattr__(self, "bedge_parent", _frozen(self.bedge_parent, np.int64))
        object.__setattr__(self, "bedge_fraction", _frozen(self.bedge_fraction, float))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Boundary node ids in cyclic boundary order."""
        return self.bedges[:, 0].copy()

    @property
    def is_boundary(self) -> np.ndarray:
        flag = np.zeros(self.n_nodes, dtype=bool)
        flag[self.bedges.ravel()] = True
        return flag

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted lexicographically."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def bedge_lengths(self) -> np.ndarray:
        d = self.nodes[self.bedges[:, 1]] - self.nodes[self.bedges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])


@dataclass(frozen=True)
class MeshMeasure:
    """A BoundaryMeasure transferred to the boundary edges of a mesh."""

    weights: np.ndarray
    edge_dirichlet: np.ndarray
    dirichlet_nodes: np.ndarray
    kind: str

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def triangulate(poly: PrefractalPolygon) -> TriMesh:
    """Ear-clipping triangulation using the polygon vertices as nodes."""
    if poly.signed_area() <= 0:
        raise GeometryError("polygon must be counterclockwise with positive area")
    i, j = poly.first_crossing()
    if i >= 0:
        raise GeometryError(f"polygon is not simple: edges {i} and {j} intersect")
    tris = kernels.ear_clip(poly.vertices)
    n = poly.n_edges
    bedges = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return TriMesh(poly.vertices, tris, bedges, np.arange(n), np.ones(n))


def _red_split(mesh: TriMesh):
    nodes, tris = mesh.nodes, mesh.triangles
    edges = mesh.edges()
    n = len(nodes)
    # canonical numbering: midpoint of the k-th sorted edge gets id n + k
    key = edges[:, 0] * n + edges[:, 1]

    def mid(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return n + np.searchsorted(key, lo * n + hi)

    a, b, c = tris.T
    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    new_tris = np.concatenate([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ])
    # keep children of one parent adjacent, ordered by parent id
    order = np.arange(len(new_tris)).reshape(4, -1).T.ravel()
    new_tris = new_tris[order]
    new_nodes = np.vstack([nodes, 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])])

    b0, b1 = mesh.bedges.T
    bm = mid(b0, b1)
    bedges = np.stack([np.stack([b0, bm], axis=1), np.stack([bm, b1], axis=1)], axis=1).reshape(-1, 2)
    parent = np.repeat(mesh.bedge_parent, 2)
    fraction = np.repeat(0.5 * mesh.bedge_fraction, 2)
    return TriMesh(new_nodes, new_tris, bedges, parent, fraction)


def _tri_quality(p0, p1, p2):
    d1, d2, d3 = p1 - p0, p2 - p1, p0 - p2
    cross = d1[..., 0] * (-d3[..., 1]) - d1[..., 1] * (-d3[..., 0])
    ssq = (d1 * d1).sum(-1) + (d2 * d2).sum(-1) + (d3 * d3).sum(-1)
    return cross / ssq


def laplacian_smooth(mesh: TriMesh) -> TriMesh:
    """One Gauss-Seidel pass moving each interior node to the centroid of its
    neighbours, kept only if the worst incident triangle does not get worse."""
    nodes = np.array(mesh.nodes)
    tris = mesh.triangles
    interior = ~mesh.is_boundary
    edges = mesh.edges()
    nbr_ptr, nbr = _adjacency(len(nodes), np.vstack([edges, edges[:, ::-1]]))
    tri_ptr, tri_ids = _adjacency(len(nodes), np.stack([tris.ravel(), np.repeat(np.arange(len(tris)), 3)], axis=1))
    for v in np.flatnonzero(interior):
        ring = nbr[nbr_ptr[v]:nbr_ptr[v + 1]]
        patch = tris[tri_ids[tri_ptr[v]:tri_ptr[v + 1]]]
        before = _tri_quality(*(nodes[patch[:, k]] for k in range(3))).min()
        old = nodes[v].copy()
        nodes[v] = nodes[ring].mean(axis=0)
        after = _tri_quality(*(nodes[patch[:, k]] for k in range(3))).min()
        if not after >= before:
            nodes[v] = old
    return TriMesh(nodes, tris, mesh.bedges, mesh.bedge_parent, mesh.bedge_fraction)


def _adjacency(n, pairs):
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    ptr = np.searchsorted(pairs[:, 0], np.arange(n + 1))
    return ptr, pairs[:, 1]


def refine(mesh: TriMesh, levels: int = 1, smooth: bool = True) -> TriMesh:
    """Uniform red refinement, each triangle split into four, optionally
    followed by one smoothing pass per level."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    for _ in range(levels):
        mesh = _red_split(mesh)
        if smooth:
            mesh = laplacian_smooth(mesh)
    return mesh


def build_mesh(poly: PrefractalPolygon, levels: int = 0, smooth: bool = True) -> TriMesh:
    return refine(triangulate(poly), levels, smooth)


def mesh_stats(mesh: TriMesh) -> dict:
    e = mesh.edges()
    d = mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    p = mesh.nodes[mesh.triangles]
    angles = []
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        angles.append(np.degrees(np.arctan2(cross, (u * v).sum(1))))
    return {
        "h_max": float(lengths.max()),
        "h_min": float(lengths.min()),
        "min_angle": float(np.min(angles)),
        "node_count": mesh.n_nodes,
        "triangle_count": mesh.n_triangles,
        "boundary_node_count": int(mesh.is_boundary.sum()),
    }


def check_mesh(mesh: TriMesh) -> None:
    """Raise GeometryError unless areas are positive and edges conform."""
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        raise GeometryError(f"triangle {int(np.argmin(areas))} has nonpositive area")
    t = mesh.triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise GeometryError("edge shared by more than two triangles")
    b = np.sort(mesh.bedges, axis=1)
    single = uniq[counts == 1]
    if len(single) != len(b) or not np.array_equal(np.unique(b, axis=0), single):
        raise GeometryError("boundary edges do not match the edges with one incident triangle")


def transfer_measure(mesh: TriMesh, measure: BoundaryMeasure) -> MeshMeasure:
    """Split polygon-edge masses over the boundary edges of ``mesh`` in
    proportion to their share of the parent edge."""
    if len(measure.weights) <= int(mesh.bedge_parent.max()):
        raise ConsistencyError("measure has fewer edges than the mesh boundary refers to")
    weights = measure.weights[mesh.bedge_parent] * mesh.bedge_fraction
    edge_flags = measure.edge_dirichlet[mesh.bedge_parent]
    dirichlet = np.zeros(mesh.n_nodes, dtype=bool)
    dirichlet[mesh.bedges[edge_flags].ravel()] = True
    return MeshMeasure(weights, edge_flags, dirichlet, measure.kind)
