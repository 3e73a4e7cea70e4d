"""P1 finite element matrices for the form

    a(u, v) = int grad u . grad v dx + int u v dmu
              + int int K_s(x, y) (u(x) - u(y)) (v(x) - v(y)) dmu_x dmu_y

with Dirichlet elimination on the nodes where the measure is locally
infinite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import AssemblyError, ConfigError, ConsistencyError, DegenerateInputError, GeometryError, HypothesisViolation
from .meshing import MeshMeasure, TriMesh

DEFAULT_S = 0.5
DEFAULT_ETA = 0.5


def p1_gradients(mesh: TriMesh):
    """Areas and constant barycentric gradients, shape (T,) and (T, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    bad = np.flatnonzero(det <= 0)
    if bad.size:
        raise AssemblyError(f"degenerate triangle {int(bad[0])} (signed area {0.5 * det[bad[0]]:.3e})")
    # gradient of lambda_k is the inward edge normal opposite k over 2*area
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    grads = np.stack([np.stack([-e[:, 1], e[:, 0]], axis=1) for e in (e0, e1, e2)], axis=1)
    grads /= det[:, None, None]
    return 0.5 * det, grads


def _scatter(mesh, local, n):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    area, g = p1_gradients(mesh)
    local = area[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    return _symmetrize(_scatter(mesh, local, mesh.n_nodes))


def assemble_mass(mesh: TriMesh, lumped: bool = False) -> sp.csr_matrix:
    area, _ = p1_gradients(mesh)
    ref = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = area[:, None, None] * ref
    M = _symmetrize(_scatter(mesh, local, mesh.n_nodes))
    if lumped:
        return lump(M)
    return M


def lump(M) -> sp.csr_matrix:
    return sp.diags(np.asarray(M.sum(axis=1)).ravel()).tocsr()


def _symmetrize(S):
    # summation order can leave ulp-level asymmetry; store the exact average
    S = S.tocsr()
    S = (0.5 * (S + S.T)).tocsr()
    S.sort_indices()
    return S


def _check_measure(mesh, measure):
    if len(measure.weights) != len(mesh.bedges):
        raise ConsistencyError(f"measure has {len(measure.weights)} edges, mesh boundary has {len(mesh.bedges)}")


def assemble_boundary_mass(mesh: TriMesh, measure: MeshMeasure) -> sp.csr_matrix:
    """Linear traces integrated exactly against an edgewise uniform density."""
    _check_measure(mesh, measure)
    w = np.asarray(measure.weights, dtype=float)
    b = mesh.bedges
    rows = np.concatenate([b[:, 0], b[:, 1], b[:, 0], b[:, 1]])
    cols = np.concatenate([b[:, 0], b[:, 1], b[:, 1], b[:, 0]])
    vals = np.concatenate([w / 3.0, w / 3.0, w / 6.0, w / 6.0])
    n = mesh.n_nodes
    B = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return _symmetrize(B)


def boundary_node_masses(mesh: TriMesh, measure: MeshMeasure) -> np.ndarray:
    """Node masses m_i: half the measure mass of each incident boundary edge."""
    _check_measure(mesh, measure)
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.bedges[:, 0], 0.5 * measure.weights)
    np.add.at(m, mesh.bedges[:, 1], 0.5 * measure.weights)
    return m


def power_kernel(s: float) -> Callable[[np.ndarray], np.ndarray]:
    expo = -(1.0 + 2.0 * s)
    return lambda r: r ** expo


def assemble_nonlocal(mesh: TriMesh, measure: MeshMeasure, s: float = DEFAULT_S, eta: float = DEFAULT_ETA,
                      kernel: Callable[[np.ndarray], np.ndarray] | None = None) -> sp.csr_matrix:
    """Node-collocation pair sum for the boundary double integral.

    Each unordered pair of boundary nodes at distance at least ``eta`` times
    the shorter incident edge contributes ``2 m_i m_j K(r)`` to the
    difference form (e_i - e_j)(e_i - e_j)^T. ``kernel`` replaces the
    default |x - y|^-(1+2s) by any nonnegative function of the distance.
    """
    if not 0 < s < 1:
        raise ConfigError(f"nonlocal exponent s must lie in (0, 1), got {s}")
    if not eta >= 0:
        raise ConfigError(f"near-diagonal cutoff eta must be nonnegative, got {eta}")
    _check_measure(mesh, measure)
    bnodes = mesh.boundary_nodes
    masses = boundary_node_masses(mesh, measure)[bnodes]
    lengths = mesh.bedge_lengths()
    # boundary edges are cyclic: node k is shared by edges k-1 and k
    minlen = np.minimum(lengths, np.roll(lengths, 1))
    xy = mesh.nodes[bnodes]
    if kernel is None:
        dense = kernels.nonlocal_matrix(xy, masses, minlen, s, eta)
    else:
        dense = _nonlocal_generic(xy, masses, minlen, eta, kernel)
    n = mesh.n_nodes
    ii, jj = np.nonzero(dense)
    N = sp.csr_matrix((dense[ii, jj], (bnodes[ii], bnodes[jj])), shape=(n, n))
    N.sort_indices()
    return N


def _nonlocal_generic(xy, masses, minlen, eta, kernel):
    diff = xy[:, None, :] - xy[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    off = ~np.eye(len(xy), dtype=bool)
    if np.any(r[off] == 0):
        i, j = np.argwhere((r == 0) & off)[0]
        raise GeometryError(f"coincident boundary nodes {i} and {j}")
    np.fill_diagonal(r, 1.0)
    c = 2.0 * np.outer(masses, masses) * kernel(r)
    c[r < eta * np.minimum.outer(minlen, minlen)] = 0.0
    np.fill_diagonal(c, 0.0)
    c = 0.5 * (c + c.T)
    out = -c
    out[np.diag_indices(len(xy))] = c.sum(axis=1)
    return out


@dataclass(frozen=True)
class AssembledOperator:
    """Stiffness, mass, boundary mass, nonlocal matrix and their sum
    ``A = K + B + N``; ``free`` lists the non-Dirichlet nodes."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    B: sp.csr_matrix
    N: sp.csr_matrix
    s: float | None
    dirichlet: np.ndarray

    @property
    def A(self) -> sp.csr_matrix:
        return (self.K + self.B + self.N).tocsr()

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet)

    def reduce(self, S) -> sp.csr_matrix:
        f = self.free
        return S.tocsr()[f][:, f].tocsr()

    @property
    def A_free(self) -> sp.csr_matrix:
        return self.reduce(self.A)

    @property
    def M_free(self) -> sp.csr_matrix:
        return self.reduce(self.M)

    def prolong(self, x_free) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.free] = x_free
        return x

    def restrict(self, x) -> np.ndarray:
        return np.asarray(x)[self.free]

    def form(self, u, v=None) -> float:
        v = u if v is None else v
        return float(u @ (self.A @ v))


def compose(K, M, B, N, dirichlet_nodes, s: float | None = DEFAULT_S) -> AssembledOperator:
    """Bundle the matrices and check the nontriviality hypothesis on mu."""
    n = K.shape[0]
    for name, S in (("M", M), ("B", B), ("N", N)):
        if S.shape != (n, n):
            raise ConsistencyError(f"{name} has shape {S.shape}, expected {(n, n)}")
    dirichlet = np.zeros(n, dtype=bool) if dirichlet_nodes is None else np.asarray(dirichlet_nodes, dtype=bool)
    if dirichlet.shape != (n,):
        raise ConsistencyError("Dirichlet flags must have one entry per node")
    mass = float(B.sum())
    if not (mass > 0 or dirichlet.any()):
        raise HypothesisViolation(
            "hypothesis H_mu violated: boundary measure has zero mass and no Dirichlet part, "
            "the form is not coercive"
        )
    if dirichlet.all():
        raise ConsistencyError("every node is Dirichlet; no free unknowns")
    return AssembledOperator(K.tocsr(), M.tocsr(), B.tocsr(), N.tocsr(), s, dirichlet)


def assemble(mesh: TriMesh, measure: MeshMeasure, s: float | None = DEFAULT_S, eta: float = DEFAULT_ETA,
             lumped: bool = False, kernel=None) -> AssembledOperator:
    """All matrices for one mesh/measure pair; ``s=None`` drops the nonlocal term."""
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh, lumped=lumped)
    B = assemble_boundary_mass(mesh, measure)
    if s is None:
        N = sp.csr_matrix((mesh.n_nodes, mesh.n_nodes))
    else:
        N = assemble_nonlocal(mesh, measure, s, eta, kernel)
    return compose(K, M, B, N, measure.dirichlet_nodes, s)


def is_m_matrix(S, tol: float = 0.0) -> bool:
    """Sufficient test: nonpositive off-diagonal entries and nonnegative row
    sums (weak diagonal dominance of a Z-matrix)."""
    S = sp.csr_matrix(S)
    off = S - sp.diags(S.diagonal())
    scale = abs(S).max() if S.nnz else 1.0
    if off.nnz and off.data.max() > tol * scale:
        return False
    return bool(np.asarray(S.sum(axis=1)).min() >= -tol * scale)


def sigma_boundary_mass(mesh: TriMesh) -> sp.csr_matrix:
    w = mesh.bedge_lengths()
    flags = np.zeros(len(w), dtype=bool)
    return assemble_boundary_mass(mesh, MeshMeasure(w, flags, np.zeros(mesh.n_nodes, bool), "sigma"))


def lp_norm(mesh: TriMesh, u, p: float = 4.0) -> float:
    """L^p norm of the P1 interpolant by the edge-midpoint rule per triangle."""
    area, _ = p1_gradients(mesh)
    ut = np.asarray(u)[mesh.triangles]
    mids = 0.5 * (ut + np.roll(ut, -1, axis=1))
    return float((area / 3.0 * (np.abs(mids) ** p).sum(axis=1)).sum() ** (1.0 / p))


def mazya_ratio(mesh: TriMesh, u, K=None, B_sigma=None) -> float:
    """||u||_L4 / (||grad u||^2 + ||u||^2_{L2(boundary, arclength)})^(1/2)."""
    K = assemble_stiffness(mesh) if K is None else K
    B_sigma = sigma_boundary_mass(mesh) if B_sigma is None else B_sigma
    u = np.asarray(u, dtype=float)
    denom = float(u @ (K @ u) + u @ (B_sigma @ u))
    if not denom > 0:
        raise DegenerateInputError("Maz'ya ratio undefined for a function with zero energy")
    return lp_norm(mesh, u, 4.0) / np.sqrt(denom)


def random_smooth_functions(count: int, seed: int = 0, modes: int = 4, max_freq: float = 3.0):
    """Mesh-independent random trigonometric functions of (x, y).

    Returns a callable ``f(points) -> (count, len(points))`` so the same
    sample can be evaluated on different meshes of one domain.
    """
    rng = np.random.default_rng(seed)
    const = rng.normal(size=count)
    amp = rng.normal(size=(count, modes))
    freq = rng.uniform(-max_freq, max_freq, size=(count, modes, 2)) * np.pi
    phase = rng.uniform(0.0, 2 * np.pi, size=(count, modes))

    def evaluate(points):
        pts = np.asarray(points, dtype=float)
        arg = np.einsum("cmd,nd->cmn", freq, pts) + phase[:, :, None]
        return const[:, None] + np.einsum("cm,cmn->cn", amp, np.cos(arg))

    return evaluate


def empirical_mazya_constant(mesh: TriMesh, samples: int = 1000, seed: int = 0, family: str = "smooth") -> float:
    """Largest Maz'ya ratio over a seeded random sample of functions.

    ``smooth`` draws mesh-independent trigonometric functions, so the value
    is comparable across refinements; ``nodal`` draws i.i.d. nodal values.
    """
    K = assemble_stiffness(mesh)
    B = sigma_boundary_mass(mesh)
    if family == "smooth":
        U = random_smooth_functions(samples, seed)(mesh.nodes)
    elif family == "nodal":
        U = np.random.default_rng(seed).normal(size=(samples, mesh.n_nodes))
    else:
        raise ConfigError(f"unknown sample family {family!r}")
    return max(mazya_ratio(mesh, u, K, B) for u in U)
