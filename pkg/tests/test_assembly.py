import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from fractal_rd import assembly, geometry, meshing
from fractal_rd.errors import AssemblyError, ConfigError, ConsistencyError, DegenerateInputError, HypothesisViolation
from fractal_rd.meshing import MeshMeasure, TriMesh

from conftest import make_problem

TREE = dict(a=0.55, alpha=0.8, beta=1.2, theta=math.pi / 4)


def right_triangle():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return TriMesh(nodes, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [0, 1, 2], [1.0, 1.0, 1.0])


def sigma_measure(mesh):
    return MeshMeasure(mesh.bedge_lengths(), np.zeros(len(mesh.bedges), bool),
                       np.zeros(mesh.n_nodes, bool), "sigma")


class TestStiffnessMass:
    def test_right_triangle_stiffness(self):
        K = assembly.assemble_stiffness(right_triangle()).toarray()
        np.testing.assert_allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)

    def test_right_triangle_mass(self):
        M = assembly.assemble_mass(right_triangle()).toarray()
        np.testing.assert_allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-16)

    def test_linear_energy_on_square(self):
        mesh = meshing.build_mesh(geometry.build_square(), 0)
        K = assembly.assemble_stiffness(mesh)
        x = mesh.nodes[:, 0]
        assert x @ (K @ x) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize("poly", [geometry.build_square(), geometry.build_koch(2),
                                      geometry.build_tree(generation=2, **TREE), geometry.build_cusp(0.5)],
                             ids=["square", "koch", "tree", "cusp"])
    def test_constants(self, poly):
        mesh = meshing.build_mesh(poly, 1)
        K = assembly.assemble_stiffness(mesh)
        M = assembly.assemble_mass(mesh)
        one = np.ones(mesh.n_nodes)
        assert np.abs(K @ one).max() <= 1e-12 * sp.linalg.norm(K, 1)
        assert one @ (M @ one) == pytest.approx(poly.signed_area(), rel=1e-12)
        ML = assembly.assemble_mass(mesh, lumped=True)
        np.testing.assert_allclose(ML.diagonal(), np.asarray(M.sum(axis=1)).ravel(), rtol=1e-14)
        np.testing.assert_allclose(assembly.lump(M).diagonal(), ML.diagonal(), rtol=1e-14)

    def test_degenerate_triangle_named(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        mesh = TriMesh(nodes, [[0, 1, 3], [0, 1, 2]], [[0, 1], [1, 3], [3, 0]], [0, 1, 2], [1.0, 1.0, 1.0])
        with pytest.raises(AssemblyError, match="triangle 1"):
            assembly.assemble_stiffness(mesh)


class TestBoundaryMass:
    def test_single_edge(self):
        mesh = right_triangle()
        L = 1.0
        w = np.array([L, 0.0, 0.0])
        B0 = assembly.assemble_boundary_mass(mesh, MeshMeasure(w, np.zeros(3, bool), np.zeros(3, bool), "x"))
        np.testing.assert_allclose(B0.toarray()[:2, :2], L / 6 * np.array([[2, 1], [1, 2]]), atol=1e-16)

    @pytest.mark.parametrize("kind", ["sigma", "hausdorff-d", "mixed"])
    def test_total_mass(self, kind):
        poly = geometry.build_koch(2)
        mesh, mm, op = make_problem(poly, kind, levels=1)
        one = np.ones(mesh.n_nodes)
        assert one @ (op.B @ one) == pytest.approx(mm.total_mass, rel=1e-12)

    def test_dirichlet_kind(self, square):
        _, mm, op = make_problem(square, "dirichlet", levels=1)
        assert op.B.nnz == 0 or abs(op.B).max() == 0
        assert op.dirichlet.sum() == 8

    def test_mismatch(self, square):
        mesh = meshing.build_mesh(square, 1)
        bad = MeshMeasure(np.ones(3), np.zeros(3, bool), np.zeros(mesh.n_nodes, bool), "x")
        with pytest.raises(ConsistencyError):
            assembly.assemble_boundary_mass(mesh, bad)


class TestNonlocal:
    def test_alternating_positive(self, square):
        mesh = meshing.build_mesh(square, 0)
        N = assembly.assemble_nonlocal(mesh, sigma_measure(mesh), 0.5)
        x = np.array([1.0, -1.0, 1.0, -1.0])
        assert x @ (N @ x) > 0

    def test_two_point_closed_form(self, square):
        mesh = meshing.build_mesh(square, 0)
        mm = sigma_measure(mesh)
        s = 0.5
        N = assembly.assemble_nonlocal(mesh, mm, s, eta=0.5).toarray()
        # unit square nodes: masses 1, neighbour distance 1, diagonal sqrt(2)
        assert N[0, 1] == pytest.approx(-2.0, rel=1e-14)
        assert N[0, 2] == pytest.approx(-2.0 * math.sqrt(2) ** -(1 + 2 * s), rel=1e-14)

    @pytest.mark.parametrize("s", [0.0, 1.0, -0.5, 1.5])
    def test_s_range(self, square, s):
        mesh = meshing.build_mesh(square, 0)
        with pytest.raises(ConfigError):
            assembly.assemble_nonlocal(mesh, sigma_measure(mesh), s)

    def test_custom_kernel_matches_power(self):
        poly = geometry.build_koch(1)
        mesh = meshing.build_mesh(poly, 1)
        mm = sigma_measure(mesh)
        a = assembly.assemble_nonlocal(mesh, mm, 0.3)
        b = assembly.assemble_nonlocal(mesh, mm, 0.3, kernel=assembly.power_kernel(0.3))
        np.testing.assert_allclose(a.toarray(), b.toarray(), rtol=1e-12, atol=1e-14)

    def test_custom_kernel_invariants(self, rng):
        poly = geometry.build_koch(1)
        mesh = meshing.build_mesh(poly, 1)
        N = assembly.assemble_nonlocal(mesh, sigma_measure(mesh), 0.5, kernel=lambda r: np.exp(-r * r))
        assert abs(N - N.T).max() == 0
        assert np.abs(N @ np.ones(mesh.n_nodes)).max() <= 1e-12 * abs(N).max()
        x = rng.normal(size=(20, mesh.n_nodes))
        assert np.all(np.einsum("ij,ij->i", x, (N @ x.T).T) >= 0)

    def test_interior_rows_zero(self, square_robin):
        mesh, _, op = square_robin
        inner = ~mesh.is_boundary
        assert abs(op.N.tocsr()[inner]).sum() == 0

    def test_cutoff_consistency(self, square):
        mesh = meshing.build_mesh(square, 3)
        mm = sigma_measure(mesh)
        x = np.sin(np.pi * mesh.nodes[:, 0]) + mesh.nodes[:, 1] ** 2
        q1 = x @ (assembly.assemble_nonlocal(mesh, mm, 0.5, eta=0.5) @ x)
        q2 = x @ (assembly.assemble_nonlocal(mesh, mm, 0.5, eta=0.25) @ x)
        assert abs(q2 - q1) / q1 < 0.05


MATRIX = [(d, k, s) for d in ("square", "koch", "tree") for k in ("sigma", "hausdorff-d", "dirichlet")
          for s in (0.25, 0.5, 0.75)]


def domain(name):
    return {"square": geometry.build_square(), "koch": geometry.build_koch(2),
            "tree": geometry.build_tree(generation=3, **TREE)}[name]


@pytest.mark.parametrize("d,kind,s", MATRIX)
def test_operator_invariants(d, kind, s):
    _, _, op = make_problem(domain(d), kind, levels=1, s=s)
    rng = np.random.default_rng(0)
    for S in (op.K, op.M, op.B, op.N, op.A):
        assert abs(S - S.T).max() == 0
    for S in (op.K, op.B, op.N, op.A):
        nrm = sp.linalg.norm(S, 1) if S.nnz else 0.0
        for _ in range(10):
            x = rng.normal(size=op.n)
            assert x @ (S @ x) >= -1e-12 * (x @ x) * nrm
    x = rng.normal(size=op.n)
    assert x @ (op.M @ x) > 0
    one = np.ones(op.n)
    assert np.abs(op.N @ one).max() <= 1e-12 * max(sp.linalg.norm(op.N, 1), 1e-300)
    np.linalg.cholesky(op.A_free.toarray())


class TestCompose:
    def test_zero_measure(self, square):
        with pytest.raises(HypothesisViolation, match="H_mu"):
            make_problem(square, "mixed", levels=1, smooth_scale=0.0)

    def test_dirichlet_reduces_to_laplacian(self, square):
        mesh, _, op = make_problem(square, "dirichlet", levels=2)
        K = assembly.assemble_stiffness(mesh).tocsr()
        inner = np.flatnonzero(~mesh.is_boundary)
        np.testing.assert_array_equal(op.A_free.toarray(), K[inner][:, inner].toarray())

    def test_robin_positive_definite(self, square):
        _, _, op = make_problem(square, "sigma", levels=1)
        assert np.linalg.eigvalsh(op.A.toarray()).min() > 0

    def test_shape_mismatch(self):
        K = sp.identity(3, format="csr")
        with pytest.raises(ConsistencyError):
            assembly.compose(K, K, sp.identity(4), K, None)

    def test_argmin(self, square_robin, rng):
        _, _, op = square_robin
        A = op.A_free
        b = rng.normal(size=A.shape[0])
        x = sp.linalg.spsolve(A.tocsc(), b)

        def J(y):
            return 0.5 * y @ (A @ y) - b @ y

        j0 = J(x)
        for _ in range(100):
            assert j0 <= J(x + 1e-3 * rng.normal(size=x.size))

    def test_prolong_restrict(self, square):
        _, _, op = make_problem(square, "dirichlet", levels=2)
        x = np.arange(op.n, dtype=float)
        y = op.prolong(op.restrict(x))
        assert np.all(y[op.dirichlet] == 0) and np.all(y[op.free] == x[op.free])


class TestMazya:
    def test_constant(self, square):
        mesh = meshing.build_mesh(square, 2)
        assert assembly.mazya_ratio(mesh, np.ones(mesh.n_nodes)) == pytest.approx(0.5, rel=1e-12)

    @given(st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3))
    @settings(max_examples=25, deadline=None)
    def test_homogeneous(self, lam):
        mesh = meshing.build_mesh(geometry.build_koch(1), 1)
        u = np.cos(mesh.nodes[:, 0] * 3) + mesh.nodes[:, 1]
        assert assembly.mazya_ratio(mesh, lam * u) == pytest.approx(assembly.mazya_ratio(mesh, u), rel=1e-12)

    def test_zero_function(self, square):
        mesh = meshing.build_mesh(square, 1)
        with pytest.raises(DegenerateInputError):
            assembly.mazya_ratio(mesh, np.zeros(mesh.n_nodes))

    def test_lp_norm_exact_for_constants(self):
        mesh = meshing.build_mesh(geometry.build_koch(2), 1)
        area = geometry.build_koch(2).signed_area()
        assert assembly.lp_norm(mesh, np.full(mesh.n_nodes, 2.0), 4) == pytest.approx(2 * area ** 0.25)

    def test_empirical_constant_finite(self):
        mesh = meshing.build_mesh(geometry.build_koch(2), 1)
        for fam in ("smooth", "nodal"):
            c = assembly.empirical_mazya_constant(mesh, 200, seed=1, family=fam)
            assert np.isfinite(c) and c > 0


def test_is_m_matrix():
    assert assembly.is_m_matrix(sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]])))
    assert not assembly.is_m_matrix(sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]])))
    assert not assembly.is_m_matrix(sp.csr_matrix(np.array([[1.0, -2.0], [-2.0, 1.0]])))
