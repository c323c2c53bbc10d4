"""Lagrange spaces: quadrature, assembly, loads, projections, norms."""

import math

import numpy as np
import pytest

from subfem.errors import (
    NonNestedMeshError,
    PointOutsideDomainError,
    SegmentOutsideDomainError,
    UnsupportedDegreeError,
)
from subfem.fem import (
    DensityLoad,
    FeFunction,
    LineLoad,
    PointLoad,
    assemble_load,
    build_space,
    discrete_neg_power,
    export_vertex_csv,
    export_vtk,
    interpolate,
    l2_project,
    locate_triangles,
    norms,
    ritz_project,
    transfer_nodal,
    triangle_rule,
)
from subfem.mesh import graded_refine, GradingSpec, structured_square

from conftest import chain_space

SINE = lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])  # noqa: E731
SINE_GRAD = lambda p: np.column_stack([                              # noqa: E731
    np.pi * np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
    np.pi * np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])])

# frozen sine-series oracle: A^-1 1 at the center of the unit square,
# 16/(pi^4 k l (k^2+l^2)) sin(k pi/2) sin(l pi/2) over odd k, l < 400
NEG_LAPLACE_ONE_CENTER = 0.07367135126667050192


@pytest.mark.parametrize("degree", [2, 4, 6, 8, 10, 12])
def test_triangle_rule_exactness(degree):
    pts, w = triangle_rule(degree)
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            exact = math.factorial(i) * math.factorial(j) \
                / math.factorial(i + j + 2)
            got = float(np.sum(w * pts[:, 0] ** i * pts[:, 1] ** j))
            assert abs(got - exact) <= 1e-13 * exact


def test_space_degenerate_all_boundary():
    space = build_space(structured_square(1), 1)
    assert space.n_free == 0
    assert space.M.n == 0 and space.K.n == 0


def test_space_structured2_p1_entry():
    space = build_space(structured_square(2), 1)
    assert space.n_free == 1
    assert space.K.csr.toarray()[0, 0] == pytest.approx(4.0, abs=1e-13)


def test_unsupported_degree():
    with pytest.raises(UnsupportedDegreeError):
        build_space(structured_square(2), 6)


@pytest.mark.parametrize("r", [1, 2, 3, 4, 5])
def test_kronecker_identity(r):
    space = build_space(structured_square(3), r)
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal(space.n_free)
    fn = FeFunction(space, coeffs)
    vals = fn.evaluate(space.dof_coords[space.free_dofs])
    assert np.abs(vals - coeffs).max() <= 1e-13


@pytest.mark.parametrize("r", [1, 3, 5])
def test_mass_conservation(r):
    space = build_space(structured_square(4), r)
    # row sums of the full mass matrix are the basis integrals
    assert abs(space.basis_integrals.sum() - 1.0) <= 1e-13
    row_sums = np.asarray(space.mass_full @ np.ones(space.n_dofs))
    assert np.allclose(row_sums, space.basis_integrals, atol=1e-15)


def test_density_load_partition_of_unity():
    space = build_space(structured_square(8), 2)
    # over all DOFs (including boundary) the basis sums to 1
    assert abs(space.basis_integrals.sum() - 1.0) <= 1e-13


def test_point_load_at_vertex_is_unit_vector():
    space = build_space(structured_square(4), 1)
    load = assemble_load(space, PointLoad((0.5, 0.5)))
    full = np.zeros(space.n_dofs)
    full[space.free_dofs] = load.b
    vid = int(np.argmin(np.linalg.norm(space.mesh.vertices
                                       - np.array([0.5, 0.5]), axis=1)))
    expected = np.zeros(space.n_dofs)
    expected[vid] = 1.0
    assert np.allclose(full, expected, atol=1e-12)


def test_point_load_partition_of_unity():
    space = build_space(structured_square(8), 3)
    load = assemble_load(space, PointLoad((0.5 + 1e-4, 0.5 + 1e-4)))
    assert abs(load.b.sum() - 1.0) <= 1e-12


def test_point_load_outside_raises():
    space = build_space(structured_square(4), 1)
    with pytest.raises(PointOutsideDomainError):
        assemble_load(space, PointLoad((1.5, 0.5)))


def test_line_load_lengths():
    space = build_space(structured_square(8), 2)
    aligned = assemble_load(space, LineLoad((0.25, 0.5), (0.75, 0.5)))
    assert abs(aligned.b.sum() - 0.5) <= 1e-12
    tilted = assemble_load(space, LineLoad((0.25, 0.75), (0.75, 0.5)))
    assert abs(tilted.b.sum() - math.hypot(0.5, 0.25)) <= 1e-12


def test_line_load_outside_raises():
    space = build_space(structured_square(4), 1)
    with pytest.raises(SegmentOutsideDomainError):
        assemble_load(space, LineLoad((0.5, 0.5), (1.5, 0.5)))


def test_l2_project_identity_and_zero():
    space = build_space(structured_square(4), 3)
    rng = np.random.default_rng(1)
    fn = FeFunction(space, rng.standard_normal(space.n_free))
    back = l2_project(space, fn.evaluate)
    assert np.abs(back.coeffs - fn.coeffs).max() <= 1e-10
    zero = l2_project(space, lambda p: np.zeros(len(p)))
    assert np.abs(zero.coeffs).max() <= 1e-13


def test_l2_project_rate():
    errs = [norms(s := chain_space(8, i, 2, 3), l2_project(s, SINE),
                  SINE)["l2_error"] for i in range(2)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.2)


def test_ritz_project_identity_zero_rate():
    space = build_space(structured_square(4), 2)
    zero = ritz_project(space, lambda p: np.zeros((len(p), 2)))
    assert np.abs(zero.coeffs).max() <= 1e-13
    errs = [norms(s := chain_space(8, i, 2, 3), ritz_project(s, SINE_GRAD),
                  (SINE, SINE_GRAD))["l2_error"] for i in range(2)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.2)


def test_ritz_galerkin_orthogonality():
    """(grad(v - R_h v), grad chi) vanishes for discrete chi: with the
    assembly quadrature fixed, this is the linear-system residual."""
    space = build_space(structured_square(8), 3)
    proj = ritz_project(space, SINE_GRAD)
    # rebuild the load vector the projection used
    ref_pts, gpts, gw = space.quadrature(2 * space.degree)
    g = SINE_GRAD(gpts.reshape(-1, 2)).reshape(gw.shape + (2,))
    grad_ref = space.ref.eval_grad(ref_pts)
    _, _, _, inv = space._geometry()
    phys = np.einsum("tba,qlb->tqla", inv, grad_ref)
    contrib = np.einsum("tq,tqla,tqa->tl", gw, phys, g)
    b = np.zeros(space.n_dofs)
    np.add.at(b, space.tri_dofs.ravel(), contrib.ravel())
    residual = b[space.free_dofs] - space.K @ proj.coeffs
    rng = np.random.default_rng(2)
    for _ in range(20):
        chi = rng.standard_normal(space.n_free)
        num = abs(float(chi @ residual))
        den = abs(float(chi @ (space.K @ proj.coeffs))) + 1e-30
        assert num <= 1e-10 * den


@pytest.mark.parametrize("r", [4, 5])
def test_interpolate_exact_on_polynomials(r):
    """Degree-r polynomials that honor the boundary condition are
    reproduced exactly (the bubble x(1-x)y(1-y) has degree 4)."""
    space = build_space(structured_square(3), r)

    def poly(p):
        bubble = p[:, 0] * (1 - p[:, 0]) * p[:, 1] * (1 - p[:, 1])
        return bubble * (p[:, 0] - 0.4 * p[:, 1]) if r == 5 else bubble

    fn = interpolate(space, poly)
    pts = np.random.default_rng(4).uniform(0.05, 0.95, size=(50, 2))
    assert np.abs(fn.evaluate(pts) - poly(pts)).max() <= 1e-13


def test_interpolate_linf_rate():
    probe = np.random.default_rng(8).uniform(0.1, 0.9, size=(200, 2))
    errs = []
    for i in range(2):
        s = chain_space(8, i, 2, 3)
        err = np.abs(interpolate(s, SINE).evaluate(probe) - SINE(probe)).max()
        errs.append(err)
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.25)


def test_discrete_neg_power_center_value():
    space = chain_space(8, 2, 3, 2)   # n = 32, r = 2
    load = assemble_load(space, DensityLoad(lambda p: np.ones(len(p))))
    u1 = discrete_neg_power(space, load, 1)
    val = u1.evaluate(np.array([[0.5, 0.5]]))[0]
    # discretization error at r=2, h=1/32 is ~1e-7
    assert abs(val - NEG_LAPLACE_ONE_CENTER) <= 5e-7


def test_discrete_neg_power_zero_and_composition():
    space = build_space(structured_square(8), 2)
    zero = assemble_load(space, DensityLoad(lambda p: np.zeros(len(p))))
    for j in (1, 2):
        assert np.abs(discrete_neg_power(space, zero, j).coeffs).max() == 0.0
    load = assemble_load(space, DensityLoad(SINE))
    two_step = discrete_neg_power(space, load, 2)
    one = discrete_neg_power(space, load, 1)
    again = FeFunction(space, space.solve_stiffness(space.M @ one.coeffs))
    assert np.abs(two_step.coeffs - again.coeffs).max() <= 1e-14


def test_inverse_power_rates_at_least_nominal():
    """||A_h^-j P_h u0 - A^-j u0|| decays at least at order min(2j, r+1)
    (a worst-case bound; smooth data converges faster)."""
    ks = np.arange(1, 17)
    a_k = ks ** -0.55
    lam_k = 2.0 * np.pi ** 2 * ks ** 2

    def u0(p):
        sx = np.sin(np.pi * np.outer(p[:, 0], ks))
        sy = np.sin(np.pi * np.outer(p[:, 1], ks))
        return 2.0 * ((sx * sy) @ a_k)

    def p_exact(j):
        c = a_k / lam_k ** j

        def f(p):
            sx = np.sin(np.pi * np.outer(p[:, 0], ks))
            sy = np.sin(np.pi * np.outer(p[:, 1], ks))
            return 2.0 * ((sx * sy) @ c)

        return f

    r = 3
    for j in (1, 2):
        errs = []
        for i in range(3):
            s = chain_space(8, i, 3, r)
            load = assemble_load(s, DensityLoad(u0))
            u = discrete_neg_power(s, load, j)
            errs.append(norms(s, u, p_exact(j))["l2_error"])
        order = np.log2(errs[-2] / errs[-1])
        assert order >= min(2 * j, r + 1) - 0.4, (j, errs)


def test_norms_basics():
    space = build_space(structured_square(16), 5)
    zero = FeFunction(space, np.zeros(space.n_free))
    assert norms(space, zero, lambda p: np.zeros(len(p)))["l2_error"] == 0.0
    u = interpolate(space, SINE)
    out = norms(space, u, SINE)
    assert abs(out["l2_norm"] - 0.5) <= 1e-6


def test_cross_mesh_nested_exact():
    coarse = chain_space(8, 0, 2, 2)
    fine = chain_space(8, 1, 2, 2)
    u_c = l2_project(coarse, SINE)
    u_f = transfer_nodal(u_c, fine)
    assert norms(fine, u_f, u_c)["l2_error"] <= 1e-12


def test_cross_mesh_non_nested_raises():
    a = build_space(structured_square(8), 1)
    g = graded_refine(structured_square(8),
                      GradingSpec(centers=((0.5, 0.5),), gamma=0.4,
                                  h=1.0 / 8.0))
    b = build_space(g, 1)
    ua = FeFunction(a, np.zeros(a.n_free))
    ub = FeFunction(b, np.zeros(b.n_free))
    with pytest.raises(NonNestedMeshError):
        norms(b, ub, ua)


def test_locate_walk_matches_brute():
    mesh = structured_square(16)
    rng = np.random.default_rng(12)
    pts = rng.uniform(0.01, 0.99, size=(200, 2))
    tri = locate_triangles(mesh, pts)
    p = mesh.vertices[mesh.triangles[tri]]
    # barycentric containment check
    for x, tp in zip(pts, p):
        j = np.stack([tp[1] - tp[0], tp[2] - tp[0]], axis=-1)
        lam = np.linalg.solve(j, x - tp[0])
        assert lam.min() >= -1e-10 and lam.sum() <= 1.0 + 1e-10


def test_exports(tmp_path):
    space = build_space(structured_square(4), 1)
    fn = interpolate(space, SINE)
    csv_path = tmp_path / "field.csv"
    vtk_path = tmp_path / "field.vtk"
    export_vertex_csv(fn, csv_path)
    export_vtk(fn, vtk_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) == space.mesh.n_vertices + 1
    text = vtk_path.read_text()
    assert "UNSTRUCTURED_GRID" in text and "POINT_DATA" in text
