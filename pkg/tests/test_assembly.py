"""
Operator assembly, pencil structure, Gram matrices and the Dirichlet-to-Neumann map.
"""

import io
import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from assembly import (
    AssemblyError, assemble_boundary, assemble_bulk, assemble_operators, auxiliary_boundary_matrix,
    build_pencil, dtn_matrix, gram_set, green_identity_gap, harmonic_extension,
    norm_equivalence_bounds, restrict_to_loop, write_coo_text
)
from config import InvalidParameterError
from geometry_mesh import Mesh, build_disk_mesh, trace_map


def _asymmetry(matrix):
    matrix = sp.csr_matrix(matrix)
    diff = matrix - matrix.T
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def _loop_angles(mesh, trace):
    pts = mesh.nodes[trace.loop]
    return np.arctan2(pts[:, 1], pts[:, 0])


# =============================================================================
# BULK AND BOUNDARY
# =============================================================================

def test_unit_right_triangle_stiffness(unit_triangle):
    mesh, _ = unit_triangle
    _, K = assemble_bulk(mesh)
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    np.testing.assert_allclose(K.toarray(), expected, atol=1e-15)


def test_degenerate_triangle_is_named():
    mesh = Mesh([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [[0, 1, 2]], [0, 1, 2])
    with pytest.raises(AssemblyError) as e:
        assemble_bulk(mesh)
    assert e.value.triangle == 0


def test_bulk_kernel_and_area(disk8):
    mesh, _ = disk8
    M, K = assemble_bulk(mesh)
    ones = np.ones(mesh.num_nodes)
    assert np.max(np.abs(K @ ones)) <= 1e-12
    assert ones @ (M @ ones) == pytest.approx(mesh.total_area(), rel=1e-13)
    assert _asymmetry(M) <= 1e-13
    assert _asymmetry(K) <= 1e-13


def test_boundary_stencil_on_equal_chords():
    mesh = build_disk_mesh(2)
    trace = trace_map(mesh)
    _, K = assemble_boundary(mesh, trace)
    chord = 2.0 * math.sin(math.pi / 12.0)
    K_loop = restrict_to_loop(K, trace).toarray()
    m = mesh.num_boundary
    for i in range(m):
        assert K_loop[i, i] == pytest.approx(2.0 / chord, rel=1e-12)
        assert K_loop[i, (i + 1) % m] == pytest.approx(-1.0 / chord, rel=1e-12)
        assert K_loop[i, (i - 1) % m] == pytest.approx(-1.0 / chord, rel=1e-12)
    interior = mesh.interior_nodes()
    assert sp.csr_matrix(K)[interior].nnz == 0


@pytest.mark.parametrize("rings", [2, 5, 9])
def test_boundary_mass_total_is_polygon_perimeter(rings):
    mesh = build_disk_mesh(rings)
    M, K = assemble_boundary(mesh, trace_map(mesh))
    ones = np.ones(mesh.num_nodes)
    assert ones @ (M @ ones) == pytest.approx(12 * rings * math.sin(math.pi / (6 * rings)), rel=1e-13)
    assert np.max(np.abs(K @ ones)) <= 1e-12


def test_laplace_beltrami_spectrum_of_circle(disk16):
    mesh, trace = disk16
    M, K = assemble_boundary(mesh, trace)
    values = sla.eigh(restrict_to_loop(K, trace).toarray(), restrict_to_loop(M, trace).toarray(),
                      eigvals_only=True)
    assert abs(values[0]) <= 1e-10
    np.testing.assert_allclose(values[1:5], [1.0, 1.0, 4.0, 4.0], rtol=0.02)


# =============================================================================
# PENCIL AND GRAMS
# =============================================================================

def test_k_zero_rejected(disk4):
    mesh, trace = disk4
    with pytest.raises(InvalidParameterError, match="k must be nonzero"):
        build_pencil(mesh, trace, 0.0, 1.0)


def test_nonpositive_l_rejected(disk4):
    mesh, trace = disk4
    with pytest.raises(InvalidParameterError) as e:
        build_pencil(mesh, trace, 1.0, 0.0)
    assert e.value.flag == "l"


def test_dissipative_mass_is_positive_definite(disk8):
    mesh, trace = disk8
    pencil = build_pencil(mesh, trace, -1.0, 1.0)
    np.linalg.cholesky(pencil.A_mass.toarray())


def test_reactive_mass_is_indefinite(disk8):
    mesh, trace = disk8
    pencil = build_pencil(mesh, trace, 1.0, 1.0)
    assert np.linalg.eigvalsh(pencil.A_mass.toarray()).min() < 0


@pytest.mark.parametrize("k,l", [(2.0, 0.5), (-1.0, 1.0), (0.3, 3.0)])
def test_pencil_symmetric_with_constant_kernel(disk8, k, l):
    mesh, trace = disk8
    pencil = build_pencil(mesh, trace, k, l)
    assert _asymmetry(pencil.A_mass) <= 1e-13
    assert _asymmetry(pencil.B_stiff) <= 1e-13
    assert np.max(np.abs(pencil.B_stiff @ np.ones(mesh.num_nodes))) <= 1e-12
    assert pencil.dimension == mesh.num_nodes


def test_l_scales_only_boundary_stiffness(disk4):
    mesh, trace = disk4
    ops = assemble_operators(mesh, trace)
    base = build_pencil(mesh, trace, 2.0, 0.5, operators=ops)
    scaled = build_pencil(mesh, trace, 2.0, 1.5, operators=ops)
    lhs = (scaled.B_stiff - ops.K_bulk).toarray()
    rhs = 3.0 * (base.B_stiff - ops.K_bulk).toarray()
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_gram_of_constant_is_perimeter(disk8):
    mesh, trace = disk8
    ops = assemble_operators(mesh, trace)
    grams = gram_set(mesh, trace, ops)
    ones = np.ones(mesh.num_nodes)
    assert ones @ (grams.G_H @ ones) == pytest.approx(96 * math.sin(math.pi / 48), rel=1e-12)
    assert abs(ones @ ((ops.K_bulk + ops.K_bnd) @ ones)) <= 1e-12
    assert grams.G_H1Gamma.shape == (mesh.num_boundary, mesh.num_boundary)


def test_norm_equivalence_bounds(disk8):
    mesh, trace = disk8
    low, high = norm_equivalence_bounds(gram_set(mesh, trace), trace)
    assert low >= 1.0 - 1e-9
    assert math.isfinite(high)
    assert high >= low


# =============================================================================
# DIRICHLET-TO-NEUMANN
# =============================================================================

def test_dtn_symmetric_with_constant_kernel(disk8):
    mesh, trace = disk8
    dtn = dtn_matrix(mesh, trace)
    assert np.max(np.abs(dtn - dtn.T)) <= 1e-12
    assert np.max(np.abs(dtn @ np.ones(mesh.num_boundary))) <= 1e-10
    assert np.linalg.eigvalsh(dtn).min() >= -1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dtn_eigenvalue_of_fourier_mode(disk16, n):
    mesh, trace = disk16
    ops = assemble_operators(mesh, trace)
    dtn = dtn_matrix(mesh, trace, ops)
    M_loop = restrict_to_loop(ops.M_bnd, trace).toarray()
    v = np.cos(n * _loop_angles(mesh, trace))
    assert (v @ dtn @ v) / (v @ M_loop @ v) == pytest.approx(n, rel=0.05)
    # pointwise, M_loop^-1 DtN v = n v
    w = np.linalg.solve(M_loop, dtn @ v)
    assert np.max(np.abs(w - n * v)) <= 0.05 * n * np.max(np.abs(v))


def test_harmonic_extension_of_constant(disk4):
    mesh, trace = disk4
    u = harmonic_extension(mesh, trace, np.full(mesh.num_boundary, 2.5))
    np.testing.assert_allclose(u, 2.5, atol=1e-12)


def test_green_identity(disk8):
    mesh, trace = disk8
    rng = np.random.default_rng(7)
    f = rng.standard_normal(mesh.num_boundary)
    g = rng.standard_normal(mesh.num_boundary)
    assert green_identity_gap(mesh, trace, f, g) <= 1e-9


def test_auxiliary_matrix_is_coercive(disk8):
    mesh, trace = disk8
    ops = assemble_operators(mesh, trace)
    matrix = auxiliary_boundary_matrix(mesh, trace, 1.0, -1.0, 1.0, ops)
    assert np.linalg.eigvalsh(matrix).min() > 0

    ones = np.ones(mesh.num_boundary)
    assert ones @ matrix @ ones == pytest.approx(trace.perimeter(), rel=1e-10)

    M_loop = restrict_to_loop(ops.M_bnd, trace).toarray()
    phi = np.random.default_rng(3).standard_normal(mesh.num_boundary)
    rhs = M_loop @ phi
    v = np.linalg.solve(matrix, rhs)
    assert np.linalg.norm(matrix @ v - rhs) / np.linalg.norm(rhs) < 1e-10


@pytest.mark.parametrize("args", [(0.0, -1.0, 1.0), (1.0, 1.0, 1.0), (1.0, -1.0, 0.0)])
def test_auxiliary_matrix_sign_checks(disk4, args):
    mesh, trace = disk4
    with pytest.raises(InvalidParameterError):
        auxiliary_boundary_matrix(mesh, trace, *args)


# =============================================================================
# EXPORT
# =============================================================================

def test_coo_export_format():
    buffer = io.StringIO()
    write_coo_text(sp.csr_matrix(np.array([[2.0, 0.0], [0.1, 1.0]])), buffer)
    assert buffer.getvalue() == "0 0 2\n1 0 0.10000000000000001\n1 1 1\n"
