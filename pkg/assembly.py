"""
assembly.py
Sparse operators of the coupled bulk-surface weak form.
Bulk and boundary mass/stiffness, the (A_mass, B_stiff) pencil, Gram matrices of
the energy norms, the discrete Dirichlet-to-Neumann map and the auxiliary boundary form.
"""

from dataclasses import dataclass
from typing import Optional, TextIO, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from config import (
    FLOAT_FORMAT, require_negative, require_nonzero_k, require_positive, log
)
from geometry_mesh import Mesh, TraceMap


class AssemblyError(Exception):
    """Raised for geometrically degenerate input"""
    def __init__(self, message: str, triangle: Optional[int] = None):
        self.message = message
        self.triangle = triangle
        super().__init__(message)


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True, eq=False)
class OperatorSet:
    """The four base matrices, assembled once per mesh"""
    mesh: Mesh
    trace: TraceMap
    M_bulk: sp.csr_matrix
    K_bulk: sp.csr_matrix
    M_bnd: sp.csr_matrix
    K_bnd: sp.csr_matrix


@dataclass(frozen=True, eq=False)
class Pencil:
    """
    A_mass = M_bulk - (1/k) M_bnd,  B_stiff = K_bulk - (l/k) K_bnd.
    The semi-discrete evolution reads A_mass du/dt = -B_stiff u.
    """
    A_mass: sp.csr_matrix
    B_stiff: sp.csr_matrix
    k: float
    l: float
    operators: OperatorSet

    @property
    def dimension(self) -> int:
        return self.A_mass.shape[0]

    @property
    def mesh_tag(self) -> str:
        return self.operators.mesh.tag


@dataclass(frozen=True, eq=False)
class StateVector:
    """Nodal coefficients of (u, u|Gamma); the trace is the same entries at loop nodes"""
    values: np.ndarray
    mesh_tag: str

    def __post_init__(self):
        values = np.array(self.values)
        if values.ndim != 1:
            raise ValueError(f"state must be a 1-D nodal vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("state has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_field(cls, field, mesh: Mesh) -> "StateVector":
        return cls(field.at_nodes(mesh.nodes), mesh.tag)

    def conj(self) -> "StateVector":
        return StateVector(np.conj(self.values), self.mesh_tag)


def state_values(u, pencil: "Pencil") -> np.ndarray:
    """Raw nodal array of a StateVector or array, checked against the pencil's mesh"""
    if isinstance(u, StateVector):
        if u.mesh_tag != pencil.mesh_tag:
            raise ValueError(f"state belongs to mesh {u.mesh_tag}, pencil to {pencil.mesh_tag}")
        values = u.values
    else:
        values = np.asarray(u)
    if values.shape != (pencil.dimension,):
        raise ValueError(f"state length {values.shape} does not match pencil dimension {pencil.dimension}")
    return values


@dataclass(frozen=True, eq=False)
class GramSet:
    """G_H (V x V), G_H1Omega (V x V), G_H1Gamma (m x m, loop order)"""
    G_H: sp.csr_matrix
    G_H1Omega: sp.csr_matrix
    G_H1Gamma: sp.csr_matrix


# =============================================================================
# HELPERS
# =============================================================================

def _finalize(matrix: sp.spmatrix) -> sp.csr_matrix:
    matrix = sp.csr_matrix(matrix)
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return matrix


def _with_zero_row_sums(matrix: sp.spmatrix) -> sp.csr_matrix:
    """Rebuild the diagonal from the off-diagonal so constants lie in the kernel by construction"""
    matrix = sp.csr_matrix(matrix)
    off = matrix - sp.diags(matrix.diagonal())
    off = _finalize(off)
    diagonal = -np.asarray(off.sum(axis=1)).ravel()
    return _finalize(off + sp.diags(diagonal))


def restrict_to_loop(matrix: sp.spmatrix, trace: TraceMap) -> sp.csr_matrix:
    """m x m block on the boundary nodes, in loop order"""
    loop = trace.loop
    return _finalize(sp.csr_matrix(matrix)[loop][:, loop])


def embed_from_loop(matrix: sp.spmatrix, trace: TraceMap, size: int) -> sp.csr_matrix:
    """Inverse of restrict_to_loop: zero rows/columns at interior nodes"""
    coo = sp.coo_matrix(matrix)
    loop = trace.loop
    return _finalize(sp.coo_matrix((coo.data, (loop[coo.row], loop[coo.col])), shape=(size, size)))


# =============================================================================
# BULK AND BOUNDARY OPERATORS
# =============================================================================

def element_gradients(mesh: Mesh) -> Tuple[np.ndarray, np.ndarray]:
    """Barycentric gradients (F,3,2) and triangle areas (F,)"""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    twice_area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]

    edges = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
    longest = np.sqrt((edges ** 2).sum(axis=1)).reshape(3, -1).max(axis=0)
    degenerate = np.flatnonzero(np.abs(twice_area) <= 1e-14 * longest ** 2)
    if degenerate.size:
        t = int(degenerate[0])
        raise AssemblyError(f"triangle {t} {mesh.triangles[t].tolist()} has zero area", t)

    grads = np.empty((len(p), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / twice_area
        grads[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / twice_area
    return grads, 0.5 * twice_area


def assemble_bulk(mesh: Mesh) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Consistent P1 mass and stiffness on the triangles"""
    grads, areas = element_gradients(mesh)
    local_K = areas[:, None, None] * np.einsum("fid,fjd->fij", grads, grads)
    local_M = areas[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0

    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    V = mesh.num_nodes
    M = _finalize(sp.coo_matrix((local_M.ravel(), (rows, cols)), shape=(V, V)))
    K = _with_zero_row_sums(sp.coo_matrix((local_K.ravel(), (rows, cols)), shape=(V, V)))
    return M, K


def assemble_boundary(mesh: Mesh, trace: TraceMap) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Periodic 1-D P1 mass and Laplace-Beltrami stiffness on the loop, embedded V x V"""
    a = trace.loop
    b = np.roll(trace.loop, -1)
    w = trace.arc_weights

    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    mass = np.concatenate([w / 3.0, w / 3.0, w / 6.0, w / 6.0])
    stiff = np.concatenate([1.0 / w, 1.0 / w, -1.0 / w, -1.0 / w])

    V = mesh.num_nodes
    M = _finalize(sp.coo_matrix((mass, (rows, cols)), shape=(V, V)))
    K = _with_zero_row_sums(sp.coo_matrix((stiff, (rows, cols)), shape=(V, V)))
    return M, K


def assemble_operators(mesh: Mesh, trace: TraceMap) -> OperatorSet:
    M_bulk, K_bulk = assemble_bulk(mesh)
    M_bnd, K_bnd = assemble_boundary(mesh, trace)
    log("ASSEMBLY", f"operators on {mesh.tag}: nnz(K_bulk)={K_bulk.nnz}, nnz(K_bnd)={K_bnd.nnz}")
    return OperatorSet(mesh, trace, M_bulk, K_bulk, M_bnd, K_bnd)


# =============================================================================
# PENCIL AND GRAM MATRICES
# =============================================================================

def build_pencil(mesh: Mesh, trace: TraceMap, k: float, l: float,
                 operators: Optional[OperatorSet] = None) -> Pencil:
    """Pencil of the coupled weak form for boundary parameters k != 0, l > 0"""
    k = require_nonzero_k(k)
    l = require_positive("l", l)
    ops = operators or assemble_operators(mesh, trace)
    A = _finalize(ops.M_bulk - (1.0 / k) * ops.M_bnd)
    B = _finalize(ops.K_bulk - (l / k) * ops.K_bnd)
    return Pencil(A, B, k, l, ops)


def gram_set(mesh: Mesh, trace: TraceMap, operators: Optional[OperatorSet] = None) -> GramSet:
    ops = operators or assemble_operators(mesh, trace)
    G_H = _finalize(ops.K_bulk + ops.K_bnd + ops.M_bnd)
    G_H1Omega = _finalize(ops.K_bulk + ops.M_bulk)
    G_H1Gamma = restrict_to_loop(ops.K_bnd + ops.M_bnd, trace)
    return GramSet(G_H, G_H1Omega, G_H1Gamma)


def norm_equivalence_bounds(grams: GramSet, trace: TraceMap) -> Tuple[float, float]:
    """
    Extreme generalized eigenvalues of (G_H1Omega + G_H1Gamma, G_H).
    The lower bound is >= 1 since the difference of the two forms is the bulk mass.
    """
    size = grams.G_H.shape[0]
    product = (grams.G_H1Omega + embed_from_loop(grams.G_H1Gamma, trace, size)).toarray()
    values = sla.eigh(product, grams.G_H.toarray(), eigvals_only=True)
    return float(values.min()), float(values.max())


# =============================================================================
# DIRICHLET-TO-NEUMANN
# =============================================================================

def _split_blocks(operators: OperatorSet):
    mesh, trace = operators.mesh, operators.trace
    interior = mesh.interior_nodes()
    if interior.size == 0:
        raise AssemblyError("mesh has no interior nodes; Dirichlet-to-Neumann map undefined")
    K = operators.K_bulk.tocsr()
    loop = trace.loop
    K_II = K[interior][:, interior].tocsc()
    K_IG = K[interior][:, loop]
    K_GG = K[loop][:, loop]
    return interior, K_II, K_IG, K_GG


def _interior_solver(K_II):
    try:
        return splu(K_II)
    except RuntimeError as e:
        raise AssemblyError(f"interior stiffness block is singular: {e}") from e


def dtn_matrix(mesh: Mesh, trace: TraceMap, operators: Optional[OperatorSet] = None) -> np.ndarray:
    """Schur complement K_GG - K_GI K_II^-1 K_IG (dense, loop order)"""
    ops = operators or assemble_operators(mesh, trace)
    interior, K_II, K_IG, K_GG = _split_blocks(ops)
    lu = _interior_solver(K_II)
    lifted = lu.solve(K_IG.toarray())
    schur = K_GG.toarray() - K_IG.T @ lifted
    return 0.5 * (schur + schur.T)


def harmonic_extension(mesh: Mesh, trace: TraceMap, boundary_values: np.ndarray,
                       operators: Optional[OperatorSet] = None) -> np.ndarray:
    """Discrete harmonic lifting of loop-ordered boundary data to all nodes"""
    ops = operators or assemble_operators(mesh, trace)
    interior, K_II, K_IG, _ = _split_blocks(ops)
    g = np.asarray(boundary_values, dtype=float)
    u = np.zeros(mesh.num_nodes)
    u[trace.loop] = g
    u[interior] = -_interior_solver(K_II).solve(K_IG @ g)
    return u


def green_identity_gap(mesh: Mesh, trace: TraceMap, f: np.ndarray, g: np.ndarray,
                       operators: Optional[OperatorSet] = None) -> float:
    """|f^T DtN g - (grad Ef, grad Eg)_Omega| for loop-ordered f, g"""
    ops = operators or assemble_operators(mesh, trace)
    dtn = dtn_matrix(mesh, trace, ops)
    Ef = harmonic_extension(mesh, trace, f, ops)
    Eg = harmonic_extension(mesh, trace, g, ops)
    return float(abs(f @ dtn @ g - Ef @ (ops.K_bulk @ Eg)))


def auxiliary_boundary_matrix(mesh: Mesh, trace: TraceMap, l_tilde: float, k_tilde: float,
                              big_lambda: float, operators: Optional[OperatorSet] = None) -> np.ndarray:
    """-k~ DtN + l~ K_bnd + Lambda M_bnd on the loop; coercive for Lambda > 0"""
    l_tilde = require_positive("l_tilde", l_tilde)
    k_tilde = require_negative("k_tilde", k_tilde)
    big_lambda = require_positive("Lambda", big_lambda)
    ops = operators or assemble_operators(mesh, trace)
    dtn = dtn_matrix(mesh, trace, ops)
    K_loop = restrict_to_loop(ops.K_bnd, trace).toarray()
    M_loop = restrict_to_loop(ops.M_bnd, trace).toarray()
    return -k_tilde * dtn + l_tilde * K_loop + big_lambda * M_loop


# =============================================================================
# EXPORT
# =============================================================================

def write_coo_text(matrix, stream: TextIO):
    """'row col value' per stored entry, 17 significant digits"""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        stream.write(f"{r} {c} {FLOAT_FORMAT % v}\n")
