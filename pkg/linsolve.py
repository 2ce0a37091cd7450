"""
linsolve.py
Deterministic linear algebra: sparse LU solves for the (possibly indefinite)
pencil systems and a dense QZ generalized eigensolver for spectral analysis.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from config import DENSE_CUTOFF, INFINITE_BETA, PIVOT_RTOL, SOLVE_RTOL, log


class SingularSystemError(Exception):
    """Raised when a factorization is numerically singular"""
    def __init__(self, message: str, pivot_index: Optional[int] = None):
        self.message = message
        self.pivot_index = pivot_index
        super().__init__(message)


class SolverAccuracyError(Exception):
    """Raised when a solve misses the residual tolerance"""
    def __init__(self, message: str, residual: float):
        self.message = message
        self.residual = residual
        super().__init__(message)


class SpectrumSizeError(Exception):
    """Raised when a pencil exceeds the dense eigensolver cutoff"""
    def __init__(self, dimension: int, cutoff: int):
        self.dimension = dimension
        self.cutoff = cutoff
        super().__init__(
            f"pencil dimension {dimension} exceeds dense cutoff {cutoff}; coarsen the mesh")


# =============================================================================
# SPARSE DIRECT SOLVES
# =============================================================================

class Factorization:
    """SuperLU factorization with partial pivoting, reusable across right-hand sides"""

    def __init__(self, matrix: sp.spmatrix, rtol: float = SOLVE_RTOL):
        self.matrix = sp.csc_matrix(matrix)
        self.rtol = rtol
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"matrix must be square, got {self.matrix.shape}")
        try:
            self._lu = splu(self.matrix)
        except RuntimeError as e:
            raise SingularSystemError(f"matrix is exactly singular: {e}") from e

        pivots = np.abs(self._lu.U.diagonal())
        scale = pivots.max() if pivots.size else 0.0
        worst = int(np.argmin(pivots)) if pivots.size else 0
        if scale == 0.0 or pivots[worst] <= PIVOT_RTOL * scale:
            column = int(self._lu.perm_c[worst])
            raise SingularSystemError(
                f"matrix is numerically singular: pivot {worst} (column {column}) "
                f"ratio {pivots[worst] / scale if scale else 0.0:.2e}", column)

    @property
    def dtype(self):
        return self.matrix.dtype

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs)
        x = self._lu.solve(rhs)
        residual = self._relative_residual(x, rhs)
        if residual > self.rtol:
            # one step of iterative refinement
            x = x + self._lu.solve(rhs - self.matrix @ x)
            residual = self._relative_residual(x, rhs)
            if residual > self.rtol:
                raise SolverAccuracyError(f"relative residual {residual:.2e} above {self.rtol:.0e}", residual)
        return x

    def _relative_residual(self, x: np.ndarray, rhs: np.ndarray) -> float:
        denom = np.linalg.norm(rhs)
        if denom == 0.0:
            return float(np.linalg.norm(x))
        return float(np.linalg.norm(rhs - self.matrix @ x) / denom)


def solve_sparse(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve matrix x = rhs; SingularSystemError carries the offending pivot column"""
    rhs = np.asarray(rhs)
    if matrix.shape[0] != rhs.shape[0]:
        raise ValueError(f"rhs length {rhs.shape[0]} does not match matrix {matrix.shape}")
    if np.iscomplexobj(rhs) and not np.iscomplexobj(matrix.data if sp.issparse(matrix) else matrix):
        matrix = sp.csc_matrix(matrix, dtype=complex)
    return Factorization(matrix).solve(rhs)


# =============================================================================
# DENSE GENERALIZED EIGENPROBLEM
# =============================================================================

@dataclass
class SpectrumReport:
    """Finite generalized eigenvalues of B x = lambda A x with backward errors"""
    eigenvalues: np.ndarray
    residuals: np.ndarray
    infinite_count: int
    k: Optional[float] = None
    l: Optional[float] = None
    h: Optional[float] = None
    vectors: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues) + self.infinite_count

    @property
    def sigma_max(self) -> float:
        """Largest growth rate max Re(-lambda); the flow is du/dt = -lambda u per mode"""
        return float(np.max(-self.eigenvalues.real))

    def growth_rates(self, imag_tol: float = 1e-8) -> np.ndarray:
        """Positive rates -lambda of the real negative eigenvalues, descending"""
        real = np.abs(self.eigenvalues.imag) <= imag_tol * np.maximum(1.0, np.abs(self.eigenvalues))
        rates = -self.eigenvalues.real[real]
        return np.sort(rates[rates > 0])[::-1]

    def nearest(self, target: complex) -> int:
        return int(np.argmin(np.abs(self.eigenvalues - target)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "re_lambda": self.eigenvalues.real,
            "im_lambda": self.eigenvalues.imag,
            "residual": self.residuals,
        })


def generalized_eigs(B, A, keep_vectors: bool = False, k: Optional[float] = None,
                     l: Optional[float] = None, h: Optional[float] = None,
                     cutoff: int = DENSE_CUTOFF) -> SpectrumReport:
    """
    All eigenvalues of the pencil via QZ. Pairs with |beta| below the configured
    threshold (after normalizing |alpha|^2 + |beta|^2 = 1) are counted as infinite
    and dropped. Finite pairs are sorted by real part, then imaginary part.
    """
    n = B.shape[0]
    if n > cutoff:
        raise SpectrumSizeError(n, cutoff)
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)

    log("LINSOLVE", f"dense QZ on dimension {n}")
    pairs, vecs = sla.eig(Bd, Ad, right=True, homogeneous_eigvals=True)
    alpha, beta = pairs
    scale = np.sqrt(np.abs(alpha) ** 2 + np.abs(beta) ** 2)
    alpha, beta = alpha / scale, beta / scale
    finite = np.abs(beta) >= INFINITE_BETA

    lam = alpha[finite] / beta[finite]
    X = vecs[:, finite]
    X = X / np.linalg.norm(X, axis=0, keepdims=True)

    normA = np.linalg.norm(Ad, 2)
    normB = np.linalg.norm(Bd, 2)
    R = Bd @ X - (Ad @ X) * lam[None, :]
    residuals = np.linalg.norm(R, axis=0) / (np.abs(lam) * normA + normB)

    order = np.lexsort((lam.imag, lam.real))
    return SpectrumReport(
        eigenvalues=lam[order],
        residuals=residuals[order],
        infinite_count=int(n - finite.sum()),
        k=k, l=l, h=h,
        vectors=X[:, order] if keep_vectors else None,
    )


def pencil_spectrum(pencil, keep_vectors: bool = False) -> SpectrumReport:
    """generalized_eigs on a Pencil, tagging k, l and the mesh size"""
    return generalized_eigs(pencil.B_stiff, pencil.A_mass, keep_vectors=keep_vectors,
                            k=pencil.k, l=pencil.l, h=pencil.operators.mesh.mesh_size())
