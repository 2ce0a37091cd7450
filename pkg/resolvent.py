"""
resolvent.py
Elliptic resolvent problem with eigenvalue-dependent boundary condition:
discrete weak solve, explicit coercivity constants, compatibility residuals.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

from assembly import Pencil, StateVector, assemble_boundary, restrict_to_loop, state_values
from config import C8_DEFAULT, InvalidParameterError, log, require_nonzero_k, require_positive
from fields import AnalyticField
from geometry_mesh import Mesh, TraceMap, trace_map
from linsolve import Factorization, SingularSystemError, SolverAccuracyError


class NearSpectrumError(SingularSystemError):
    """The resolvent system is singular: lambda is (numerically) in the spectrum"""
    def __init__(self, lam: complex, pivot_index: Optional[int] = None):
        self.lam = lam
        super().__init__(f"lambda={lam} is near the discrete spectrum (singular resolvent system)", pivot_index)


# =============================================================================
# CONSTANTS
# =============================================================================

@dataclass(frozen=True)
class ConstantsReport:
    """
    Explicit constants of the coercivity estimate. lambda0 is an upper-bound
    template: C8 is a configured domain constant, not computed from Omega.
    """
    k: float
    l: float
    C8: float
    C6: float
    delta0: float
    lambda0: float
    C5: float
    epsilon: float

    def to_text(self) -> str:
        rows = [("k", self.k), ("l", self.l), ("C8", self.C8), ("C6", self.C6),
                ("delta0", self.delta0), ("lambda0", self.lambda0), ("C5", self.C5),
                ("epsilon", self.epsilon)]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name.ljust(width)} = {value:.17g}" for name, value in rows]
        lines.append(f"{'note'.ljust(width)} = lambda0 is an upper-bound template (C8 configured, not computed)")
        return "\n".join(lines)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "k": self.k, "l": self.l, "C8": self.C8, "C6": self.C6, "delta0": self.delta0,
            "lambda0": self.lambda0, "C5": self.C5, "epsilon": self.epsilon,
        }])


def constants_report(k: float, l: float, C8: float = C8_DEFAULT) -> ConstantsReport:
    k = require_nonzero_k(k)
    l = require_positive("l", l)
    C8 = require_positive("c8", C8)

    C6 = (abs(k) + l) ** 2 / (2.0 * l) + 1.5 * abs(k)
    delta0 = min(2.0, l) / (4.0 * C6 * C8)
    lambda0 = max(C6 * C8 / delta0, abs(k) + 2.0 * C6 * C8 * (delta0 + 1.0 / delta0))
    C5 = min(0.5, l / 4.0, lambda0 / 2.0)
    epsilon = l / (abs(k) + l)
    return ConstantsReport(k, l, C8, C6, delta0, lambda0, C5, epsilon)


# =============================================================================
# RESOLVENT SOLVE
# =============================================================================

@dataclass(frozen=True, eq=False)
class EllipticSolution:
    u: StateVector
    lam: complex
    residual_bulk: float
    residual_boundary: float


def resolvent_matrix(pencil: Pencil, lam: complex) -> sp.csr_matrix:
    """lambda A_mass + B_stiff, real when lambda is real"""
    if np.imag(lam) == 0:
        return (float(np.real(lam)) * pencil.A_mass + pencil.B_stiff).tocsr()
    return (complex(lam) * pencil.A_mass.astype(complex) + pencil.B_stiff.astype(complex)).tocsr()


def solve_resolvent(pencil: Pencil, lam: complex, h, factorization: Optional[Factorization] = None) -> EllipticSolution:
    """
    Solve (lambda A_mass + B_stiff) u = A_mass h, the discrete weak form of
    -Delta u + lambda u = h in Omega, -k u_nu - l Delta_Gamma u + lambda u = h on Gamma.
    """
    h_values = state_values(h, pencil)
    rhs = pencil.A_mass @ h_values
    if np.iscomplexobj(rhs) or np.imag(lam) != 0:
        rhs = rhs.astype(complex)

    system = resolvent_matrix(pencil, lam)
    if np.iscomplexobj(rhs) and not np.iscomplexobj(system.data):
        system = system.astype(complex)
    try:
        lu = factorization or Factorization(system)
        u = lu.solve(rhs)
    except SingularSystemError as e:
        raise NearSpectrumError(lam, e.pivot_index) from e
    except SolverAccuracyError as e:
        raise NearSpectrumError(lam) from e

    residual = system @ u - rhs
    loop = pencil.operators.trace.loop
    interior = pencil.operators.mesh.interior_nodes()
    solution = EllipticSolution(
        u=StateVector(u, pencil.mesh_tag),
        lam=lam,
        residual_bulk=float(np.linalg.norm(residual[interior])),
        residual_boundary=float(np.linalg.norm(residual[loop])),
    )
    log("RESOLVENT", f"lambda={lam}: residuals bulk={solution.residual_bulk:.2e} "
                     f"boundary={solution.residual_boundary:.2e}")
    return solution


# =============================================================================
# COMPATIBILITY CONDITIONS
# =============================================================================

def compatibility_residual(u0: AnalyticField, k: float, l: float, mesh: Mesh,
                           order: int = 1, trace: Optional[TraceMap] = None) -> float:
    """
    Discrete L2(Gamma) norm of (Delta^i u0)|Gamma - k (Delta^(i-1) u0)_nu
    - l Delta_Gamma (Delta^(i-1) u0)|Gamma, maximized over i = 1..order.
    Normals and curvature come from the loop geometry of the trace map.
    """
    k = require_nonzero_k(k)
    l = require_positive("l", l)
    if order < 1:
        raise InvalidParameterError("order", f"order must be >= 1, got {order}")
    trace = trace or trace_map(mesh)

    M_loop = restrict_to_loop(assemble_boundary(mesh, trace)[0], trace)

    pts = mesh.nodes[trace.loop]
    x, y = pts[:, 0], pts[:, 1]
    nx, ny = trace.normals[:, 0], trace.normals[:, 1]

    worst = 0.0
    current = u0
    for i in range(1, order + 1):
        if current is None:
            raise InvalidParameterError(
                "order", f"field {u0.name} carries no iterated Laplacian for order {i}")
        defect = (current.laplacian(x, y)
                  - k * current.normal_derivative(x, y, nx, ny)
                  - l * current.laplace_beltrami(x, y, nx, ny, trace.curvatures))
        defect = np.asarray(defect, dtype=float) * np.ones_like(x)
        worst = max(worst, float(np.sqrt(max(defect @ (M_loop @ defect), 0.0))))
        current = current.laplacian_field
    return worst
