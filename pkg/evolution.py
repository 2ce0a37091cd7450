"""
evolution.py
Time stepping of A_mass du/dt = -B_stiff u with an implicit theta-scheme.
Tracks the energy norms along the trajectory and runs the l -> 0+ sweep.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from assembly import (
    GramSet, OperatorSet, Pencil, StateVector, assemble_operators, build_pencil, gram_set, state_values
)
from config import WORKERS, InvalidParameterError, log, require_nonzero_k, require_positive, require_theta
from fields import AnalyticField
from geometry_mesh import Mesh, trace_map
from linsolve import Factorization, SingularSystemError, SolverAccuracyError
from resolvent import constants_report

__all__ = [
    "StateVector", "StepSizeError", "TimeSeries", "ThetaStepper", "theta_step", "evolve",
    "initial_state", "l_limit_experiment", "step_operator_norm", "step_amplification",
]


class StepSizeError(SingularSystemError):
    """The step matrix A_mass + theta tau B_stiff is singular for this tau"""
    def __init__(self, tau: float, lambda0: float, pivot_index: Optional[int] = None):
        self.tau = tau
        self.lambda0 = lambda0
        super().__init__(
            f"step matrix is singular at tau={tau}; use tau < 1/lambda0 = {1.0 / lambda0:.6g}", pivot_index)


# =============================================================================
# TYPES
# =============================================================================

@dataclass
class TimeSeries:
    """Tracked quantities per step; snapshots keyed by step index"""
    times: List[float] = field(default_factory=list)
    norm_H: List[float] = field(default_factory=list)
    norm_H1Omega: List[float] = field(default_factory=list)
    conserved: List[float] = field(default_factory=list)
    snapshots: Dict[int, StateVector] = field(default_factory=dict)
    # (|grad u|^2, |d_Gamma u|^2, |u|^2_Gamma) per step
    energy_terms: List[tuple] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def record(self, t: float, u: np.ndarray, pencil: Pencil, grams: GramSet):
        if self.times and t <= self.times[-1]:
            raise ValueError(f"time {t} does not follow {self.times[-1]}")
        ops = pencil.operators
        self.times.append(float(t))
        self.norm_H.append(_norm(grams.G_H, u))
        self.norm_H1Omega.append(_norm(grams.G_H1Omega, u))
        self.conserved.append(float(np.sum(pencil.A_mass @ u)))
        self.energy_terms.append((_quad(ops.K_bulk, u), _quad(ops.K_bnd, u), _quad(ops.M_bnd, u)))

    def growth_ratio(self) -> np.ndarray:
        return np.asarray(self.norm_H) / self.norm_H[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "norm_H": self.norm_H,
            "norm_H1_omega": self.norm_H1Omega,
            "conserved": self.conserved,
        })


def _quad(matrix, u: np.ndarray) -> float:
    return float(max(u @ (matrix @ u), 0.0))


def _norm(matrix, u: np.ndarray) -> float:
    return math.sqrt(_quad(matrix, u))


# =============================================================================
# THETA-SCHEME
# =============================================================================

class ThetaStepper:
    """
    (A + theta tau B) u+ = (A - (1 - theta) tau B) u, factorized once.
    theta = 1 is implicit Euler, theta = 1/2 Crank-Nicolson.
    """

    def __init__(self, pencil: Pencil, tau: float, theta: float = 1.0):
        self.pencil = pencil
        self.tau = require_positive("tau", tau)
        self.theta = require_theta(theta)
        self.left = (pencil.A_mass + (self.theta * self.tau) * pencil.B_stiff).tocsc()
        self.right = (pencil.A_mass - ((1.0 - self.theta) * self.tau) * pencil.B_stiff).tocsr()
        try:
            self._lu = Factorization(self.left)
        except SingularSystemError as e:
            raise self._step_error(e.pivot_index) from e

    def _step_error(self, pivot_index: Optional[int] = None) -> StepSizeError:
        lambda0 = constants_report(self.pencil.k, self.pencil.l).lambda0
        log("EVOLVE", f"singular step matrix at tau={self.tau}")
        return StepSizeError(self.tau, lambda0, pivot_index)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply (A + theta tau B)^-1"""
        try:
            return self._lu.solve(rhs)
        except SolverAccuracyError as e:
            raise self._step_error() from e

    def advance(self, u: np.ndarray) -> np.ndarray:
        return self.solve(self.right @ u)

    def __call__(self, u: StateVector) -> StateVector:
        return StateVector(self.advance(state_values(u, self.pencil)), self.pencil.mesh_tag)


def theta_step(pencil: Pencil, u: StateVector, tau: float, theta: float = 1.0) -> StateVector:
    """One step of the theta-scheme; use ThetaStepper to reuse the factorization"""
    return ThetaStepper(pencil, tau, theta)(u)


def evolve(pencil: Pencil, u0: StateVector, tau: float, T: float, theta: float = 1.0,
           grams: Optional[GramSet] = None, snapshot_every: Optional[int] = None) -> TimeSeries:
    """Run ceil(T / tau) steps from u0 recording norms after every step"""
    tau = require_positive("tau", tau)
    T = require_positive("T", T)
    if T < tau:
        raise InvalidParameterError("T", f"T={T} must be at least tau={tau}")
    if snapshot_every is not None and snapshot_every < 1:
        raise InvalidParameterError("snapshot_every", f"must be >= 1, got {snapshot_every}")

    ops = pencil.operators
    grams = grams or gram_set(ops.mesh, ops.trace, ops)
    stepper = ThetaStepper(pencil, tau, theta)
    steps = math.ceil(T / tau - 1e-9)

    u = np.array(state_values(u0, pencil), dtype=float)
    series = TimeSeries()
    series.record(0.0, u, pencil, grams)
    if snapshot_every:
        series.snapshots[0] = StateVector(u, pencil.mesh_tag)

    for n in range(1, steps + 1):
        u = stepper.advance(u)
        series.record(n * tau, u, pencil, grams)
        if snapshot_every and n % snapshot_every == 0:
            series.snapshots[n] = StateVector(u, pencil.mesh_tag)

    log("EVOLVE", f"k={pencil.k} l={pencil.l} theta={stepper.theta}: {steps} steps of {tau}, "
                  f"norm_H {series.norm_H[0]:.4g} -> {series.norm_H[-1]:.4g}")
    return series


def step_amplification(lam: complex, tau: float, theta: float = 1.0) -> float:
    """|(1 - (1-theta) tau lambda) / (1 + theta tau lambda)|, the per-mode growth of one step"""
    return float(abs((1.0 - (1.0 - theta) * tau * lam) / (1.0 + theta * tau * lam)))


def step_operator_norm(pencil: Pencil, tau: float, theta: float = 1.0, gram=None,
                       iterations: int = 200, seed: int = 0) -> float:
    """
    Power-iteration estimate of the one-step operator norm in the metric of `gram`
    (G_H by default). The estimate approaches the true norm from below.
    """
    stepper = ThetaStepper(pencil, tau, theta)
    if gram is None:
        ops = pencil.operators
        gram = gram_set(ops.mesh, ops.trace, ops).G_H
    metric = Factorization(gram)

    x = np.random.default_rng(seed).standard_normal(pencil.dimension)
    estimate = 0.0
    for _ in range(iterations):
        x = x / _norm(gram, x)
        y = stepper.advance(x)
        ratio = _norm(gram, y)
        # S^T G S x with S^T = right (A + theta tau B)^-1 since both are symmetric
        x = metric.solve(stepper.right @ stepper.solve(gram @ y))
        if abs(ratio - estimate) <= 1e-13 * ratio:
            estimate = ratio
            break
        estimate = ratio
    return estimate


# =============================================================================
# l -> 0+ EXPERIMENT
# =============================================================================

def initial_state(u0: Union[AnalyticField, StateVector, np.ndarray], mesh: Mesh) -> StateVector:
    if isinstance(u0, StateVector):
        return u0
    if isinstance(u0, AnalyticField):
        return StateVector.from_field(u0, mesh)
    return StateVector(np.asarray(u0, dtype=float), mesh.tag)


def _check_l_list(l_list: Sequence[float]) -> List[float]:
    values = [require_positive("l_list", l) for l in l_list]
    if not values:
        raise InvalidParameterError("l_list", "at least one l is required")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise InvalidParameterError("l_list", f"l values must be strictly decreasing, got {values}")
    return values


def l_limit_experiment(k: float, l_list: Sequence[float], u0, tau: float, T: float, mesh: Mesh,
                       theta: float = 1.0, workers: int = WORKERS,
                       operators: Optional[OperatorSet] = None) -> pd.DataFrame:
    """
    Peak H1(Omega) norm over [0, T] for each l, same data, mesh and step.
    predicted_sigma_max is the large-mode growth asymptote k^2 / (4 l) for k > 0
    and 0 in the dissipative case. Rows follow the order of l_list.
    """
    k = require_nonzero_k(k)
    l_values = _check_l_list(l_list)
    require_theta(theta)
    trace = operators.trace if operators else trace_map(mesh)
    ops = operators or assemble_operators(mesh, trace)
    grams = gram_set(mesh, trace, ops)
    start = initial_state(u0, mesh)

    def run(l: float) -> dict:
        pencil = build_pencil(mesh, trace, k, l, operators=ops)
        series = evolve(pencil, start, tau, T, theta, grams)
        return {
            "l": l,
            "peak_norm_H1": float(np.max(series.norm_H1Omega)),
            "predicted_sigma_max": k * k / (4.0 * l) if k > 0 else 0.0,
        }

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        rows = list(pool.map(run, l_values))

    log("EVOLVE", f"l-limit sweep k={k}: " + ", ".join(f"l={r['l']:g} peak={r['peak_norm_H1']:.4g}" for r in rows))
    return pd.DataFrame(rows, columns=["l", "peak_norm_H1", "predicted_sigma_max"])
