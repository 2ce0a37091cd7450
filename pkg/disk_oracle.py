"""
disk_oracle.py
Semi-analytic reference solutions on the unit disk, independent of the finite elements.
Bessel functions I_n, J_n (series + Miller backward recurrence), per-mode dispersion
roots, a radial finite-difference resolvent solver and exact modal evolution.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as sla

from config import RADIAL_POINTS, InvalidParameterError, log, require_nonzero_k, require_positive

MU_CAP = 30.0
SERIES_LIMIT = 2.0
BRACKET_STEP = 0.01


class OracleSingularError(Exception):
    """The reduced radial system is singular (lambda near the spectrum)"""
    def __init__(self, lam: float, n: int):
        self.lam = lam
        self.n = n
        super().__init__(f"radial system for mode n={n} is singular at lambda={lam}")


# =============================================================================
# BESSEL FUNCTIONS
# =============================================================================

def _series(n: int, x: np.ndarray, modified: bool) -> np.ndarray:
    half = 0.5 * x
    term = half ** n / math.factorial(n)
    total = term.copy()
    q = half * half
    sign = 1.0 if modified else -1.0
    for j in range(1, 60):
        term = term * sign * q / (j * (j + n))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def _miller(n_max: int, x: np.ndarray, modified: bool) -> np.ndarray:
    """
    Orders 0..n_max by backward recurrence from a start index well above max(n, x),
    normalized by 1 = J_0 + 2 sum J_2k or exp(x) = I_0 + 2 sum I_k.
    """
    top = int(max(n_max, float(np.max(x)))) + 40 + int(math.sqrt(40.0 * max(n_max, float(np.max(x)), 1.0)))
    top += top % 2
    out = np.zeros((n_max + 1,) + x.shape)
    ahead = np.zeros_like(x)
    here = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    sign = 1.0 if modified else -1.0
    for j in range(top, 0, -1):
        below = 2.0 * j / x * here + sign * ahead
        ahead, here = here, below
        order = j - 1
        if order <= n_max:
            out[order] = here
        if modified:
            norm += 2.0 * here if order > 0 else here
        elif order % 2 == 0:
            norm += 2.0 * here if order > 0 else here
        big = np.abs(here) > 1e250
        if np.any(big):
            factor = np.where(big, 1e-250, 1.0)
            ahead, here, norm = ahead * factor, here * factor, norm * factor
            out *= factor
    target = np.exp(x) if modified else 1.0
    return out * (target / norm)


def _bessel(n: int, x, modified: bool) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n < 0:
        raise InvalidParameterError("n", f"order must be nonnegative, got {n}")
    if np.any(x < 0) or np.any(x > MU_CAP + 1e-9):
        raise InvalidParameterError("x", f"argument must lie in [0, {MU_CAP}]")
    result = np.empty_like(x)
    small = x <= SERIES_LIMIT
    if np.any(small):
        result[small] = _series(n, x[small], modified)
    if np.any(~small):
        result[~small] = _miller(n, x[~small], modified)[n]
    return result


def bessel_i(n: int, x) -> np.ndarray:
    """Modified Bessel function of the first kind I_n(x), 0 <= x <= 30"""
    return _bessel(n, x, modified=True)


def bessel_j(n: int, x) -> np.ndarray:
    """Bessel function of the first kind J_n(x), 0 <= x <= 30"""
    return _bessel(n, x, modified=False)


def bessel_i_prime(n: int, x) -> np.ndarray:
    if n == 0:
        return bessel_i(1, x)
    return 0.5 * (bessel_i(n - 1, x) + bessel_i(n + 1, x))


def bessel_j_prime(n: int, x) -> np.ndarray:
    if n == 0:
        return -bessel_j(1, x)
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))


# =============================================================================
# DISPERSION RELATION
# =============================================================================

@dataclass(frozen=True)
class DispersionRoot:
    """Growth rate of the mode exp(sigma t) R(r) cos(n theta); branch is growing, decaying or neutral"""
    n: int
    sigma: float
    branch: str
    bracket: Tuple[float, float]
    residual: float
    k: float
    l: float

    @property
    def mu(self) -> float:
        return math.sqrt(abs(self.sigma))


def growing_dispersion(mu, n: int, k: float, l: float) -> np.ndarray:
    """k mu I_n'/I_n - l n^2 - mu^2 (zero at sigma = mu^2 > 0)"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return k * mu * bessel_i_prime(n, mu) / bessel_i(n, mu) - l * n * n - mu * mu


def decaying_dispersion(mu, n: int, k: float, l: float) -> np.ndarray:
    """k mu J_n' + (mu^2 - l n^2) J_n (zero at sigma = -mu^2), pole-free form"""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return k * mu * bessel_j_prime(n, mu) + (mu * mu - l * n * n) * bessel_j(n, mu)


def _decaying_residual(mu: float, n: int, k: float, l: float) -> float:
    """|k mu J_n'/J_n - l n^2 + mu^2|, the rate equation in normalized form"""
    jn = float(bessel_j(n, mu)[0])
    return abs(float(decaying_dispersion(mu, n, k, l)[0]) / jn)


def _bisect(fn, lo: float, hi: float, f_lo: float) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * np.spacing(mid):
            break
        f_mid = float(fn(mid)[0])
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _bracketed_roots(fn, mu_max: float) -> List[Tuple[float, float, float]]:
    grid = np.arange(BRACKET_STEP, mu_max + 0.5 * BRACKET_STEP, BRACKET_STEP)
    values = fn(grid)
    roots = []
    for i in np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0):
        lo, hi = float(grid[i]), float(grid[i + 1])
        roots.append((lo, hi, _bisect(fn, lo, hi, float(values[i]))))
    return roots


def dispersion_roots(k: float, l: float, n_max: int, mu_max: float = MU_CAP) -> List[DispersionRoot]:
    """
    Real rates sigma of separable modes on the unit disk for n = 0..n_max and mu <= mu_max,
    sorted by n then descending sigma. Neutral roots (sigma = 0) are the constants (n = 0)
    and the harmonic mode when k n = l n^2.
    """
    k = require_nonzero_k(k)
    l = require_positive("l", l)
    if n_max < 0:
        raise InvalidParameterError("n_max", f"n_max must be nonnegative, got {n_max}")
    mu_max = min(require_positive("mu_max", mu_max), MU_CAP)

    roots: List[DispersionRoot] = []
    for n in range(n_max + 1):
        neutral = k * n - l * n * n
        if n == 0 or abs(neutral) <= 1e-12 * max(1.0, abs(k * n)):
            roots.append(DispersionRoot(n, 0.0, "neutral", (0.0, 0.0), abs(neutral) if n else 0.0, k, l))

        grow = lambda mu, n=n: growing_dispersion(mu, n, k, l)
        for lo, hi, mu in _bracketed_roots(grow, mu_max):
            residual = abs(float(grow(mu)[0]))
            roots.append(DispersionRoot(n, mu * mu, "growing", (lo * lo, hi * hi), residual, k, l))

        decay = lambda mu, n=n: decaying_dispersion(mu, n, k, l)
        for lo, hi, mu in _bracketed_roots(decay, mu_max):
            roots.append(DispersionRoot(n, -mu * mu, "decaying", (-hi * hi, -lo * lo),
                                        _decaying_residual(mu, n, k, l), k, l))

    roots.sort(key=lambda root: (root.n, -root.sigma))
    log("ORACLE", f"k={k} l={l}: {sum(r.branch == 'growing' for r in roots)} growing roots "
                  f"for n <= {n_max}")
    return roots


def growing_root(k: float, l: float, n: int) -> Optional[DispersionRoot]:
    """Largest growing root of mode n, if any"""
    found = [r for r in dispersion_roots(k, l, n) if r.n == n and r.branch == "growing"]
    return max(found, key=lambda r: r.sigma) if found else None


def dispersion_frame(roots: List[DispersionRoot]) -> pd.DataFrame:
    return pd.DataFrame({
        "n": [r.n for r in roots],
        "sigma": [r.sigma for r in roots],
        "branch": [r.branch for r in roots],
        "residual": [r.residual for r in roots],
    })


# =============================================================================
# RADIAL FINITE DIFFERENCES
# =============================================================================

@dataclass(frozen=True, eq=False)
class RadialSolution:
    grid: np.ndarray
    values: np.ndarray
    n: int
    lam: float
    residual: float

    def __call__(self, r) -> np.ndarray:
        return np.interp(np.asarray(r, dtype=float), self.grid, self.values)


def radial_resolvent_fd(n: int, lam: float, k: float, l: float, H,
                        points: int = RADIAL_POINTS) -> RadialSolution:
    """
    Second-order finite differences for
        -(R'' + R'/r - n^2 R / r^2) + lambda R = H(r)  on (0, 1),
        -k R'(1) + (l n^2 + lambda) R(1) = H(1),
    with R'(0) = 0 for n = 0 and R(0) = 0 otherwise. H is a callable of r or
    an array of samples on the uniform grid.
    """
    k = require_nonzero_k(k)
    l = require_positive("l", l)
    points = max(int(points), 10001)
    r = np.linspace(0.0, 1.0, points)
    dr = r[1] - r[0]
    rhs = np.asarray(H(r) if callable(H) else H, dtype=float) * np.ones(points)

    lower = np.zeros(points)
    diag = np.zeros(points)
    upper = np.zeros(points)

    ri = r[1:-1]
    lower[1:-1] = -1.0 / dr ** 2 + 1.0 / (2.0 * dr * ri)
    diag[1:-1] = 2.0 / dr ** 2 + n * n / ri ** 2 + lam
    upper[1:-1] = -1.0 / dr ** 2 - 1.0 / (2.0 * dr * ri)

    if n == 0:
        # Delta R(0) = 4 (R_1 - R_0) / dr^2 by symmetry
        diag[0] = 4.0 / dr ** 2 + lam
        upper[0] = -4.0 / dr ** 2
    else:
        diag[0] = 1.0
        upper[0] = 0.0
        rhs[0] = 0.0

    # ghost value R_{N+1} = R_{N-1} + 2 dr ((l n^2 + lam) R_N - H_N) / k from the boundary row
    c_plus = -1.0 / dr ** 2 - 1.0 / (2.0 * dr)
    c_minus = -1.0 / dr ** 2 + 1.0 / (2.0 * dr)
    gain = 2.0 * dr / k
    lower[-1] = c_minus + c_plus
    diag[-1] = 2.0 / dr ** 2 + n * n + lam + c_plus * gain * (l * n * n + lam)
    rhs[-1] = rhs[-1] + c_plus * gain * rhs[-1]

    banded = np.zeros((3, points))
    banded[0, 1:] = upper[:-1]
    banded[1] = diag
    banded[2, :-1] = lower[1:]
    try:
        values = sla.solve_banded((1, 1), banded, rhs, check_finite=True)
    except sla.LinAlgError as e:
        raise OracleSingularError(lam, n) from e
    if not np.all(np.isfinite(values)):
        raise OracleSingularError(lam, n)

    applied = diag * values
    applied[:-1] += upper[:-1] * values[1:]
    applied[1:] += lower[1:] * values[:-1]
    scale = float(np.max(np.abs(lower) + np.abs(diag) + np.abs(upper)) * np.max(np.abs(values)) + np.max(np.abs(rhs)))
    residual = float(np.max(np.abs(applied - rhs)) / max(scale, 1e-300))
    if residual > 1e-8:
        raise OracleSingularError(lam, n)
    return RadialSolution(r, values, n, float(lam), residual)


# =============================================================================
# MODAL EVOLUTION
# =============================================================================

def radial_profile(root: DispersionRoot, r) -> np.ndarray:
    """R(r) normalized so that R(1) = 1"""
    r = np.asarray(r, dtype=float)
    if root.branch == "neutral":
        return r ** root.n
    mu = root.mu
    if root.branch == "growing":
        return bessel_i(root.n, mu * r.ravel()).reshape(r.shape) / bessel_i(root.n, mu)[0]
    return bessel_j(root.n, mu * r.ravel()).reshape(r.shape) / bessel_j(root.n, mu)[0]


def modal_reference(root: DispersionRoot, t: float, points: np.ndarray) -> np.ndarray:
    """exp(sigma t) R(r) cos(n theta) at the given (N, 2) points"""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    r = np.hypot(points[:, 0], points[:, 1])
    theta = np.arctan2(points[:, 1], points[:, 0])
    return math.exp(root.sigma * t) * radial_profile(root, r) * np.cos(root.n * theta)
