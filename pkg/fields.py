"""
fields.py
Analytic scalar fields on the plane with closed-form gradient and Hessian.
Used as initial data, resolvent right-hand sides and compatibility checks on the unit disk.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from config import GAUSSIAN_CENTER, GAUSSIAN_WIDTH, InvalidParameterError

# f(x, y) with x, y arrays of equal shape
ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
# returns (fx, fy)
GradientFn = Callable[[np.ndarray, np.ndarray], tuple]
# returns (fxx, fxy, fyy)
HessianFn = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class AnalyticField:
    """
    A smooth field u with its derivatives.
    laplacian_field, when present, is Delta u as another AnalyticField; the
    compatibility check walks this chain for orders above one.
    """
    name: str
    value: ScalarFn
    gradient: GradientFn
    hessian: HessianFn
    laplacian_field: Optional["AnalyticField"] = None

    def at_nodes(self, nodes: np.ndarray) -> np.ndarray:
        return np.asarray(self.value(nodes[:, 0], nodes[:, 1]), dtype=float) * np.ones(len(nodes))

    def laplacian(self, x, y):
        fxx, _, fyy = self.hessian(x, y)
        return fxx + fyy

    def normal_derivative(self, x, y, nx, ny):
        fx, fy = self.gradient(x, y)
        return fx * nx + fy * ny

    def laplace_beltrami(self, x, y, nx, ny, curvature):
        """
        Laplace-Beltrami operator along a curve with outward normal n and signed
        curvature kappa: t^T H t - kappa u_nu, t the unit tangent.
        """
        tx, ty = -ny, nx
        fxx, fxy, fyy = self.hessian(x, y)
        tangential = fxx * tx * tx + 2.0 * fxy * tx * ty + fyy * ty * ty
        return tangential - curvature * self.normal_derivative(x, y, nx, ny)


# =============================================================================
# BUILT-IN FIELDS
# =============================================================================

def constant(c: float = 1.0) -> AnalyticField:
    zero = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))
    return AnalyticField(
        name=f"constant({c:g})",
        value=lambda x, y: np.full_like(np.asarray(x, dtype=float), c),
        gradient=lambda x, y: (zero(x, y), zero(x, y)),
        hessian=lambda x, y: (zero(x, y), zero(x, y), zero(x, y)),
        laplacian_field=None if c == 0 else constant(0.0),
    )


def radial_quadratic() -> AnalyticField:
    """u = r^2"""
    x0 = lambda x: np.asarray(x, dtype=float)
    return AnalyticField(
        name="r2",
        value=lambda x, y: x0(x) ** 2 + x0(y) ** 2,
        gradient=lambda x, y: (2.0 * x0(x), 2.0 * x0(y)),
        hessian=lambda x, y: (np.full_like(x0(x), 2.0), np.zeros_like(x0(x)), np.full_like(x0(x), 2.0)),
        laplacian_field=constant(4.0),
    )


def harmonic_mode(n: int) -> AnalyticField:
    """u = r^n cos(n theta) = Re (x + iy)^n"""
    if n < 0:
        raise InvalidParameterError("n", f"mode must be nonnegative, got {n}")
    if n == 0:
        return constant(1.0)

    def z_power(x, y, p):
        z = np.asarray(x, dtype=float) + 1j * np.asarray(y, dtype=float)
        return z ** p if p >= 0 else np.zeros_like(z)

    def value(x, y):
        return z_power(x, y, n).real

    def gradient(x, y):
        d = n * z_power(x, y, n - 1)
        return d.real, -d.imag

    def hessian(x, y):
        d2 = n * (n - 1) * z_power(x, y, n - 2)
        return d2.real, -d2.imag, -d2.real

    return AnalyticField(f"harmonic({n})", value, gradient, hessian, laplacian_field=constant(0.0))


def gaussian_bump(center=GAUSSIAN_CENTER, width: float = GAUSSIAN_WIDTH) -> AnalyticField:
    """u = exp(-|x - x0|^2 / s^2)"""
    cx, cy = center
    s2 = width * width

    def value(x, y):
        dx, dy = np.asarray(x, dtype=float) - cx, np.asarray(y, dtype=float) - cy
        return np.exp(-(dx * dx + dy * dy) / s2)

    def gradient(x, y):
        dx, dy = np.asarray(x, dtype=float) - cx, np.asarray(y, dtype=float) - cy
        g = value(x, y)
        return -2.0 * dx / s2 * g, -2.0 * dy / s2 * g

    def hessian(x, y):
        dx, dy = np.asarray(x, dtype=float) - cx, np.asarray(y, dtype=float) - cy
        g = value(x, y)
        return ((4.0 * dx * dx / (s2 * s2) - 2.0 / s2) * g,
                4.0 * dx * dy / (s2 * s2) * g,
                (4.0 * dy * dy / (s2 * s2) - 2.0 / s2) * g)

    return AnalyticField(f"gaussian({cx:g},{cy:g};{width:g})", value, gradient, hessian)


def radial_mode_one() -> AnalyticField:
    """u = r cos(theta) = x"""
    return harmonic_mode(1)


FIELD_SELECTORS: Dict[str, Callable[[], AnalyticField]] = {
    "constant": lambda: constant(1.0),
    "r2": radial_quadratic,
    "rcos": radial_mode_one,
    "mode2": lambda: harmonic_mode(2),
    "mode3": lambda: harmonic_mode(3),
    "gaussian": gaussian_bump,
}


def field_from_selector(selector: str) -> AnalyticField:
    try:
        return FIELD_SELECTORS[selector]()
    except KeyError:
        raise InvalidParameterError(
            "u0", f"unknown field {selector!r}; choose from {sorted(FIELD_SELECTORS)}") from None
