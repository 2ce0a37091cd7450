"""
config.py
Centralized configuration for the Wentzell heat solver.
All environment variables, numerical tolerances and parameter checks in one place.
"""

import os

# =============================================================================
# LINEAR ALGEBRA CONFIG
# =============================================================================

# Largest pencil dimension handed to the dense QZ solver
DENSE_CUTOFF = int(os.environ.get("WENTZELL_DENSE_CUTOFF", "3000").strip())

# Relative residual accepted from a sparse direct solve
SOLVE_RTOL = float(os.environ.get("WENTZELL_SOLVE_RTOL", "1e-10").strip())

# Smallest |pivot| / max |pivot| before a factorization counts as singular
PIVOT_RTOL = float(os.environ.get("WENTZELL_PIVOT_RTOL", "1e-12").strip())

# |beta| below this (pairs normalized to unit length) marks an infinite eigenvalue
INFINITE_BETA = float(os.environ.get("WENTZELL_INFINITE_BETA", "1e-12").strip())

# =============================================================================
# MODEL CONFIG
# =============================================================================

# Omega-dependent constant of the coercivity estimate; never computed, only configured
C8_DEFAULT = float(os.environ.get("WENTZELL_C8", "1.0").strip())

# Radial finite-difference oracle grid size (at least 10^4 points)
RADIAL_POINTS = max(int(os.environ.get("WENTZELL_RADIAL_POINTS", "10001").strip()), 10001)

# Worker threads for the l-sweep
WORKERS = max(int(os.environ.get("WENTZELL_WORKERS", "1").strip()), 1)

# Default Gaussian bump: exp(-|x - x0|^2 / s^2)
GAUSSIAN_CENTER = (0.3, 0.0)
GAUSSIAN_WIDTH = 0.2

# CSV float format (17 significant digits)
FLOAT_FORMAT = "%.17g"

VERBOSE = os.environ.get("WENTZELL_VERBOSE", "true").strip().lower() == "true"


# =============================================================================
# PARAMETER VALIDATION
# =============================================================================

class InvalidParameterError(ValueError):
    """Raised when a model or run parameter is outside its domain"""
    def __init__(self, flag: str, message: str):
        self.flag = flag
        self.message = message
        super().__init__(f"{flag}: {message}")


def require_nonzero_k(k: float) -> float:
    """k = 0 (non-interactive case) is out of scope"""
    if k == 0:
        raise InvalidParameterError("k", "k must be nonzero (non-interactive case k=0 is out of scope)")
    return float(k)


def require_positive(flag: str, value: float) -> float:
    if not value > 0:
        raise InvalidParameterError(flag, f"{flag} must be positive, got {value}")
    return float(value)


def require_negative(flag: str, value: float) -> float:
    if not value < 0:
        raise InvalidParameterError(flag, f"{flag} must be negative, got {value}")
    return float(value)


def require_theta(theta: float) -> float:
    """Only implicit theta-schemes are allowed"""
    if not 0.5 <= theta <= 1.0:
        raise InvalidParameterError("theta", f"theta must lie in [0.5, 1], got {theta}")
    return float(theta)


# =============================================================================
# HELPER FUNCTIONS
# =============================================================================

def log(tag: str, message: str):
    """Print a tagged progress line"""
    if VERBOSE:
        print(f"[{tag}] {message}")
