"""
Wentzell Heat Solver - command line front end
Bulk-surface finite elements for the heat equation with dynamical boundary conditions.
One subcommand per experiment; CSV is the output contract.
"""

import argparse
import sys
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError, field_validator, model_validator

from config import (
    C8_DEFAULT, InvalidParameterError, log,
    require_nonzero_k, require_positive, require_theta
)
from assembly import AssemblyError, StateVector, build_pencil, gram_set
from disk_oracle import OracleSingularError, dispersion_frame, dispersion_roots
from evolution import evolve, l_limit_experiment
from fields import FIELD_SELECTORS, field_from_selector
from geometry_mesh import Mesh, MeshError, build_disk_mesh, load_mesh_text, trace_map, write_mesh_text
from linsolve import SingularSystemError, SpectrumSizeError, pencil_spectrum
from reports import export_pencil, format_table, write_csv
from resolvent import constants_report, solve_resolvent

COMMANDS = ("mesh-info", "constants", "solve-elliptic", "evolve", "spectrum", "dispersion", "l-limit")

# subcommands that need the boundary parameters
NEEDS_KL = {"constants", "solve-elliptic", "evolve", "spectrum", "dispersion", "l-limit"}
# l-limit sweeps its own --l-list
NEEDS_L = NEEDS_KL - {"l-limit"}

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INVALID = 2


# =============================================================================
# PYDANTIC MODELS
# =============================================================================

class RunConfig(BaseModel):
    command: Literal["mesh-info", "constants", "solve-elliptic", "evolve", "spectrum", "dispersion", "l-limit"]
    k: Optional[float] = None
    l: Optional[float] = None
    c8: float = C8_DEFAULT
    rings: Optional[int] = None
    mesh_file: Optional[str] = None
    tau: float = 1e-3
    T: float = 1.0
    theta: float = 1.0
    lam: Optional[float] = None
    l_list: List[float] = [0.8, 0.4, 0.2, 0.1]
    u0: str = "gaussian"
    n_max: int = 5
    mu_max: float = 30.0
    out: Optional[str] = None
    mesh_out: Optional[str] = None
    export_dir: Optional[str] = None

    @field_validator("k")
    @classmethod
    def _k(cls, v):
        return v if v is None else require_nonzero_k(v)

    @field_validator("l")
    @classmethod
    def _l(cls, v):
        return v if v is None else require_positive("l", v)

    @field_validator("c8")
    @classmethod
    def _c8(cls, v):
        return require_positive("c8", v)

    @field_validator("tau")
    @classmethod
    def _tau(cls, v):
        return require_positive("tau", v)

    @field_validator("T")
    @classmethod
    def _T(cls, v):
        return require_positive("T", v)

    @field_validator("theta")
    @classmethod
    def _theta(cls, v):
        return require_theta(v)

    @field_validator("rings")
    @classmethod
    def _rings(cls, v):
        if v is not None and v < 1:
            raise InvalidParameterError("rings", f"rings must be >= 1, got {v}")
        return v

    @field_validator("l_list", mode="before")
    @classmethod
    def _split_l_list(cls, v):
        if isinstance(v, str):
            return [part for part in v.replace(" ", "").split(",") if part]
        return v

    @field_validator("l_list")
    @classmethod
    def _l_list(cls, v):
        for l in v:
            require_positive("l_list", l)
        if any(b >= a for a, b in zip(v, v[1:])):
            raise InvalidParameterError("l_list", f"l values must be strictly decreasing, got {v}")
        return v

    @field_validator("u0")
    @classmethod
    def _u0(cls, v):
        if v not in FIELD_SELECTORS:
            raise InvalidParameterError("u0", f"unknown field {v!r}; choose from {sorted(FIELD_SELECTORS)}")
        return v

    @field_validator("n_max")
    @classmethod
    def _n_max(cls, v):
        if v < 0:
            raise InvalidParameterError("n_max", f"n_max must be nonnegative, got {v}")
        return v

    @field_validator("mu_max")
    @classmethod
    def _mu_max(cls, v):
        return require_positive("mu_max", v)

    @model_validator(mode="after")
    def _per_command(self):
        if self.command in NEEDS_KL and self.k is None:
            raise InvalidParameterError("k", "k must be nonzero (missing --k)")
        if self.command in NEEDS_L and self.l is None:
            raise InvalidParameterError("l", "l must be positive (missing --l)")
        if self.command == "solve-elliptic" and self.lam is None:
            raise InvalidParameterError("lambda", "solve-elliptic needs --lambda")
        if self.rings is not None and self.mesh_file is not None:
            raise InvalidParameterError("rings", "give either --rings or --mesh-file, not both")
        if self.command in ("evolve", "l-limit") and self.T < self.tau:
            raise InvalidParameterError("T", f"T={self.T} must be at least tau={self.tau}")
        return self


def validation_message(error: ValidationError) -> str:
    """One line per failing flag, e.g. 'k: k must be nonzero ...'"""
    lines = []
    for item in error.errors():
        cause = item.get("ctx", {}).get("error")
        if isinstance(cause, InvalidParameterError):
            lines.append(str(cause))
            continue
        flag = ".".join(str(part) for part in item.get("loc", ())) or "config"
        lines.append(f"{flag}: {item.get('msg')}")
    return "\n".join(lines)


# =============================================================================
# HELPERS
# =============================================================================

def load_mesh(config: RunConfig) -> Mesh:
    if config.mesh_file:
        with open(config.mesh_file) as f:
            return load_mesh_text(f)
    return build_disk_mesh(config.rings or 8)


def _setup(config: RunConfig):
    mesh = load_mesh(config)
    trace = trace_map(mesh)
    pencil = build_pencil(mesh, trace, config.k, config.l)
    if config.export_dir:
        export_pencil(pencil, config.export_dir)
    return mesh, trace, pencil


# =============================================================================
# SUBCOMMANDS
# =============================================================================

def run_mesh_info(config: RunConfig) -> Tuple[pd.DataFrame, List[str]]:
    mesh = load_mesh(config)
    trace = trace_map(mesh)
    if config.mesh_out:
        with open(config.mesh_out, "w") as f:
            write_mesh_text(mesh, f)
    frame = pd.DataFrame([{
        "num_nodes": mesh.num_nodes,
        "num_triangles": mesh.num_triangles,
        "num_boundary": mesh.num_boundary,
        "mesh_size": mesh.mesh_size(),
        "total_area": mesh.total_area(),
        "perimeter": trace.perimeter(),
    }])
    return frame, [f"mesh {mesh.tag}", f"h = {mesh.mesh_size():.6g}",
                   f"area = {mesh.total_area():.12g}", f"perimeter = {trace.perimeter():.12g}"]


def run_constants(config: RunConfig) -> Tuple[pd.DataFrame, List[str]]:
    report = constants_report(config.k, config.l, config.c8)
    return report.to_frame(), report.to_text().splitlines()


def run_solve_elliptic(config: RunConfig) -> Tuple[pd.DataFrame, List[str]]:
    mesh, _, pencil = _setup(config)
    h = StateVector.from_field(field_from_selector(config.u0), mesh)
    solution = solve_resolvent(pencil, config.lam, h)
    u = np.real_if_close(solution.u.values)
    frame = pd.DataFrame({"node": np.arange(mesh.num_nodes), "x": mesh.nodes[:, 0],
                          "y": mesh.nodes[:, 1], "u": u})
    return frame, [f"mesh {mesh.tag}, lambda = {config.lam}, h = {config.u0}",
                   f"residual bulk = {solution.residual_bulk:.3e}",
                   f"residual boundary = {solution.residual_boundary:.3e}",
                   f"max |u| = {float(np.max(np.abs(u))):.6g}"]


def run_evolve(config: RunConfig) -> Tuple[pd.DataFrame, List[str]]:
    mesh, trace, pencil = _setup(config)
    grams = gram_set(mesh, trace, pencil.operators)
    u0 = StateVector.from_field(field_from_selector(config.u0), mesh)
    series = evolve(pencil, u0, config.tau, config.T, config.theta, grams)
    drift = abs(series.conserved[-1] - series.conserved[0]) / max(abs(series.conserved[0]), 1e-300)
    return series.to_frame(), [
        f"mesh {mesh.tag}, k = {config.k}, l = {config.l}, theta = {config.theta}",
        f"steps = {len(series) - 1}, tau = {config.tau}, T = {series.times[-1]:.6g}",
        f"norm_H: {series.norm_H[0]:.6g} -> {series.norm_H[-1]:.6g}",
        f"peak norm_H1_omega = {max(series.norm_H1Omega):.6g}",
        f"relative drift of conserved quantity = {drift:.2e}",
    ]


def run_spectrum(config: RunConfig) -> Tuple[pd.DataFrame, List[str]]:
    mesh, _, pencil = _setup(config)
    report = pencil_spectrum(pencil)
    rates = report.growth_rates()
    return report.to_frame(), [
        f"mesh {mesh.tag}, dimension {report.dimension}, "
        f"finite {len(report.eigenvalues)}, infinite {report.infinite_count}",
        f"sigma_max = {report.sigma_max:.10g}",
        "growth rates: " + (", ".join(f"{r:.6g}" for r in rates[:8]) or "none"),
        f"max residual = {float(np.max(report.residuals)):.2e}",
    ]


def run_dispersion(config: RunConfig) -> Tuple[pd.DataFrame, List[str]]:
    roots = dispersion_roots(config.k, config.l, config.n_max, config.mu_max)
    growing = [r for r in roots if r.branch == "growing"]
    return dispersion_frame(roots), [
        f"k = {config.k}, l = {config.l}, n <= {config.n_max}, mu <= {config.mu_max}",
        f"{len(roots)} roots, {len(growing)} growing",
    ] + [f"n = {r.n}: sigma = {r.sigma:.10g}" for r in growing[:10]]


def run_l_limit(config: RunConfig) -> Tuple[pd.DataFrame, List[str]]:
    mesh = load_mesh(config)
    frame = l_limit_experiment(config.k, config.l_list, field_from_selector(config.u0),
                               config.tau, config.T, mesh, config.theta)
    return frame, [f"mesh {mesh.tag}, k = {config.k}, T = {config.T}, u0 = {config.u0}"]


HANDLERS: Dict[str, Callable[[RunConfig], Tuple[pd.DataFrame, List[str]]]] = {
    "mesh-info": run_mesh_info,
    "constants": run_constants,
    "solve-elliptic": run_solve_elliptic,
    "evolve": run_evolve,
    "spectrum": run_spectrum,
    "dispersion": run_dispersion,
    "l-limit": run_l_limit,
}


# =============================================================================
# DISPATCH
# =============================================================================

def dispatch(config: RunConfig) -> int:
    """Run one subcommand; 0 on success, 2 on invalid input, 1 on numerical failure"""
    try:
        frame, summary = HANDLERS[config.command](config)
    except (InvalidParameterError, MeshError, AssemblyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SingularSystemError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OracleSingularError, SpectrumSizeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID

    if config.out:
        write_csv(frame, config.out)
    print(f"== {config.command} ==")
    for line in summary:
        print(line)
    if config.command not in ("constants", "mesh-info"):
        print(format_table(frame))
    return EXIT_OK


# =============================================================================
# ARGUMENTS
# =============================================================================

# flag spelling -> RunConfig field
ALIASES = {"lambda": "lam", "l-list": "l_list", "mesh-file": "mesh_file", "n-max": "n_max",
           "mu-max": "mu_max", "mesh-out": "mesh_out", "export-dir": "export_dir"}


def read_config_file(path: str) -> Dict[str, str]:
    """Flat key=value lines; '#' starts a comment; keys use flag or field spelling"""
    values = {}
    fields = set(RunConfig.model_fields)
    with open(path) as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParameterError("config", f"{path}:{number}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = ALIASES.get(key.lstrip("-"), key.lstrip("-").replace("-", "_"))
            if key not in fields or key == "command":
                raise InvalidParameterError("config", f"{path}:{number}: unknown key {key!r}")
            values[key] = value
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wentzell",
        description="Heat equation with reactive-diffusive dynamical boundary conditions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file; explicit flags take precedence")
        p.add_argument("--k", type=float)
        p.add_argument("--l", type=float)
        p.add_argument("--c8", type=float)
        p.add_argument("--rings", type=int)
        p.add_argument("--mesh-file", dest="mesh_file")
        p.add_argument("--tau", type=float)
        p.add_argument("--T", dest="T", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--l-list", dest="l_list", help="comma separated, strictly decreasing")
        p.add_argument("--u0", help="one of " + ", ".join(sorted(FIELD_SELECTORS)))
        p.add_argument("--n-max", dest="n_max", type=int)
        p.add_argument("--mu-max", dest="mu_max", type=float)
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--mesh-out", dest="mesh_out", help="mesh-info: write the mesh as text")
        p.add_argument("--export-dir", dest="export_dir", help="write pencil matrices as COO text")
    return parser


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    """Merge the optional config file with explicit flags and validate"""
    args = vars(build_parser().parse_args(argv))
    values: Dict[str, object] = {}
    if args.get("config"):
        values.update(read_config_file(args["config"]))
    values.update({key: value for key, value in args.items() if value is not None and key != "config"})
    return RunConfig(**values)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = parse_config(argv)
    except ValidationError as e:
        print(f"error: {validation_message(e)}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidParameterError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    log("CLI", f"running {config.command}")
    return dispatch(config)


if __name__ == "__main__":
    sys.exit(main())
