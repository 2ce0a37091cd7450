"""
Theta-scheme stepping, tracked norms, growth behaviour and the l -> 0+ sweep.
"""

import math

import numpy as np
import pandas as pd
import pytest
import scipy.linalg as sla

from assembly import StateVector, assemble_operators, build_pencil, gram_set
from config import InvalidParameterError
from disk_oracle import dispersion_roots, growing_root, modal_reference
from evolution import (
    StepSizeError, ThetaStepper, evolve, initial_state, l_limit_experiment, step_amplification,
    step_operator_norm, theta_step
)
from fields import constant, gaussian_bump, radial_mode_one
from geometry_mesh import build_disk_mesh, trace_map
from linsolve import generalized_eigs, pencil_spectrum
from tests.conftest import make_pencil


def _leftmost_real_mode(pencil):
    """Most negative real eigenvalue with a real eigenvector scaled to max 1"""
    report = pencil_spectrum(pencil, keep_vectors=True)
    real = np.flatnonzero(np.abs(report.eigenvalues.imag) <= 1e-10 * np.maximum(1.0, np.abs(report.eigenvalues)))
    index = real[np.argmin(report.eigenvalues.real[real])]
    x = report.vectors[:, index]
    x = np.real(x / x[np.argmax(np.abs(x))])
    return float(report.eigenvalues[index].real), x


# =============================================================================
# SINGLE STEPS
# =============================================================================

@pytest.mark.parametrize("k,l", [(2.0, 0.5), (-1.0, 1.0)])
def test_constants_are_stationary(disk4, k, l):
    pencil = make_pencil(disk4, k, l)
    series = evolve(pencil, StateVector.from_field(constant(3.0), disk4[0]), 0.01, 1.0, snapshot_every=100)
    np.testing.assert_allclose(series.snapshots[100].values, 3.0, atol=1e-12)
    assert len(series) == 101


def test_eigenmode_scales_by_implicit_euler_factor(disk4):
    pencil = make_pencil(disk4, -1.0, 1.0)
    values, vectors = sla.eigh(pencil.B_stiff.toarray(), pencil.A_mass.toarray())
    lam, x = values[3], vectors[:, 3]
    tau = 0.01
    u = theta_step(pencil, StateVector(x, pencil.mesh_tag), tau)
    np.testing.assert_allclose(u.values, x / (1.0 + tau * lam), atol=1e-10 * np.max(np.abs(x)))


def test_crank_nicolson_factor(disk4):
    pencil = make_pencil(disk4, -1.0, 1.0)
    values, vectors = sla.eigh(pencil.B_stiff.toarray(), pencil.A_mass.toarray())
    lam, x = values[5], vectors[:, 5]
    tau = 0.05
    u = ThetaStepper(pencil, tau, 0.5).advance(x)
    factor = (1.0 - 0.5 * tau * lam) / (1.0 + 0.5 * tau * lam)
    np.testing.assert_allclose(u, factor * x, atol=1e-10 * np.max(np.abs(x)))
    assert step_amplification(lam, tau, 0.5) == pytest.approx(abs(factor))


def test_step_amplification_values():
    assert step_amplification(-2.0, 0.1) == pytest.approx(1.25)
    assert step_amplification(3.0, 0.1, 0.5) == pytest.approx(0.85 / 1.15)
    assert step_amplification(0.0, 0.1) == 1.0


@pytest.mark.parametrize("theta", [0.0, 0.49, 1.01])
def test_explicit_theta_rejected(disk4, theta):
    pencil = make_pencil(disk4, -1.0, 1.0)
    with pytest.raises(InvalidParameterError) as e:
        ThetaStepper(pencil, 0.01, theta)
    assert e.value.flag == "theta"


def test_singular_step_names_tau(unit_triangle):
    mesh, trace = unit_triangle
    pencil = build_pencil(mesh, trace, 1.0, 0.1)
    report = generalized_eigs(pencil.B_stiff, pencil.A_mass)
    real = report.eigenvalues[np.abs(report.eigenvalues.imag) <= 1e-10].real
    assert real.min() < 0
    tau = -1.0 / real.min()
    with pytest.raises(StepSizeError) as e:
        theta_step(pencil, StateVector(np.ones(3), pencil.mesh_tag), tau)
    assert e.value.tau == tau
    assert "tau <" in str(e.value)


# =============================================================================
# TRAJECTORIES
# =============================================================================

def test_conserved_quantity_over_long_run():
    mesh = build_disk_mesh(6)
    pencil = build_pencil(mesh, trace_map(mesh), 2.0, 0.5)
    series = evolve(pencil, StateVector.from_field(gaussian_bump(), mesh), 1e-3, 1.0)
    conserved = np.asarray(series.conserved)
    assert len(series) == 1001
    scale = max(abs(conserved[0]), 1.0)
    assert np.max(np.abs(conserved - conserved[0])) <= 1e-10 * scale


def test_dissipative_norm_never_grows(disk8):
    pencil = make_pencil(disk8, -1.0, 1.0)
    series = evolve(pencil, StateVector.from_field(gaussian_bump(), disk8[0]), 1e-3, 1.0)
    norms = np.asarray(series.norm_H)
    assert np.all(norms[1:] <= norms[:-1] * (1.0 + 1e-10))
    assert norms[-1] < norms[0]


def test_time_series_frame(disk4):
    pencil = make_pencil(disk4, 2.0, 0.5)
    series = evolve(pencil, StateVector.from_field(constant(1.0), disk4[0]), 0.1, 0.3)
    frame = series.to_frame()
    assert list(frame.columns) == ["t", "norm_H", "norm_H1_omega", "conserved"]
    np.testing.assert_allclose(frame["t"], [0.0, 0.1, 0.2, 0.3], atol=1e-15)
    grad, surface, trace_mass = series.energy_terms[0]
    assert grad == pytest.approx(0.0, abs=1e-12)
    assert surface == pytest.approx(0.0, abs=1e-12)
    assert trace_mass == pytest.approx(disk4[1].perimeter(), rel=1e-12)
    np.testing.assert_allclose(series.growth_ratio(), 1.0, atol=1e-12)


def test_final_time_shorter_than_step_rejected(disk4):
    pencil = make_pencil(disk4, 2.0, 0.5)
    with pytest.raises(InvalidParameterError) as e:
        evolve(pencil, np.ones(pencil.dimension), 0.1, 0.05)
    assert e.value.flag == "T"


def test_state_from_other_mesh_rejected(disk4, disk8):
    pencil = make_pencil(disk8, 2.0, 0.5)
    with pytest.raises(ValueError):
        evolve(pencil, StateVector.from_field(constant(1.0), disk4[0]), 0.1, 0.2)


def test_time_series_rejects_non_increasing_times(disk4):
    pencil = make_pencil(disk4, 2.0, 0.5)
    series = evolve(pencil, np.ones(pencil.dimension), 0.1, 0.1)
    grams = gram_set(disk4[0], disk4[1])
    with pytest.raises(ValueError):
        series.record(0.1, np.ones(pencil.dimension), pencil, grams)


@pytest.mark.parametrize("theta,low,high", [(1.0, 0.8, 1.2), (0.5, 1.7, 2.3)])
def test_temporal_order_on_growing_eigenmode(disk4, theta, low, high):
    pencil = make_pencil(disk4, 2.0, 0.5)
    lam, x = _leftmost_real_mode(pencil)
    assert lam < 0
    T = 0.5
    exact = math.exp(-lam * T) * x
    errors = []
    for tau in (0.02, 0.01, 0.005):
        stepper = ThetaStepper(pencil, tau, theta)
        u = x.copy()
        for _ in range(round(T / tau)):
            u = stepper.advance(u)
        errors.append(np.max(np.abs(u - exact)))
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    for order in orders:
        assert low <= order <= high


@pytest.mark.slow
def test_norm_stays_below_spectral_growth_bound():
    mesh = build_disk_mesh(6)
    pencil = build_pencil(mesh, trace_map(mesh), 2.0, 0.5)
    sigma_max = pencil_spectrum(pencil).sigma_max
    series = evolve(pencil, StateVector.from_field(gaussian_bump(), mesh), 1e-3, 0.5)
    assert len(series) == 501
    bound = 1.05 * np.exp(sigma_max * np.asarray(series.times)) * series.norm_H[0]
    assert np.all(np.asarray(series.norm_H) <= bound)


def test_dissipative_step_is_a_contraction(disk4):
    pencil = make_pencil(disk4, -1.0, 1.0)
    estimate = step_operator_norm(pencil, 0.1, gram=pencil.A_mass)
    assert 0.99 <= estimate <= 1.0 + 1e-6


@pytest.mark.slow
def test_growth_rate_of_first_mode(disk16):
    mesh, trace = disk16
    pencil = build_pencil(mesh, trace, 2.0, 0.5)
    series = evolve(pencil, StateVector.from_field(radial_mode_one(), mesh), 1e-3, 1.0)
    t = np.asarray(series.times)
    window = t >= 0.6 - 1e-12
    slope = np.polyfit(t[window], np.log(np.asarray(series.norm_H)[window]), 1)[0]
    assert slope == pytest.approx(growing_root(2.0, 0.5, 1).sigma, rel=0.05)


@pytest.mark.slow
def test_modal_solution_amplitude(disk16):
    mesh, trace = disk16
    root = growing_root(2.0, 0.5, 1)
    pencil = build_pencil(mesh, trace, 2.0, 0.5)
    u0 = StateVector(modal_reference(root, 0.0, mesh.nodes), mesh.tag)
    series = evolve(pencil, u0, 1e-3, 1.0)
    assert series.norm_H[-1] / series.norm_H[0] == pytest.approx(math.exp(root.sigma), rel=0.05)


# =============================================================================
# l -> 0+ SWEEP
# =============================================================================

def test_initial_state_accepts_fields_and_arrays(disk4):
    mesh, _ = disk4
    from_field = initial_state(constant(2.0), mesh)
    from_array = initial_state(np.full(mesh.num_nodes, 2.0), mesh)
    np.testing.assert_array_equal(from_field.values, from_array.values)
    assert initial_state(from_field, mesh) is from_field


@pytest.mark.parametrize("l_list", [[0.4, 0.8], [0.4, 0.4], [], [0.5, -0.1]])
def test_l_list_must_be_positive_and_decreasing(disk4, l_list):
    with pytest.raises(InvalidParameterError) as e:
        l_limit_experiment(2.0, l_list, gaussian_bump(), 0.1, 0.2, disk4[0])
    assert e.value.flag == "l_list"


@pytest.mark.slow
def test_peaks_blow_up_as_l_shrinks(disk16):
    """rings = 16 resolves the fastest growing mode at l = 0.1"""
    mesh, trace = disk16
    T = 3.0
    k = 2.0
    frame = l_limit_experiment(k, [0.8, 0.4, 0.2, 0.1], gaussian_bump(), 1e-3, T, mesh,
                               operators=assemble_operators(mesh, trace))
    assert list(frame.columns) == ["l", "peak_norm_H1", "predicted_sigma_max"]
    assert list(frame["l"]) == [0.8, 0.4, 0.2, 0.1]
    peaks = frame["peak_norm_H1"].to_numpy()
    assert np.all(np.diff(peaks) > 0)
    slope = (math.log(peaks[3]) - math.log(peaks[2])) / (1.0 / 0.1 - 1.0 / 0.2)
    assert k * k * T / 8.0 <= slope <= k * k * T / 2.0
    np.testing.assert_allclose(frame["predicted_sigma_max"], [1.25, 2.5, 5.0, 10.0])


@pytest.mark.slow
def test_discrete_growth_rate_tracks_dispersion_at_small_l(disk16):
    mesh, trace = disk16
    discrete = pencil_spectrum(build_pencil(mesh, trace, 2.0, 0.1)).sigma_max
    exact = max(r.sigma for r in dispersion_roots(2.0, 0.1, 25, mu_max=10.0) if r.branch == "growing")
    assert 0.8 <= discrete / exact <= 1.5


def test_dissipative_sweep_stays_bounded(disk8):
    mesh, trace = disk8
    u0 = gaussian_bump()
    frame = l_limit_experiment(-1.0, [0.8, 0.4, 0.2, 0.1], u0, 5e-3, 1.0, mesh)
    grams = gram_set(mesh, trace)
    x = u0.at_nodes(mesh.nodes)
    initial = math.sqrt(x @ (grams.G_H1Omega @ x))
    assert np.all(frame["peak_norm_H1"] <= initial * (1.0 + 1e-8))
    assert np.all(frame["predicted_sigma_max"] == 0.0)


def test_sweep_rows_do_not_depend_on_workers(disk4):
    mesh, _ = disk4
    args = (2.0, [0.8, 0.4, 0.2], gaussian_bump(), 0.05, 0.5, mesh)
    serial = l_limit_experiment(*args, workers=1)
    threaded = l_limit_experiment(*args, workers=3)
    pd.testing.assert_frame_equal(serial, threaded)
