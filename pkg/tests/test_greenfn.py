import math

import numpy as np
import pytest

from photonbath import greenfn
from photonbath.core import Free, Harmonic, PhaseState, ValidationError, make_params
from photonbath.greenfn import (ClassicalOrbit, build_green, composite_solution, compute_B,
                                compute_Q, growth_rate, noise_scale, rescale_noise, solve_classical)
from photonbath.langevin import IntegratorSpec, integrate
from photonbath.noise import SpectrumSpec, white_path

T = np.linspace(0.0, 20.0, 4001)


def _const_green(omega):
    return build_green(ClassicalOrbit.from_frequency(T, lambda s: omega**2 + 0.0 * s))


def test_classical_harmonic_orbit():
    P = make_params(2.0, 0.0, 0.0)
    orbit = solve_classical(P, Harmonic(1.5, mass=2.0), 1.0, 3.0, T)
    exact = np.cos(1.5 * T) + 3.0 / (2.0 * 1.5) * np.sin(1.5 * T)
    assert np.max(np.abs(orbit.x - exact)) < 1e-8  # RK4 global error (h omega)^4 t
    assert np.allclose(orbit.omega2, 2.25)
    E = orbit.energy()
    assert np.ptp(E) / E[0] < 1e-9


@pytest.mark.parametrize("omega", [0.5, 2.0])
def test_constant_frequency_kernel(omega):
    g = _const_green(omega)
    i = np.arange(0, T.size, 97)
    I, J = np.meshgrid(i, i, indexing="ij")
    exact = np.where(I >= J, np.sin(omega * (T[I] - T[J])) / omega, 0.0)
    assert np.max(np.abs(g.at(I, J) - exact)) < 1e-8
    assert np.max(np.abs(g.wronskian + 1.0)) < 1e-10


def test_green_boundary_conditions_and_interpolation():
    g = build_green(ClassicalOrbit.from_frequency(T, lambda s: 1.0 + 0.5 * np.sin(s)))
    assert g.xi1[0] == 0 and g.dxi1[0] == 1 and g.xi2[0] == 1 and g.dxi2[0] == 0
    assert np.allclose(g.at(np.arange(50), np.arange(50)), 0.0)
    # interpolated G agrees with grid values
    assert g(T[800], T[300]) == pytest.approx(g.at(800, 300), abs=1e-12)
    assert g(T[300] + 1e-3, T[300] + 2e-3) == 0.0


def test_solve_constant_forcing():
    g = _const_green(1.0)
    u = g.solve(np.ones_like(T))
    assert np.max(np.abs(u - (1.0 - np.cos(T)))) < 1e-9


def test_compute_Q_against_brute_force_sum():
    P = make_params(1.3, 0.5, 1.0)
    t = np.linspace(0.0, 5.0, 501)
    g = build_green(ClassicalOrbit.from_frequency(t, lambda s: 1.0 + 0.4 * np.cos(2 * s)))
    path = white_path(P, 500, 0.01, seed=2)
    Q = compute_Q(g, path, P)
    brute = np.zeros_like(Q)
    for k in range(t.size):
        for j in range(k):
            brute[k] += g.source_kernel(k, j + 1) * path.increments[j, 0]
    assert np.allclose(Q, brute / P.mass, atol=1e-12)


def test_Q_reproduces_linear_sde_response():
    P = make_params(1.0, 0.0, 0.0)
    bath = make_params(1.0, 0.5, 1.0)
    n, dt = 3000, 1e-3
    t = dt * np.arange(n + 1)
    orbit = solve_classical(P, Harmonic(1.0), 1.0, 0.0, t)
    g = build_green(orbit)
    path = white_path(bath, n, dt, seed=5)
    s = 0.1
    Q = compute_Q(g, rescale_noise(path, s), P)
    x = integrate(P, Harmonic(1.0), PhaseState([1.0], [0.0]), path, IntegratorSpec(dt, n)).x[:, 0]
    resp = x - orbit.x
    assert np.max(np.abs(resp - s * Q)) < 1e-3 * np.max(np.abs(resp))
    assert np.allclose(composite_solution(orbit, compute_B(g, orbit, P), Q, P, s), orbit.x + s * Q)


def test_dissipative_correction_harmonic_closed_form():
    P = make_params(1.0, 0.02, 0.0)
    orbit = solve_classical(P, Harmonic(1.0), 1.0, 0.0, T)
    corr = compute_B(build_green(orbit), orbit, P)
    # A'' + A = -sin t, A(0) = A'(0) = 0
    assert np.max(np.abs(corr.A - 0.5 * (T * np.cos(T) - np.sin(T)))) < 1e-8
    assert np.all(np.isnan(corr.B[corr.mask]))
    assert np.allclose(corr.damped, orbit.x - 0.02 * corr.A)


def test_free_particle_B_is_zero():
    P = make_params(1.0, 0.1, 0.0)
    orbit = solve_classical(P, Free(1), 0.5, 1.0, T)
    corr = compute_B(build_green(orbit), orbit, P)
    good = ~corr.mask
    assert np.all(corr.A == 0) and np.all(corr.B[good] == 0)


def test_homogeneous_coefficients():
    P = make_params(1.0, 0.02, 0.0)
    orbit = solve_classical(P, Harmonic(1.0), 1.0, 0.0, T)
    g = build_green(orbit)
    a0 = compute_B(g, orbit, P).A
    a1 = compute_B(g, orbit, P, (0.5, -1.0)).A
    assert np.allclose(a1 - a0, 0.5 * np.sin(T) - np.cos(T), atol=1e-9)


def test_noise_scale():
    assert noise_scale(make_params(1, 0, 4.0, alpha=0.5, c=4.0)) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        noise_scale(make_params(1, 0, 1.0))
    assert noise_scale(make_params(1, 0, 1.0), 0.3) == 0.3
    path = white_path(make_params(1, 0.5, 1.0), 8, 0.1)
    assert not rescale_noise(path, 0.0).increments.any()


def test_growth_rate_stable_and_short_grid():
    t = np.linspace(0, 200, 40_001)
    gr = growth_rate(build_green(ClassicalOrbit.from_frequency(t, lambda s: 1.0 + 0.0 * s)))
    assert abs(gr.rate) < 1e-3 and not gr.degenerate
    with pytest.raises(ValidationError):
        growth_rate(_const_green(0.5))


def test_grid_validation():
    with pytest.raises(ValidationError):
        ClassicalOrbit.from_frequency(np.array([0.0, 1.0, 3.0]), lambda s: 1.0)


def test_csv_outputs():
    g = _const_green(1.0)
    assert g.to_csv().splitlines()[0] == "t,xi1,xi2,wronskian"
    P = make_params(1.0, 0.0, 0.0)
    orbit = solve_classical(P, Harmonic(1.0), 1.0, 0.0, T)
    assert orbit.to_csv().splitlines()[0] == "t,xcl,vcl,omega2"
    corr = compute_B(g, orbit, P)
    text = greenfn.correction_csv(corr, np.zeros_like(T))
    assert text.splitlines()[0] == "t,A,B_masked,Q"
    assert math.isnan(float(text.splitlines()[1 + int(np.argmax(corr.mask))].split(",")[2])) or not corr.mask.any()


def test_linear_B_with_homogeneous_shift():
    # adding (omega^2 / 2) xi1 to the retarded A turns B into omega^2 t / 2
    P = make_params(1.0, 0.02, 0.0)
    orbit = solve_classical(P, Harmonic(1.0), 1.0, 0.0, T)
    corr = compute_B(build_green(orbit), orbit, P, (0.5, 0.0))
    away = np.abs(orbit.x) > 1e-3
    assert np.max(np.abs(corr.B[away] - T[away] / 2)) < 1e-6
