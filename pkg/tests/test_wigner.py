import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from photonbath.core import Free, Harmonic, ValidationError, make_params
from photonbath.langevin import IntegratorSpec
from photonbath.noise import SpectrumSpec
from photonbath.wigner import (BACKWARD_ARGUMENT, evaluate_transport, evolve_ensemble_forward,
                               fit_packet, gaussian_packet, oracle_momentum_width,
                               reconstruct_grid)

W0 = gaussian_packet(0.5, 1.0, 0.8, 1.2)


def _direct(x, p, xbar=0.5, k=1.0, sigma=0.8, hbar=1.2):
    return math.exp(-(p - k) ** 2 * sigma / hbar**2 - (x - xbar) ** 2 / sigma) / (math.pi * hbar)


def test_packet_normalised_and_matches_formula():
    total, _ = dblquad(lambda p, x: W0(x, p), -10, 10, -10, 10)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert W0(0.1, -0.3) == pytest.approx(_direct(0.1, -0.3))
    assert W0.var_x * W0.var_p == pytest.approx(W0.hbar**2 / 4)  # minimum uncertainty
    with pytest.raises(ValidationError):
        gaussian_packet(0, 0, -1.0)


def test_samples_have_packet_moments():
    rng = np.random.default_rng(0)
    s = np.array([np.concatenate(W0.sample(rng)) for _ in range(20_000)])
    assert s.mean(axis=0) == pytest.approx([0.5, 1.0], abs=0.03)
    assert s.var(axis=0) == pytest.approx([W0.var_x, W0.var_p], rel=0.04)


def test_transport_at_start_time_is_identity():
    x, p = np.meshgrid(np.linspace(-2, 2, 5), np.linspace(-1, 3, 4), indexing="ij")
    P = make_params(1.0, 0.5, 1.0)
    est = evaluate_transport(W0, (x, p), 1.0, P, Harmonic(1.0), SpectrumSpec(P), 10, t_a=1.0)
    ref = np.vectorize(_direct)(x, p)
    assert np.allclose(est.value, ref, rtol=1e-14) and not est.stderr.any()


def test_noiseless_free_transport_is_a_shift():
    P = make_params(2.0, 0.0, 0.0)
    x = np.linspace(-3, 3, 13)
    p = np.full_like(x, 0.7)
    est = evaluate_transport(W0, (x, p), 1.5, P, Free(), None, 1, dt=0.5)
    # characteristics started at (x, p) end at x + p t / M
    ref = np.array([_direct(xi + 0.7 * 1.5 / 2.0, 0.7) for xi in x])
    assert np.allclose(est.value, ref, rtol=1e-12)


def test_backward_and_forward_agree_after_momentum_reversal():
    P = make_params(1.0, 0.25, 1.0)  # w = 0.5
    t = 1.0
    xg = np.linspace(-6, 8, 57)
    pg = np.linspace(-4, 4, 41)
    X, Pm = np.meshgrid(xg, pg, indexing="ij")
    back = evaluate_transport(W0.momentum_reversed(), (X, Pm), t, P, Free(), SpectrumSpec(P), 2000,
                              seed=1, dt=t)
    marg = np.trapezoid(back.value, pg, axis=1)
    mean_b = np.trapezoid(xg * marg, xg) / np.trapezoid(marg, xg)
    var_b = np.trapezoid((xg - mean_b) ** 2 * marg, xg) / np.trapezoid(marg, xg)
    fwd = evolve_ensemble_forward(W0, P, Free(), SpectrumSpec(P), IntegratorSpec(t, 1), 20_000, 1)
    # x(t) = x0 + p0 t / M + eta / M
    var_exact = W0.var_x + W0.var_p * t**2 + P.noise_strength * t
    # the grid shares 2000 noise draws: se of the mean is sqrt(w t / 2000) ~ 0.016
    assert mean_b == pytest.approx(0.5 + 1.0 * t, abs=0.05)
    assert fwd.mean_x[-1] == pytest.approx(0.5 + 1.0 * t, abs=0.03)
    assert var_b == pytest.approx(var_exact, rel=0.03)
    assert fwd.var_x[-1] == pytest.approx(var_exact, rel=0.04)


def test_transport_worker_and_chunk_invariance():
    P = make_params(1.0, 0.5, 1.0)
    x = np.linspace(-2, 2, 7)
    q = (x, np.zeros_like(x))
    a = evaluate_transport(W0, q, 0.5, P, Harmonic(1.0), SpectrumSpec(P), 300, seed=4, dt=0.05)
    b = evaluate_transport(W0, q, 0.5, P, Harmonic(1.0), SpectrumSpec(P), 300, seed=4, dt=0.05,
                           chunk_points=100, workers=2)
    assert np.allclose(a.value, b.value, rtol=1e-13)
    assert a.to_csv().splitlines()[1] == "x,p,value,stderr"
    assert f"convention={BACKWARD_ARGUMENT}" in a.to_csv().splitlines()[0]


def test_transport_argument_checks():
    P = make_params(1.0, 0.5, 1.0)
    with pytest.raises(ValidationError):
        evaluate_transport(W0, (0.0, 0.0), 1.0, P, Free(), None, 0)
    with pytest.raises(ValidationError):
        evaluate_transport(W0, (0.0, 0.0), -1.0, P, Free(), None, 5)


def test_reconstruct_grid_normalisation():
    rng = np.random.default_rng(3)
    x, p = rng.normal(size=50_000), rng.normal(size=50_000)
    g = reconstruct_grid(x, p, np.linspace(-6, 6, 49), np.linspace(-6, 6, 49))
    cell = (12 / 48) ** 2
    assert g.value.sum() * cell == pytest.approx(1.0, abs=1e-3)
    peak = g.value[24 - 1:24 + 1, 24 - 1:24 + 1].mean()
    assert peak == pytest.approx(1 / (2 * math.pi), rel=0.1)
    assert np.all(g.stderr >= 0)


@pytest.mark.parametrize("amp,centre,sigma", [(1.0, 0.0, 1.0), (0.3, -2.0, 4.5)])
def test_fit_packet_exact(amp, centre, sigma):
    x = np.linspace(-10, 10, 81)
    popt, perr = fit_packet(x, amp * np.exp(-(x - centre) ** 2 / sigma))
    assert np.allclose(popt, [amp, centre, sigma], rtol=1e-6)


def test_oracle_momentum_width_shapes():
    P = make_params(1.0, 0.5, 1.0)
    m = evolve_ensemble_forward(W0, P, Harmonic(1.0), SpectrumSpec(P), IntegratorSpec(0.1, 20), 200,
                                0, record_every=5)
    rel, ratio = oracle_momentum_width(m, P, 1.0)
    assert rel.shape == m.t.shape and rel[0] == 0.0
    assert np.all(np.isfinite(ratio[m.var_p > 0]))
