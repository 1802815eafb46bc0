"""Closed-form results for the free particle and the harmonic oscillator.

These serve as reference values. Several are only accurate to lowest order
in gamma and are kept in that form; comparisons against simulation live in
the tests.
"""
from __future__ import annotations

import io
from typing import Optional, Sequence

import numpy as np

from .core import PhysicalParams
from .noise import NoisePath

_SERIES_SWITCH = 1e-4


def _sinc_ratio(u):
    """sin(u)/u with a series below |u| < 1e-4."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < _SERIES_SWITCH
    out[small] = 1.0 - u[small] ** 2 / 6.0
    us = u[~small]
    out[~small] = np.sin(us) / us
    return out


def free_solution(params: PhysicalParams, x, p, t, noise: Optional[NoisePath] = None,
                  t_a: float = 0.0):
    """x + p (t - t_a) / M, plus the accumulated noise impulse / M.

    With ``noise`` the times must lie on the path grid; the noise is taken to
    start at ``t_a``.
    """
    t = np.asarray(t, dtype=float)
    scalar = np.ndim(x) == 0 and np.ndim(p) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = x + np.multiply.outer(t - t_a, p) / params.mass
    if noise is not None:
        k = np.rint((t - noise.t0) / noise.dt).astype(int)
        if np.any(k < 0) or np.any(k > noise.n):
            raise ValueError("requested time outside the noise path")
        out = out + noise.eta()[k] / params.mass
    return out[..., 0] if scalar else out


def harmonic_orbit(params: PhysicalParams, omega: float, x_a, p, t, t_a: float = 0.0):
    """Noise-averaged harmonic orbit to lowest order in gamma, with a
    1/(1 + gamma omega) factor on the momentum term."""
    tau = np.asarray(t, dtype=float) - t_a
    g = params.gamma
    env = np.exp(-g * omega**2 * tau / 2.0)
    return env * (x_a * np.cos(omega * tau)
                  + p / (1.0 + g * omega) * np.sin(omega * tau) / (params.mass * omega))


def harmonic_width(params: PhysicalParams, omega: float, t, gamma: Optional[float] = None,
                   t_a: float = 0.0):
    """Position variance of the damped oscillator driven by the bath.

    (w / 2M^2) tau exp(-gamma omega^2 tau) [1 + sin(2 omega tau) / (2 omega tau)]
    with ``tau = t - t_a``; reduces to w tau / M^2 as omega -> 0.
    """
    g = params.gamma if gamma is None else gamma
    tau = np.asarray(t, dtype=float) - t_a
    w, M = params.noise_strength, params.mass
    return (w / (2.0 * M**2)) * tau * np.exp(-g * omega**2 * tau) * (1.0 + _sinc_ratio(2.0 * omega * tau))


def free_width(params: PhysicalParams, t, t_a: float = 0.0):
    return params.noise_strength * (np.asarray(t, dtype=float) - t_a) / params.mass**2


def f_gamma(gamma_omega: float, omega_t):
    """Dimensionless width curve; Var x = w / (2 M^2 omega) * f_gamma(omega t).

    ``gamma_omega`` is the friction constant in units of 1/omega.
    """
    s = np.asarray(omega_t, dtype=float)
    return s * np.exp(-gamma_omega * s) * (1.0 + _sinc_ratio(2.0 * s))


def width_curve(gammas: Sequence[float], omega_t) -> dict:
    """Table of f_gamma over ``omega_t`` for each gamma (in units of 1/omega)."""
    omega_t = np.asarray(omega_t, dtype=float)
    if omega_t.size == 0 or np.any(omega_t < 0):
        raise ValueError("omega_t grid must be non-empty and non-negative")
    table = {"omega_t": omega_t}
    for g in gammas:
        table[f"f_gamma_{g:g}"] = f_gamma(float(g), omega_t)
    return table


def width_curve_csv(table: dict, meta: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write("# meta: " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    names = list(table)
    buf.write(",".join(names) + "\n")
    for row in zip(*(table[k] for k in names)):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def packet_params(params: PhysicalParams, sigma: float, xbar: float, p: float, t,
                  t_a: float = 0.0):
    """Free-packet centre and width parameter after time ``t - t_a``.

    xbar(t) = xbar - p (t - t_a) / M,  sigma(t) = sigma [1 + 2 w (t - t_a) / M^2].
    """
    tau = np.asarray(t, dtype=float) - t_a
    M, w = params.mass, params.noise_strength
    return xbar - p * tau / M, sigma * (1.0 + 2.0 * w * tau / M**2)
