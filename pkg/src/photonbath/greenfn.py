"""One-dimensional semiclassical expansion around the classical orbit.

The stochastic orbit is written as

    x(t) = exp(-gamma B(t)) [x_cl(t) + s Q(t)],   s = sqrt(T / T_H)

with ``x_cl`` the noiseless, frictionless orbit, ``Q`` the linear response to
the rescaled noise and ``A = x_cl B`` the dissipative correction. Both ``Q``
and ``A`` are quadratures against the retarded Green function of
``d^2/dt^2 + Omega^2(t)``, ``Omega^2 = V''(x_cl) / M``, built from the
homogeneous solutions ``xi1`` (xi1(0)=0, xi1'(0)=1) and ``xi2`` (xi2(0)=1,
xi2'(0)=0):

    G(t, t') = xi1(t) xi2(t') - xi2(t) xi1(t'),   t >= t'.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from .core import PhysicalParams, Potential, ValidationError
from .langevin import IntegrationError
from .noise import NoisePath


def _uniform_grid(t_grid) -> tuple[np.ndarray, float]:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise ValidationError("t_grid", "need a 1-D grid with at least 3 points")
    dt = (t[-1] - t[0]) / (t.size - 1)
    if dt <= 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * abs(dt)):
        raise ValidationError("t_grid", "grid must be uniform and increasing")
    return t, dt


def _rk4(f, y0, t, dt):
    """Classic RK4 on a uniform grid; stops early on non-finite state."""
    y = np.empty((t.size,) + np.shape(y0))
    y[0] = y0
    for k in range(t.size - 1):
        tk, yk = t[k], y[k]
        k1 = f(tk, yk)
        k2 = f(tk + 0.5 * dt, yk + 0.5 * dt * k1)
        k3 = f(tk + 0.5 * dt, yk + 0.5 * dt * k2)
        k4 = f(tk + dt, yk + dt * k3)
        y[k + 1] = yk + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y[k + 1])):
            raise IntegrationError(f"solution escaped to infinity at t = {t[k + 1]:g}", step=k + 1)
    return y


@dataclass(frozen=True)
class ClassicalOrbit:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    omega2: np.ndarray
    mass: float
    omega2_fn: Callable[[float], float]
    potential: Optional[Potential] = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def amplitude(self) -> float:
        return float(np.max(np.abs(self.x)))

    def energy(self) -> np.ndarray:
        if self.potential is None:
            raise ValueError("orbit has no potential attached")
        return 0.5 * self.mass * self.v**2 + self.potential.v(self.x[:, None])

    @classmethod
    def from_frequency(cls, t_grid, omega2_fn: Callable[[float], float], mass: float = 1.0):
        """Frequency track without an underlying orbit (x_cl = 0), for
        studying the Green function of a prescribed ``Omega^2(t)``."""
        t, _ = _uniform_grid(t_grid)
        om = _sample(omega2_fn, t)
        zeros = np.zeros_like(t)
        return cls(t, zeros, zeros.copy(), om, float(mass), omega2_fn)

    def to_csv(self) -> str:
        return _columns_csv({"t": self.t, "xcl": self.x, "vcl": self.v, "omega2": self.omega2})


def solve_classical(params: PhysicalParams, potential: Potential, x_a: float, p: float,
                    t_grid) -> ClassicalOrbit:
    """Noiseless, frictionless orbit from x(t_a) = x_a, M x'(t_a) = p (RK4)."""
    if potential.dim not in (None, 1):
        raise ValidationError("potential", "semiclassical solver is one-dimensional")
    t, dt = _uniform_grid(t_grid)
    M = params.mass

    def rhs(_, y):
        return np.array([y[1], -potential.grad_v(np.array([[y[0]]]))[0, 0] / M])

    y = _rk4(rhs, np.array([float(x_a), float(p) / M]), t, dt)
    x, v = y[:, 0], y[:, 1]
    hess = potential.hess_v(x[:, None])[:, 0, 0]
    spline = CubicHermiteSpline(t, x, v)

    def omega2_fn(tt):
        xx = np.atleast_1d(spline(tt))
        out = potential.hess_v(xx[:, None])[:, 0, 0] / M
        return out if np.ndim(tt) else float(out[0])

    return ClassicalOrbit(t, x, v, hess / M, M, omega2_fn, potential)


@dataclass(frozen=True)
class GreenFunction:
    t: np.ndarray
    xi1: np.ndarray
    dxi1: np.ndarray
    xi2: np.ndarray
    dxi2: np.ndarray
    omega2: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def wronskian(self) -> np.ndarray:
        return self.xi1 * self.dxi2 - self.dxi1 * self.xi2

    def at(self, i, j):
        """G(t_i, t_j) on grid indices (zero for i < j)."""
        i, j = np.asarray(i), np.asarray(j)
        g = self.xi1[i] * self.xi2[j] - self.xi2[i] * self.xi1[j]
        return np.where(i >= j, g, 0.0)

    def __call__(self, t, tp):
        """G(t, t') at arbitrary times, by Hermite interpolation of xi1, xi2."""
        s1 = CubicHermiteSpline(self.t, self.xi1, self.dxi1)
        s2 = CubicHermiteSpline(self.t, self.xi2, self.dxi2)
        t, tp = np.asarray(t, dtype=float), np.asarray(tp, dtype=float)
        g = s1(t) * s2(tp) - s2(t) * s1(tp)
        return np.where(t >= tp, g, 0.0)

    def source_kernel(self, i, j):
        """-dG/dt'(t_i, t_j): response at t_i to an impulse in x' at t_j."""
        i, j = np.asarray(i), np.asarray(j)
        k = self.xi2[i] * self.dxi1[j] - self.xi1[i] * self.dxi2[j]
        return np.where(i >= j, k, 0.0)

    def solve(self, forcing) -> np.ndarray:
        """Retarded solution of u'' + Omega^2 u = f with u(0) = u'(0) = 0."""
        f = np.asarray(forcing, dtype=float)
        i1 = cumulative_simpson(self.xi1 * f, dx=self.dt, initial=0.0)
        i2 = cumulative_simpson(self.xi2 * f, dx=self.dt, initial=0.0)
        return self.xi1 * i2 - self.xi2 * i1

    def to_csv(self) -> str:
        return _columns_csv({"t": self.t, "xi1": self.xi1, "xi2": self.xi2,
                             "wronskian": self.wronskian})


def _sample(fn, times):
    try:
        out = np.asarray(fn(times), dtype=float)
        if out.shape == times.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([fn(float(tt)) for tt in times], dtype=float)


def build_green(orbit: ClassicalOrbit) -> GreenFunction:
    """Integrate both homogeneous solutions with RK4 on the orbit grid."""
    t, dt = orbit.t, orbit.dt
    n = t.size
    w_grid = _sample(orbit.omega2_fn, t)
    w_mid = _sample(orbit.omega2_fn, t[:-1] + 0.5 * dt)
    out = np.empty((n, 4))
    out[0] = (0.0, 1.0, 1.0, 0.0)
    h, h2, h6 = dt, 0.5 * dt, dt / 6.0
    for col in (0, 2):
        q, v = out[0, col], out[0, col + 1]
        qs, vs = [q], [v]
        for k in range(n - 1):
            w0, wm, w1 = w_grid[k], w_mid[k], w_grid[k + 1]
            k1q, k1v = v, -w0 * q
            k2q, k2v = v + h2 * k1v, -wm * (q + h2 * k1q)
            k3q, k3v = v + h2 * k2v, -wm * (q + h2 * k2q)
            k4q, k4v = v + h * k3v, -w1 * (q + h * k3q)
            q = q + h6 * (k1q + 2 * k2q + 2 * k3q + k4q)
            v = v + h6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            qs.append(q)
            vs.append(v)
        out[:, col], out[:, col + 1] = qs, vs
    if not np.all(np.isfinite(out)):
        k = int(np.argmax(~np.all(np.isfinite(out), axis=1)))
        raise IntegrationError(f"homogeneous solution overflowed at t = {t[k]:g}", step=k)
    return GreenFunction(t, out[:, 0], out[:, 1], out[:, 2], out[:, 3], orbit.omega2)


def compute_Q(green: GreenFunction, noise: NoisePath, params: PhysicalParams) -> np.ndarray:
    """Noise response Q(t_k) = (1/M) sum_j K(t_k, t_{j+1}) deta_j.

    ``K = -dG/dt'`` comes from integrating ``int G eta' dt'`` by parts; the
    boundary terms vanish because G(t, t) = 0 and the noise starts at zero.
    The impulse of step j acts at the end of the step, as in the Langevin
    integrator. Evaluated in O(n) through the separable form of K.
    """
    if noise.dims != 1:
        raise ValidationError("noise", "semiclassical solver is one-dimensional")
    n = green.t.size - 1
    if noise.n < n:
        raise ValidationError("noise", f"path has {noise.n} steps, grid needs {n}")
    if not math.isclose(noise.dt, green.dt, rel_tol=1e-9):
        raise ValidationError("noise", "noise dt does not match the Green-function grid")
    dW = noise.increments[:n, 0]
    c1 = np.concatenate([[0.0], np.cumsum(green.dxi1[1:] * dW)])
    c2 = np.concatenate([[0.0], np.cumsum(green.dxi2[1:] * dW)])
    return (green.xi2 * c1 - green.xi1 * c2) / params.mass


@dataclass(frozen=True)
class DissipativeCorrection:
    """A(t), B(t) = A / x_cl (NaN where masked) and the first-order position."""

    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    mask: np.ndarray  # True where B is undefined (|x_cl| < eps * amplitude)
    damped: np.ndarray  # x_cl - gamma A


def compute_B(green: GreenFunction, orbit: ClassicalOrbit, params: PhysicalParams,
              homogeneous_coeffs: tuple[float, float] = (0.0, 0.0),
              eps: float = 1e-6) -> DissipativeCorrection:
    """Solve M A'' + V''(x_cl) A = V''(x_cl) x_cl' by retarded quadrature.

    ``homogeneous_coeffs = (c1, c2)`` adds ``c1 xi1 + c2 xi2``.
    """
    f = orbit.omega2 * orbit.v
    A = green.solve(f)
    c1, c2 = homogeneous_coeffs
    A = A + c1 * green.xi1 + c2 * green.xi2
    amp = orbit.amplitude
    mask = np.abs(orbit.x) <= eps * amp if amp > 0 else np.ones_like(orbit.x, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        B = np.where(mask, np.nan, A / np.where(mask, 1.0, orbit.x))
    if amp == 0 and np.all(A == 0):
        B = np.zeros_like(A)
        mask = np.zeros_like(mask)
    return DissipativeCorrection(orbit.t, A, B, mask, orbit.x - params.gamma * A)


def noise_scale(params: PhysicalParams, override: Optional[float] = None) -> float:
    """sqrt(T / T_H), or ``override`` when given (needed if c is unset)."""
    if override is not None:
        if override < 0 or not math.isfinite(override):
            raise ValidationError("scale", "must be finite and >= 0")
        return float(override)
    th = params.bohr_temperature
    if th is None:
        raise ValidationError("c", "Bohr temperature needs the speed of light; pass an explicit scale")
    return math.sqrt(params.temperature / th)


def rescale_noise(noise: NoisePath, scale: float) -> NoisePath:
    """Physical noise eta -> eta / s (zero path when s = 0)."""
    return noise.scaled(0.0 if scale == 0 else 1.0 / scale)


def _regularised_exponent(orbit: ClassicalOrbit, corr: DissipativeCorrection, band: float):
    amp = orbit.amplitude
    good = np.abs(orbit.x) > band * amp
    if amp == 0 or not np.any(good):
        return np.zeros_like(corr.A)
    return np.interp(orbit.t, orbit.t[good], corr.B[good])


def composite_solution(orbit: ClassicalOrbit, corr: DissipativeCorrection, Q, params: PhysicalParams,
                       scale: Optional[float] = None, band: float = 0.1) -> np.ndarray:
    """exp(-gamma B) [x_cl + s Q] without dividing by x_cl near its zeros.

    ``Q`` is the response to the rescaled noise ``eta / s``. B is replaced by
    a regular exponent ``B_r`` (B where |x_cl| > band * amplitude, linear
    interpolation across the zero crossings) and the remainder is kept to
    first order:

        x = exp(-gamma B_r) [x_cl - gamma (A - x_cl B_r) + s Q]

    which equals the exact ansatz wherever B_r = B.
    """
    s = noise_scale(params, scale)
    g = params.gamma
    Br = _regularised_exponent(orbit, corr, band) if g else np.zeros_like(corr.A)
    Q = np.asarray(Q, dtype=float)
    return np.exp(-g * Br) * (orbit.x - g * (corr.A - orbit.x * Br) + s * Q)


@dataclass(frozen=True)
class GrowthRate:
    rate: float
    stderr: float
    ci: tuple[float, float]
    times: np.ndarray
    envelope: np.ndarray
    degenerate: bool = False


def green_envelope(green: GreenFunction, n_times: int = 400, max_sources: int = 4000):
    """sup over t' <= t of |G(t, t')| on a subsample of times."""
    n = green.t.size
    rows = np.unique(np.linspace(0, n - 1, min(n_times, n)).astype(int))
    stride = max(1, n // max_sources)
    cols = np.arange(0, n, stride)
    env = np.empty(rows.size)
    for r, i in enumerate(rows):
        j = cols[cols <= i]
        env[r] = np.max(np.abs(green.xi1[i] * green.xi2[j] - green.xi2[i] * green.xi1[j]))
    return green.t[rows], env


def growth_rate(green: GreenFunction, period: Optional[float] = None,
                fit_from: float = 0.5) -> GrowthRate:
    """Exponential growth rate of sup_t' |G(t, t')|.

    The envelope is reduced to its maximum over windows of one characteristic
    period (``span / 20`` when the mean of Omega^2 is not positive) and
    ``log`` of those maxima is fitted by least squares over the final
    ``1 - fit_from`` fraction of the windows, never fewer than three.
    """
    t, env = green_envelope(green)
    span = t[-1] - t[0]
    if period is None:
        w2 = float(np.mean(green.omega2))
        period = 2 * math.pi / math.sqrt(w2) if w2 > 0 else span / 20
    n_win = int(span // period)
    if n_win < 4:
        raise ValidationError("t_grid", "grid too short for a growth-rate fit (need >= 4 periods)")
    edges = t[0] + period * np.arange(n_win + 1)
    first = min(int(fit_from * n_win), n_win - 3)
    centres, peaks = [], []
    for a, b in zip(edges[first:-1], edges[first + 1:]):
        sel = (t >= a) & (t < b)
        if np.any(sel):
            k = np.argmax(env[sel])
            centres.append(t[sel][k])
            peaks.append(env[sel][k])
    centres, peaks = np.array(centres), np.array(peaks)
    if centres.size < 3 or np.any(peaks <= 0) or not np.all(np.isfinite(peaks)):
        return GrowthRate(math.nan, math.inf, (-math.inf, math.inf), t, env, True)
    y = np.log(peaks)
    X = np.vstack([centres, np.ones_like(centres)]).T
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    dof = max(centres.size - 2, 1)
    resid = y - X @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    se = math.sqrt(max(cov[0, 0], 0.0))
    rate = float(coef[0])
    return GrowthRate(rate, se, (rate - 1.96 * se, rate + 1.96 * se), t, env)


def _columns_csv(cols: dict, meta: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write("# meta: " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    names = list(cols)
    buf.write(",".join(names) + "\n")
    for row in zip(*(cols[k] for k in names)):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def correction_csv(corr: DissipativeCorrection, Q) -> str:
    return _columns_csv({"t": corr.t, "A": corr.A, "B_masked": corr.B, "Q": Q})
