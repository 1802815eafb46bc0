"""Wigner-function transport by noise averaging.

Two estimators are provided.

``evaluate_transport`` implements the noise average literally: starting a
Langevin trajectory at the query point ``(x, p)`` it returns the mean of
``W0(x(t), p - int grad V dt')``. Read as a map on phase-space densities this
evaluates the initial function along characteristics run *forward* from the
query point, i.e. the transport looks backward in time (tag
``BACKWARD_ARGUMENT``). For a free packet it moves the centre to
``xbar - p t / M``.

``evolve_ensemble_forward`` samples the initial function and pushes the
samples forward in time, which gives the physically forward-evolved
ensemble. The two agree after reversing momenta (``momentum_reversed``) for
time-reversal invariant dynamics, which the test-suite checks.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import curve_fit

from .core import PhaseState, PhysicalParams, Potential, ValidationError
from .langevin import EnsembleMoments, IntegrationError, IntegratorSpec, _integrate_batch, run_ensemble
from .noise import SpectrumSpec, make_path

BACKWARD_ARGUMENT = "backward-argument"
FORWARD_SAMPLES = "forward-samples"


@dataclass(frozen=True)
class WignerGaussian:
    """Minimum-uncertainty packet

    W(x, p) = exp[-(p - k)^2 sigma / hbar^2 - (x - xbar)^2 / sigma] / (pi hbar)
    """

    xbar: float
    k: float
    sigma: float
    hbar: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma", "must be > 0")
        if not self.hbar > 0:
            raise ValidationError("hbar", "must be > 0")

    def __call__(self, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if x.ndim and x.shape[-1:] == (1,) and p.shape[-1:] == (1,):
            x, p = x[..., 0], p[..., 0]
        expo = -((p - self.k) ** 2) * self.sigma / self.hbar**2 - (x - self.xbar) ** 2 / self.sigma
        return np.exp(expo) / (math.pi * self.hbar)

    @property
    def var_x(self) -> float:
        return self.sigma / 2.0

    @property
    def var_p(self) -> float:
        return self.hbar**2 / (2.0 * self.sigma)

    def sample(self, rng: np.random.Generator):
        """One exact draw (x, p) from the packet viewed as a density."""
        z = rng.standard_normal(2)
        return (np.array([self.xbar + math.sqrt(self.var_x) * z[0]]),
                np.array([self.k + math.sqrt(self.var_p) * z[1]]))

    def momentum_reversed(self) -> "WignerGaussian":
        return WignerGaussian(self.xbar, -self.k, self.sigma, self.hbar)


def gaussian_packet(xbar: float, k: float, sigma: float, hbar: float = 1.0) -> WignerGaussian:
    return WignerGaussian(float(xbar), float(k), float(sigma), float(hbar))


@dataclass(frozen=True)
class WignerEstimate:
    x: np.ndarray
    p: np.ndarray
    t: float
    value: np.ndarray
    stderr: np.ndarray
    n_samples: int
    seed: int = 0
    convention: str = BACKWARD_ARGUMENT

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# meta: t={self.t!r} n_samples={self.n_samples} seed={self.seed} "
                  f"convention={self.convention}\n")
        buf.write("x,p,value,stderr\n")
        for row in zip(self.x.ravel(), self.p.ravel(), self.value.ravel(), self.stderr.ravel()):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def _as_points(x, p):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    x, p = np.broadcast_arrays(x, p)
    return x, p


def evaluate_transport(W0: Callable, query, t: float, params: PhysicalParams, potential: Potential,
                       noise_spec: Optional[SpectrumSpec], n_samples: int, seed: int = 0, *,
                       dt: Optional[float] = None, scheme: str = "split", splitting_order: int = 2,
                       t_a: float = 0.0, chunk_points: int = 200_000,
                       workers: int = 1) -> WignerEstimate:
    """Monte Carlo estimate of ``<W0(x(t), p - int grad V dt')>`` over the noise.

    ``query`` is ``(x, p)``; both may be arrays of matching shape (1-D
    phase space). Every query point sees the same noise realisations, so
    profiles over a grid are smooth and their errors correlated. ``dt``
    defaults to ``min(0.01, t - t_a)``.
    """
    x_q, p_q = _as_points(*query)
    shape = x_q.shape
    xq, pq = x_q.ravel(), p_q.ravel()
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValidationError("n_samples", "must be >= 1")
    tau = float(t) - t_a
    if tau < 0:
        raise ValidationError("t", "must be >= t_a")
    if tau == 0:
        val = np.asarray(W0(xq[:, None], pq[:, None]), dtype=float).reshape(shape)
        return WignerEstimate(x_q, p_q, float(t), val, np.zeros(shape), n_samples, seed)

    if dt is None:
        dt = min(0.01, tau)
    n_steps = max(1, int(round(tau / dt)))
    spec = IntegratorSpec(tau / n_steps, n_steps, scheme, splitting_order)
    noisy = noise_spec is not None and noise_spec.params.noise_strength > 0
    nq = xq.size
    per_chunk = max(1, chunk_points // nq) if noisy else 1
    n_eff = n_samples if noisy else 1
    bounds = [(lo, min(lo + per_chunk, n_eff)) for lo in range(0, n_eff, per_chunk)]
    args = (W0, xq, pq, params, potential, noise_spec if noisy else None, spec, seed)
    if workers == 1 or len(bounds) == 1:
        parts = [_transport_chunk(*args, lo, hi) for lo, hi in bounds]
    else:
        parts = Parallel(n_jobs=int(workers))(delayed(_transport_chunk)(*args, lo, hi)
                                              for lo, hi in bounds)
    total = np.zeros(nq)
    total_sq = np.zeros(nq)
    failed = 0
    for s1, s2, nbad in parts:
        total += s1
        total_sq += s2
        failed += nbad
    if failed:
        raise IntegrationError(f"{failed} transported samples failed to integrate")
    mean = total / n_eff
    if n_eff > 1:
        var = np.maximum(total_sq / n_eff - mean**2, 0.0) * n_eff / (n_eff - 1)
        se = np.sqrt(var / n_eff)
    else:
        se = np.zeros(nq)
    return WignerEstimate(x_q, p_q, float(t), mean.reshape(shape), se.reshape(shape),
                          n_samples, seed)


def _transport_chunk(W0, xq, pq, params, potential, noise_spec, spec, seed, lo, hi):
    m, nq, n_steps = hi - lo, xq.size, spec.n_steps
    if noise_spec is not None:
        paths = np.stack([make_path(noise_spec, n_steps, spec.dt, 1, seed, s).increments
                          for s in range(lo, hi)])  # (m, n, 1)
        deta = np.repeat(paths, nq, axis=0)
    else:
        deta = np.zeros((m * nq, n_steps, 1))
    x0 = np.tile(xq, m)[:, None]
    p0 = np.tile(pq, m)[:, None]
    xs, ps, _, fail, _ = _integrate_batch(params, potential, x0, p0, deta, spec,
                                          record_every=n_steps, keep_acc=False)
    vals = np.asarray(W0(xs[:, -1], ps[:, -1]), dtype=float).reshape(m, nq)
    bad = (fail >= 0).reshape(m, nq)
    vals = np.where(bad, 0.0, vals)
    return vals.sum(axis=0), (vals * vals).sum(axis=0), int(bad.sum())


def evolve_ensemble_forward(W0, params: PhysicalParams, potential: Potential,
                            noise_spec: Optional[SpectrumSpec], spec: IntegratorSpec, n_traj: int,
                            seed: int = 0, *, workers: int = 1, record_every: int = 1,
                            keep_final: bool = False, t_a: float = 0.0) -> EnsembleMoments:
    """Sample ``W0`` (anything with ``sample(rng) -> (x, p)``, or a
    PhaseState for point data) and evolve the samples under the Langevin flow."""
    sampler = W0 if isinstance(W0, PhaseState) else W0.sample
    moments, _ = run_ensemble(params, potential, sampler, noise_spec, spec, n_traj, seed,
                              workers=workers, record_every=record_every, keep_final=keep_final,
                              t0=t_a)
    return moments


@dataclass(frozen=True)
class GridDensity:
    x_centres: np.ndarray
    p_centres: np.ndarray
    value: np.ndarray  # (nx, np)
    stderr: np.ndarray


def reconstruct_grid(x, p, x_edges, p_edges) -> GridDensity:
    """Histogram density of forward samples with Poisson standard errors."""
    x = np.asarray(x, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    counts, xe, pe = np.histogram2d(x, p, bins=[x_edges, p_edges])
    area = np.outer(np.diff(xe), np.diff(pe))
    n = x.size
    return GridDensity(0.5 * (xe[1:] + xe[:-1]), 0.5 * (pe[1:] + pe[:-1]),
                       counts / (n * area), np.sqrt(counts) / (n * area))


def momentum_width(moments: EnsembleMoments) -> np.ndarray:
    return moments.var_p


def oracle_momentum_width(moments: EnsembleMoments, params: PhysicalParams, omega: float):
    """M^2 omega^4 int_{t_a}^t Var x(s) ds as a momentum-width estimate.

    The relation is not dimensionally consistent (one time integration too
    few on the right); it is reported for comparison only. Returns the
    series and its ratio to the Monte Carlo momentum variance.
    """
    integ = cumulative_trapezoid(moments.var_x, moments.t, initial=0.0)
    rel = params.mass**2 * omega**4 * integ
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(moments.var_p > 0, rel / moments.var_p, np.nan)
    return rel, ratio


def _gauss(x, amp, centre, sigma):
    return amp * np.exp(-((x - centre) ** 2) / sigma)


def fit_packet(x, values, p0=None):
    """Least-squares fit of ``amp exp(-(x - centre)^2 / sigma)``.

    Returns ``(amp, centre, sigma)`` and their standard errors.
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if p0 is None:
        i = int(np.argmax(values))
        w = np.sum(values * (x - x[i]) ** 2) / max(np.sum(values), 1e-300)
        p0 = (values[i], x[i], max(2 * w, 1e-6))
    popt, pcov = curve_fit(_gauss, x, values, p0=p0, maxfev=20000)
    return popt, np.sqrt(np.diag(pcov))
