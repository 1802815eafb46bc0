"""Stochastic equation of motion with radiation-reaction friction.

The integrated state is ``(x, p)`` where ``p = p0 - int grad V dt`` is the
smooth momentum variable. With the third-derivative friction reduced to
first order in gamma the dynamics read

    M dx = (p - gamma grad V(x)) dt + deta
    dp   = -grad V(x) dt

which is the second-order equation ``M x'' + gamma Hess V x' + grad V = eta'``
with the initial data ``x(t_a) = x_a``, ``M x' - M gamma x'' = p`` at
``t_a``. ``deta`` are the noise impulses of a :class:`~photonbath.noise.NoisePath`.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np
from joblib import Parallel, delayed

from .core import PhaseState, PhysicalParams, Potential, Trajectory, ValidationError
from .noise import NoisePath, SpectrumSpec, make_path, rng_for

SCHEMES = ("euler", "split", "third_order")
_SAMPLER_STREAM_OFFSET = 1 << 62

# 4th-order triple-jump composition weights
_YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSHIDA_W0 = 1.0 - 2.0 * _YOSHIDA_W1


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: Optional[int] = None, trajectory: Optional[int] = None):
        where = []
        if trajectory is not None:
            where.append(f"trajectory {trajectory}")
        if step is not None:
            where.append(f"step {step}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.step = step
        self.trajectory = trajectory


class RunawayError(IntegrationError):
    pass


@dataclass(frozen=True)
class IntegratorSpec:
    """Time stepping configuration.

    scheme
        ``"euler"`` (Euler-Maruyama), ``"split"`` (symmetric splitting of the
        deterministic flow followed by the exact additive noise impulse) or
        ``"third_order"``: the unreduced equation with state (x, v, p), kept
        only to exhibit runaway solutions.
    splitting_order
        2 (Strang) or 4 (triple-jump composition); ``"split"`` only.
    runaway_threshold
        Abort ``"third_order"`` runs once ``|x''|`` exceeds this value.
    """

    dt: float
    n_steps: int
    scheme: str = "split"
    splitting_order: int = 2
    runaway_threshold: float = 1e6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError("scheme", f"expected one of {SCHEMES}, got {self.scheme!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError("dt", "must be finite and > 0")
        if int(self.n_steps) < 1:
            raise ValidationError("n_steps", "must be >= 1")
        if self.splitting_order not in (2, 4):
            raise ValidationError("splitting_order", "must be 2 or 4")
        if not self.runaway_threshold > 0:
            raise ValidationError("runaway_threshold", "must be > 0")

    @property
    def order_reduction(self) -> bool:
        return self.scheme != "third_order"

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt


# ---------------------------------------------------------------------------
# batched steppers; arrays have shape (batch, dim)


def _strang(x, p, acc, h, grad, M, gamma):
    if gamma:
        # friction flow M x' = -gamma grad V(x), explicit midpoint
        xm = x - 0.25 * h * gamma * grad(x) / M
        x = x - 0.5 * h * gamma * grad(xm) / M
    g = grad(x)
    p = p - 0.5 * h * g
    acc = acc + 0.5 * h * g
    x = x + h * p / M
    g = grad(x)
    p = p - 0.5 * h * g
    acc = acc + 0.5 * h * g
    if gamma:
        xm = x - 0.25 * h * gamma * grad(x) / M
        x = x - 0.5 * h * gamma * grad(xm) / M
    return x, p, acc


def _integrate_batch(params: PhysicalParams, potential: Potential, x0, p0, deta,
                     spec: IntegratorSpec, record_every: int = 1, keep_acc: bool = True):
    """Integrate a batch; returns recorded x, p, acc and first failing step.

    ``deta`` has shape (batch, n_steps, dim). Failed trajectories are
    reported through ``fail_step`` (-1 when healthy) and ``fail_kind``.
    """
    M, gamma = params.mass, params.gamma
    grad = potential.grad_v
    h = spec.dt
    n = int(spec.n_steps)
    B, d = x0.shape
    n_rec = n // record_every + 1
    xs = np.empty((B, n_rec, d))
    ps = np.empty((B, n_rec, d))
    accs = np.empty((B, n_rec, d)) if keep_acc else None
    x, p = x0.astype(float).copy(), p0.astype(float).copy()
    acc = np.zeros_like(x)
    xs[:, 0], ps[:, 0] = x, p
    if keep_acc:
        accs[:, 0] = acc
    fail_step = np.full(B, -1)
    fail_kind = np.full(B, "", dtype=object)

    if spec.scheme == "third_order":
        if gamma <= 0:
            raise ValidationError("gamma", "third_order scheme requires gamma > 0")
        v = (p - gamma * grad(x)) / M
    sub = ((_YOSHIDA_W1, _YOSHIDA_W0, _YOSHIDA_W1) if spec.splitting_order == 4 else (1.0,))

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            dW = deta[:, k]
            if spec.scheme == "split":
                for c in sub:
                    x, p, acc = _strang(x, p, acc, c * h, grad, M, gamma)
                x = x + dW / M
            elif spec.scheme == "euler":
                g = grad(x)
                x = x + h * (p - gamma * g) / M + dW / M
                p = p - h * g
                acc = acc + h * g
            else:
                a = (M * v - p) / (M * gamma)
                big = np.any(np.abs(a) > spec.runaway_threshold, axis=1) & (fail_step < 0)
                if np.any(big):
                    fail_step[big] = k
                    fail_kind[big] = "runaway"
                g = grad(x)
                x = x + h * v
                v = v + h * a - dW / (M * gamma)
                p = p - h * g
                acc = acc + h * g
            if (k + 1) % record_every == 0:
                r = (k + 1) // record_every
                xs[:, r], ps[:, r] = x, p
                if keep_acc:
                    accs[:, r] = acc
            if (k & 63) == 63 or k == n - 1:
                bad = ~(np.all(np.isfinite(x), axis=1) & np.all(np.isfinite(p), axis=1))
                new = bad & (fail_step < 0)
                if np.any(new):
                    fail_step[new] = k
                    fail_kind[new] = "non-finite state"
                if spec.scheme == "third_order" and np.all(fail_step >= 0):
                    break
    return xs, ps, accs, fail_step, fail_kind


def _check_noise(noise: NoisePath, spec: IntegratorSpec, dim: int):
    if noise.n < spec.n_steps:
        raise ValidationError("noise", f"path has {noise.n} steps, integrator needs {spec.n_steps}")
    if not math.isclose(noise.dt, spec.dt, rel_tol=1e-12):
        raise ValidationError("noise", f"path dt {noise.dt} differs from integrator dt {spec.dt}")
    if noise.dims != dim:
        raise ValidationError("noise", f"path has {noise.dims} components, state has {dim}")


def integrate(params: PhysicalParams, potential: Potential, initial: PhaseState,
              noise: Optional[NoisePath], spec: IntegratorSpec, t0: float = 0.0) -> Trajectory:
    """Single trajectory. ``noise=None`` integrates the noiseless equation."""
    d = initial.dim
    if potential.dim is not None and potential.dim != d:
        raise ValidationError("potential", f"dimension {potential.dim} does not match state ({d})")
    if noise is None:
        deta = np.zeros((1, spec.n_steps, d))
    else:
        _check_noise(noise, spec, d)
        deta = noise.increments[None, : spec.n_steps]
    xs, ps, accs, fail, kind = _integrate_batch(
        params, potential, initial.x[None], initial.p[None], deta, spec
    )
    if fail[0] >= 0:
        cls = RunawayError if kind[0] == "runaway" else IntegrationError
        msg = "runaway detected" if kind[0] == "runaway" else "integration produced a non-finite state"
        raise cls(msg, step=int(fail[0]))
    return Trajectory(t0, spec.dt, xs[0], ps[0], accs[0])


def energy(params: PhysicalParams, potential: Potential, x, p):
    x = np.atleast_2d(x)
    p = np.atleast_2d(p)
    return 0.5 * np.sum(p * p, axis=-1) / params.mass + potential.v(x)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class _Stats:
    """Per-time running moments of z = (x, p) across trajectories."""

    n: int
    mean: np.ndarray  # (T, m)
    m2: np.ndarray  # (T, m, m) co-moment sums
    m3: np.ndarray  # (T, m) diagonal third central sums
    m4: np.ndarray  # (T, m) diagonal fourth central sums

    @classmethod
    def from_samples(cls, z):
        # z: (B, T, m)
        n = z.shape[0]
        mean = z.mean(axis=0)
        c = z - mean
        m2 = np.einsum("btm,btk->tmk", c, c)
        return cls(n, mean, m2, np.sum(c**3, axis=0), np.sum(c**4, axis=0))

    def merge(self, other: "_Stats") -> "_Stats":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        mean = self.mean + delta * (nb / n)
        m2 = self.m2 + other.m2 + np.einsum("tm,tk->tmk", delta, delta) * (na * nb / n)
        dd = np.einsum("tmm->tm", self.m2), np.einsum("tmm->tm", other.m2)
        m3 = (self.m3 + other.m3 + delta**3 * na * nb * (na - nb) / n**2
              + 3.0 * delta * (na * dd[1] - nb * dd[0]) / n)
        m4 = (self.m4 + other.m4
              + delta**4 * na * nb * (na * na - na * nb + nb * nb) / n**3
              + 6.0 * delta**2 * (na * na * dd[1] + nb * nb * dd[0]) / n**2
              + 4.0 * delta * (na * other.m3 - nb * self.m3) / n)
        return _Stats(n, mean, m2, m3, m4)


@dataclass(frozen=True)
class EnsembleMoments:
    """Per-time mean and covariance of (x, p) with standard errors.

    ``cov`` is indexed ``[t, i, j]`` over the stacked vector ``(x_1..x_d,
    p_1..p_d)``. Variances use the unbiased normalisation (0 for a single
    trajectory).
    """

    t: np.ndarray
    n: int
    dim: int
    mean: np.ndarray
    cov: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray
    failures: tuple = ()
    meta: dict = field(default_factory=dict)
    final_x: Optional[np.ndarray] = None
    final_p: Optional[np.ndarray] = None

    @classmethod
    def _from_stats(cls, t, dim, st: _Stats, failures=(), meta=None):
        n = st.n
        ddof = 1 if n > 1 else 0
        cov = st.m2 / max(n - ddof, 1)
        var_pop = np.einsum("tmm->tm", st.m2) / n
        m4 = st.m4 / n
        var = np.einsum("tmm->tm", cov)
        se_mean = np.sqrt(var / n)
        se_var = np.sqrt(np.maximum(m4 - var_pop**2, 0.0) / n)
        return cls(t, n, dim, st.mean, cov, se_mean, se_var, tuple(failures), dict(meta or {}))

    def _diag(self, i):
        return self.cov[:, i, i]

    @property
    def mean_x(self):
        return self.mean[:, 0]

    @property
    def mean_p(self):
        return self.mean[:, self.dim]

    @property
    def var_x(self):
        return self._diag(0)

    @property
    def var_p(self):
        return self._diag(self.dim)

    @property
    def cov_xp(self):
        return self.cov[:, 0, self.dim]

    @property
    def se_var_x(self):
        return self.se_var[:, 0]

    @property
    def se_var_p(self):
        return self.se_var[:, self.dim]

    def to_csv(self, meta: Optional[dict] = None) -> str:
        info = dict(self.meta)
        info.update(meta or {})
        buf = io.StringIO()
        buf.write("# meta: " + " ".join(f"{k}={v}" for k, v in info.items()) + "\n")
        d = self.dim
        if d == 1:
            buf.write("t,mean_x,mean_p,var_x,var_p,cov_xp,se_var_x\n")
            cols = [self.t, self.mean_x, self.mean_p, self.var_x, self.var_p, self.cov_xp,
                    self.se_var_x]
        else:
            names = ["t"]
            cols = [self.t]
            for i in range(d):
                names += [f"mean_x_{i + 1}", f"mean_p_{i + 1}", f"var_x_{i + 1}",
                          f"var_p_{i + 1}", f"cov_xp_{i + 1}", f"se_var_x_{i + 1}"]
                cols += [self.mean[:, i], self.mean[:, d + i], self.cov[:, i, i],
                         self.cov[:, d + i, d + i], self.cov[:, i, d + i], self.se_var[:, i]]
            buf.write(",".join(names) + "\n")
        for row in zip(*cols):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


InitialSampler = Union[PhaseState, Callable[[np.random.Generator], tuple]]


def _draw_initial(initial_sampler: InitialSampler, base_seed: int, idx: np.ndarray):
    if isinstance(initial_sampler, PhaseState):
        B = idx.size
        return (np.broadcast_to(initial_sampler.x, (B, initial_sampler.dim)).copy(),
                np.broadcast_to(initial_sampler.p, (B, initial_sampler.dim)).copy())
    xs, ps = [], []
    for k in idx:
        x, p = initial_sampler(rng_for(base_seed, _SAMPLER_STREAM_OFFSET + int(k)))
        xs.append(np.atleast_1d(np.asarray(x, dtype=float)))
        ps.append(np.atleast_1d(np.asarray(p, dtype=float)))
    return np.array(xs), np.array(ps)


def _run_chunk(params, potential, initial_sampler, noise_spec, spec, base_seed, lo, hi,
               dim, record_every, retain, keep_final=False):
    idx = np.arange(lo, hi)
    x0, p0 = _draw_initial(initial_sampler, base_seed, idx)
    if noise_spec is None or noise_spec.params.noise_strength == 0:
        deta = np.zeros((idx.size, spec.n_steps, dim))
    else:
        deta = np.stack([
            make_path(noise_spec, spec.n_steps, spec.dt, dim, seed=base_seed, stream=int(k)).increments
            for k in idx
        ])
    xs, ps, accs, fail, kind = _integrate_batch(params, potential, x0, p0, deta, spec,
                                                record_every, keep_acc=retain > lo)
    ok = fail < 0
    failures = [(int(lo + i), int(fail[i]), str(kind[i])) for i in np.flatnonzero(~ok)]
    z = np.concatenate([xs[ok], ps[ok]], axis=2)
    stats = _Stats.from_samples(z) if z.shape[0] else None
    final = (xs[ok, -1], ps[ok, -1]) if keep_final else None
    kept = []
    for i in range(min(retain - lo, hi - lo) if retain > lo else 0):
        if ok[i]:
            kept.append((int(lo + i), xs[i], ps[i], accs[i]))
    return stats, failures, kept, final


def run_ensemble(params: PhysicalParams, potential: Potential, initial_sampler: InitialSampler,
                 noise_spec: Optional[SpectrumSpec], spec: IntegratorSpec, n_traj: int,
                 base_seed: int = 0, *, workers: int = 1, chunk_size: int = 1024,
                 record_every: int = 1, retain: int = 0, fail_fast: bool = True,
                 dim: Optional[int] = None, t0: float = 0.0, keep_final: bool = False):
    """Monte Carlo ensemble of independent trajectories.

    Trajectory ``k`` draws its noise from stream ``k`` of ``base_seed`` and its
    initial state (when ``initial_sampler`` is a callable ``rng -> (x, p)``)
    from a separate stream, so the result does not depend on ``workers``.
    Chunks are reduced in index order with pairwise moment merging. Friction
    comes from ``params``, the noise strength from ``noise_spec.params``.

    Returns ``(moments, trajectories)`` where ``trajectories`` holds the first
    ``retain`` successful trajectories. ``keep_final`` stores the final
    phase-space samples on the moments object.
    """
    n_traj = int(n_traj)
    if n_traj < 1:
        raise ValidationError("n_traj", "must be >= 1")
    if int(workers) < 1:
        raise ValidationError("workers", "must be >= 1")
    if record_every < 1 or spec.n_steps % record_every:
        raise ValidationError("record_every", "must divide n_steps")
    if dim is None:
        if isinstance(initial_sampler, PhaseState):
            dim = initial_sampler.dim
        else:
            dim = np.atleast_1d(initial_sampler(rng_for(base_seed, _SAMPLER_STREAM_OFFSET))[0]).size
    bounds = [(lo, min(lo + chunk_size, n_traj)) for lo in range(0, n_traj, chunk_size)]
    job = delayed(_run_chunk)
    tasks = (job(params, potential, initial_sampler, noise_spec, spec, base_seed, lo, hi, dim,
                 record_every, retain, keep_final) for lo, hi in bounds)
    if workers == 1 or len(bounds) == 1:
        results = [t[0](*t[1], **t[2]) for t in tasks]
    else:
        results = Parallel(n_jobs=int(workers))(tasks)

    total = None
    failures, kept, finals = [], [], []
    for stats, fails, trajs, final in results:
        failures.extend(fails)
        kept.extend(trajs)
        if final is not None:
            finals.append(final)
        if stats is not None:
            total = stats if total is None else total.merge(stats)
    if failures and fail_fast:
        k, step, kind = failures[0]
        cls = RunawayError if kind == "runaway" else IntegrationError
        raise cls(f"{kind} in ensemble member", step=step, trajectory=k)
    if total is None:
        raise IntegrationError("every trajectory in the ensemble failed")
    t = t0 + spec.dt * record_every * np.arange(spec.n_steps // record_every + 1)
    meta = {"seed": base_seed, "dt": repr(spec.dt), "n_traj": n_traj, "scheme": spec.scheme}
    moments = EnsembleMoments._from_stats(t, dim, total, failures, meta)
    if keep_final:
        moments = replace(moments, final_x=np.concatenate([f[0] for f in finals]),
                          final_p=np.concatenate([f[1] for f in finals]))
    trajectories = [
        Trajectory(t0, spec.dt * record_every, x, p, acc if record_every == 1 else None)
        for _, x, p, acc in kept
    ]
    return moments, trajectories


def trajectory_to_csv(traj: Trajectory, meta: Optional[dict] = None) -> str:
    d = traj.dim
    buf = io.StringIO()
    if meta:
        buf.write("# meta: " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    cols = (["t"] + [f"x_{i + 1}" for i in range(d)] + [f"p_{i + 1}" for i in range(d)]
            + [f"intgradv_{i + 1}" for i in range(d)])
    buf.write(",".join(cols) + "\n")
    acc = traj.accumulated_grad_v if traj.accumulated_grad_v is not None else np.full_like(traj.x, np.nan)
    for t, x, p, a in zip(traj.times, traj.x, traj.p, acc):
        buf.write(",".join(repr(float(v)) for v in (t, *x, *p, *a)) + "\n")
    return buf.getvalue()
