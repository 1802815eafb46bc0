"""Physical parameters, potentials and phase-space containers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

DEFAULT_ALPHA = 1.0 / 137.036


class ValidationError(ValueError):
    """Raised when an input violates a documented constraint.

    ``field`` names the offending parameter so the CLI can report it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class DomainError(ValueError):
    """Evaluation point outside the domain of a potential."""


def _check_finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(name, f"expected a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ValidationError(name, "must be finite")
    return value


@dataclass(frozen=True)
class PhysicalParams:
    """Particle and bath constants.

    ``noise_strength`` (w = 2 M gamma kB T) and ``bohr_temperature``
    (alpha^2 M c^2 / kB) are derived on access and never stored.
    """

    mass: float
    gamma: float
    temperature: float
    hbar: float = 1.0
    kb: float = 1.0
    alpha: float = DEFAULT_ALPHA
    c: Optional[float] = None

    def __post_init__(self):
        for name in ("mass", "gamma", "temperature", "hbar", "kb", "alpha"):
            object.__setattr__(self, name, _check_finite(name, getattr(self, name)))
        for name in ("mass", "hbar", "kb"):
            if getattr(self, name) <= 0:
                raise ValidationError(name, "must be > 0")
        for name in ("gamma", "temperature"):
            if getattr(self, name) < 0:
                raise ValidationError(name, "must be >= 0")
        if self.c is not None:
            object.__setattr__(self, "c", _check_finite("c", self.c))
            if self.c <= 0:
                raise ValidationError("c", "must be > 0")

    @property
    def noise_strength(self) -> float:
        return 2.0 * self.mass * self.gamma * self.kb * self.temperature

    @property
    def bohr_temperature(self) -> Optional[float]:
        if self.c is None:
            return None
        return self.alpha**2 * self.mass * self.c**2 / self.kb

    @property
    def thermal_energy(self) -> float:
        return self.kb * self.temperature


def make_params(M, gamma, T, hbar=1.0, kB=1.0, alpha=None, c=None) -> PhysicalParams:
    return PhysicalParams(
        mass=M,
        gamma=gamma,
        temperature=T,
        hbar=hbar,
        kb=kB,
        alpha=DEFAULT_ALPHA if alpha is None else alpha,
        c=c,
    )


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Potential:
    """A potential given as value, gradient and Hessian callables.

    Each callable takes positions of shape ``(..., dim)`` and returns
    ``(...)``, ``(..., dim)`` and ``(..., dim, dim)`` arrays respectively.
    """

    v: Callable[[np.ndarray], np.ndarray]
    grad_v: Callable[[np.ndarray], np.ndarray]
    hess_v: Callable[[np.ndarray], np.ndarray]
    dim: Optional[int] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    length_scale: float = 1.0

    def __call__(self, x):
        return potential_eval(self, x)


def potential_eval(P: Potential, x):
    """Return ``(v, grad, hess)`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if not np.all(np.isfinite(x)):
        raise ValidationError("x", "must be finite")
    if P.dim is not None and x.shape[-1] != P.dim:
        raise ValidationError("x", f"dimension {x.shape[-1]} does not match potential ({P.dim})")
    return P.v(x), P.grad_v(x), P.hess_v(x)


def _eye_like(x):
    d = x.shape[-1]
    return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d))


def Free(dim: Optional[int] = None) -> Potential:
    return Potential(
        v=lambda x: np.zeros(x.shape[:-1]),
        grad_v=lambda x: np.zeros_like(x),
        hess_v=lambda x: np.zeros(x.shape + (x.shape[-1],)),
        dim=dim,
        name="free",
    )


def Harmonic(omega: float, mass: float = 1.0, dim: Optional[int] = None) -> Potential:
    """V(x) = M omega^2 |x|^2 / 2."""
    k = mass * omega**2
    return Potential(
        v=lambda x: 0.5 * k * np.sum(x * x, axis=-1),
        grad_v=lambda x: k * x,
        hess_v=lambda x: k * _eye_like(x).copy(),
        dim=dim,
        name="harmonic",
        params={"omega": omega, "mass": mass},
        length_scale=1.0 if omega == 0 else 1.0 / math.sqrt(abs(omega)),
    )


def Quartic(a: float, b: float, dim: Optional[int] = None) -> Potential:
    """V(x) = a |x|^2 / 2 + b |x|^4 / 4 (double well for a < 0 < b)."""

    def v(x):
        r2 = np.sum(x * x, axis=-1)
        return 0.5 * a * r2 + 0.25 * b * r2**2

    def grad(x):
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return (a + b * r2) * x

    def hess(x):
        r2 = np.sum(x * x, axis=-1)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return (a + b * r2) * _eye_like(x) + 2.0 * b * outer

    return Potential(v, grad, hess, dim=dim, name="quartic", params={"a": a, "b": b})


def Tabulated(grid, values) -> Potential:
    """1-D potential from samples, interpolated by a natural cubic spline.

    Gradient and Hessian are the analytic derivatives of the spline, so the
    triple is self-consistent. Positions outside ``grid`` raise DomainError.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.ndim != 1 or grid.shape != values.shape or grid.size < 4:
        raise ValidationError("grid", "need matching 1-D grid/values with at least 4 points")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("grid", "must be strictly increasing")
    spline = CubicSpline(grid, values, bc_type="natural")
    d1, d2 = spline.derivative(1), spline.derivative(2)
    lo, hi = grid[0], grid[-1]

    def _check(x):
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"position outside tabulated range [{lo}, {hi}]")
        return x[..., 0]

    return Potential(
        v=lambda x: spline(_check(x)),
        grad_v=lambda x: d1(_check(x))[..., None],
        hess_v=lambda x: d2(_check(x))[..., None, None],
        dim=1,
        name="tabulated",
        length_scale=float(np.min(np.diff(grid))),
    )


# ---------------------------------------------------------------------------
# phase-space containers


@dataclass(frozen=True)
class PhaseState:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if x.shape != p.shape or x.ndim != 1:
            raise ValidationError("p", f"shape {p.shape} does not match x {x.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValidationError("x", "phase-space state must be finite")
        x.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled phase-space path.

    ``x`` and ``p`` have shape ``(n_states, dim)``. ``p`` is the smooth
    momentum variable ``p0 - int grad V dt``; ``accumulated_grad_v`` holds
    that integral (zero at the first state).
    """

    t0: float
    dt: float
    x: np.ndarray
    p: np.ndarray
    accumulated_grad_v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError("dt", "must be > 0")
        if len(self.x) == 0 or self.x.shape != self.p.shape:
            raise ValidationError("states", "need a non-empty, consistent state sequence")
        acc = self.accumulated_grad_v
        if acc is not None:
            if acc.shape != self.x.shape:
                raise ValidationError("accumulated_grad_v", "length must match states")
            if np.any(acc[0] != 0):
                raise ValidationError("accumulated_grad_v", "must start at zero")
        for arr in (self.x, self.p, acc):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.x))

    @property
    def states(self) -> list[PhaseState]:
        return [PhaseState(x, p) for x, p in zip(self.x, self.p)]

    @property
    def dim(self) -> int:
        return self.x.shape[1]
