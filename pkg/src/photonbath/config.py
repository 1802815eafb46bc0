"""Flat ``key = value`` configuration files shared by the CLI and library.

Lines starting with ``#`` are comments; inline ``#`` after a value also
starts a comment. Keys are dotted (``potential.kind``); vectors are comma
separated. Unknown keys are rejected so typos surface as errors.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (Free, Harmonic, PhaseState, PhysicalParams, Potential, Quartic, Tabulated,
                   ValidationError, make_params)

KNOWN_KEYS = {
    "mass", "gamma", "temperature", "hbar", "kb", "alpha", "c",
    "potential.kind", "potential.omega", "potential.mu", "potential.a", "potential.b",
    "potential.file",
    "initial.x", "initial.p",
    "time.dt", "time.t_max", "time.n_steps", "time.t_start",
    "integrator.scheme", "integrator.order", "integrator.runaway_threshold",
    "ensemble.n_traj", "ensemble.record_every", "ensemble.chunk_size",
    "noise.mode", "noise.order", "noise.cutoff", "noise.scale",
    "packet.xbar", "packet.k", "packet.sigma",
    "semiclassical.c1", "semiclassical.c2",
}


class Config(dict):
    """Parsed configuration; typed getters raise ValidationError(key)."""

    def get_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        if key not in self:
            return default
        try:
            v = float(self[key])
        except ValueError:
            raise ValidationError(key, f"expected a number, got {self[key]!r}") from None
        if not math.isfinite(v):
            raise ValidationError(key, "must be finite")
        return v

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        if key not in self:
            return default
        try:
            return int(self[key])
        except ValueError:
            raise ValidationError(key, f"expected an integer, got {self[key]!r}") from None

    def get_vector(self, key: str, default=None) -> Optional[np.ndarray]:
        if key not in self:
            return None if default is None else np.atleast_1d(np.asarray(default, dtype=float))
        try:
            return np.array([float(s) for s in self[key].split(",")])
        except ValueError:
            raise ValidationError(key, f"expected comma-separated numbers, got {self[key]!r}") from None

    def require(self, key: str) -> str:
        if key not in self:
            raise ValidationError(key, "missing required key")
        return self[key]


def parse_config(text: str) -> Config:
    cfg = Config()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not sep or not key:
            raise ValidationError(f"line {lineno}", f"expected key = value, got {raw.strip()!r}")
        if key not in KNOWN_KEYS:
            raise ValidationError(key, "unknown configuration key")
        cfg[key] = value
    return cfg


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError("config", str(exc)) from None
    return parse_config(text)


def params_from_config(cfg: Config) -> PhysicalParams:
    mass = cfg.get_float("mass")
    if mass is None:
        raise ValidationError("mass", "missing required key")
    return make_params(
        mass,
        cfg.get_float("gamma", 0.0),
        cfg.get_float("temperature", 0.0),
        cfg.get_float("hbar", 1.0),
        cfg.get_float("kb", 1.0),
        cfg.get_float("alpha"),
        cfg.get_float("c"),
    )


def params_to_config(params: PhysicalParams) -> str:
    """Serialise with shortest round-trip float reprs (bit-exact reload)."""
    lines = [
        f"mass = {params.mass!r}",
        f"gamma = {params.gamma!r}",
        f"temperature = {params.temperature!r}",
        f"hbar = {params.hbar!r}",
        f"kb = {params.kb!r}",
        f"alpha = {params.alpha!r}",
    ]
    if params.c is not None:
        lines.append(f"c = {params.c!r}")
    return "\n".join(lines) + "\n"


def potential_from_config(cfg: Config, params: PhysicalParams, dim: Optional[int] = None) -> Potential:
    kind = cfg.get("potential.kind", "free").lower()
    if kind == "free":
        return Free(dim)
    if kind == "harmonic":
        omega = cfg.get_float("potential.omega")
        if omega is None:
            raise ValidationError("potential.omega", "required for a harmonic potential")
        return Harmonic(omega, params.mass, dim)
    if kind == "inverted":
        mu = cfg.get_float("potential.mu")
        if mu is None:
            raise ValidationError("potential.mu", "required for an inverted oscillator")
        return Quartic(-params.mass * mu * mu, 0.0, dim)
    if kind == "quartic":
        return Quartic(cfg.get_float("potential.a", 0.0), cfg.get_float("potential.b", 0.0), dim)
    if kind == "tabulated":
        path = cfg.require("potential.file")
        try:
            data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ValidationError("potential.file", str(exc)) from None
        return Tabulated(data[:, 0], data[:, 1])
    raise ValidationError("potential.kind", f"unknown potential {kind!r}")


def initial_from_config(cfg: Config) -> PhaseState:
    x = cfg.get_vector("initial.x", 0.0)
    p = cfg.get_vector("initial.p", np.zeros_like(x))
    if p.size == 1 and x.size > 1:
        p = np.full_like(x, p[0])
    return PhaseState(x, p)


def time_grid_from_config(cfg: Config, default_dt: float = 1e-3, default_t: float = 1.0):
    """Return ``(t_start, dt, n_steps)``."""
    dt = cfg.get_float("time.dt", default_dt)
    if not dt > 0:
        raise ValidationError("time.dt", "must be > 0")
    n = cfg.get_int("time.n_steps")
    if n is None:
        t_max = cfg.get_float("time.t_max", default_t)
        if not t_max > 0:
            raise ValidationError("time.t_max", "must be > 0")
        n = int(round(t_max / dt))
    if n < 1:
        raise ValidationError("time.n_steps", "must be >= 1")
    return cfg.get_float("time.t_start", 0.0), dt, n
