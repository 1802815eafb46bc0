"""Discretised bath noise: white and quantum-corrected coloured variants.

A :class:`NoisePath` stores the noise impulses ``deta[k] = int eta dt`` over
``[t_k, t_{k+1}]``. For the white bath ``<eta(t) eta(t')> = w delta(t - t')``
these are i.i.d. normal with variance ``w dt``; coloured paths share the
same normalisation with power spectrum ``S(omega)``.

Random numbers come from a Philox counter-based generator keyed by
``(seed, stream)``, so a path depends only on those two integers.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import bernoulli

from .core import PhysicalParams, ValidationError

MODES = ("flat", "truncated", "coth")


class UnsupportedSpectrum(ValueError):
    """Spectrum cannot be formed for the requested parameters."""


def rng_for(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one (seed, stream) pair."""
    seed, stream = int(seed), int(stream)
    if seed < 0 or stream < 0:
        raise ValidationError("seed", "seed and stream must be non-negative")
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SpectrumSpec:
    """Noise power density ``S(omega)`` of the bath.

    mode
        ``"flat"`` (white), ``"truncated"`` (high-temperature series of
        ``x coth x`` up to ``order`` terms beyond the constant) or
        ``"coth"`` (the full expression).
    cutoff
        Angular frequency above which the spectrum is zeroed. ``None`` means
        the grid Nyquist frequency.
    """

    params: PhysicalParams
    mode: str = "flat"
    order: int = 1
    cutoff: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError("noise.mode", f"expected one of {MODES}, got {self.mode!r}")
        if self.mode == "truncated" and int(self.order) < 1:
            raise ValidationError("noise.order", "truncation order must be >= 1")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ValidationError("noise.cutoff", "must be > 0")

    def nyquist_cutoff(self, dt: float) -> float:
        nyq = math.pi / dt
        if self.cutoff is None:
            return nyq
        if self.cutoff > nyq * (1 + 1e-12):
            raise ValidationError("noise.cutoff", f"exceeds Nyquist frequency pi/dt = {nyq:g}")
        return self.cutoff


def _xcoth_series(order: int) -> np.ndarray:
    """Coefficients c_k of x coth x = sum c_k x^(2k), k = 0..order."""
    b = bernoulli(2 * order)
    return np.array([2 ** (2 * k) * b[2 * k] / math.factorial(2 * k) for k in range(order + 1)])


def spectral_shape(spec: SpectrumSpec, omega) -> np.ndarray:
    """``S(omega) / w``; 1 for the flat spectrum."""
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValidationError("omega", "must be finite")
    if spec.mode == "flat":
        return np.ones_like(omega)
    kt = spec.params.thermal_energy
    if kt == 0:
        raise UnsupportedSpectrum(
            f"{spec.mode} spectrum needs T > 0 (hbar*omega/2kT is undefined at T = 0)"
        )
    x = spec.params.hbar * omega / (2.0 * kt)
    if spec.mode == "truncated":
        coeffs = _xcoth_series(int(spec.order))
        return np.polynomial.polynomial.polyval(x * x, coeffs)
    ax = np.abs(x)
    out = np.ones_like(ax)
    big = ax > 1e-4
    out[big] = ax[big] / np.tanh(ax[big])
    small = ~big
    out[small] = 1.0 + ax[small] ** 2 / 3.0
    return out


def spectrum(spec: SpectrumSpec, omega) -> np.ndarray:
    """Noise power density at angular frequency ``omega``."""
    return spec.params.noise_strength * spectral_shape(spec, omega)


@dataclass(frozen=True)
class NoisePath:
    t0: float
    dt: float
    increments: np.ndarray  # shape (n, dims)
    kind: str = "white"
    order: int = 0
    seed: Optional[int] = None
    stream: Optional[int] = None

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim == 1:
            inc = inc[:, None]
        if inc.ndim != 2 or inc.shape[0] < 1:
            raise ValidationError("increments", "expected shape (n, dims) with n >= 1")
        if not self.dt > 0:
            raise ValidationError("dt", "must be > 0")
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)

    @property
    def n(self) -> int:
        return self.increments.shape[0]

    @property
    def dims(self) -> int:
        return self.increments.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n + 1)

    def eta(self) -> np.ndarray:
        """Running integral of eta, zero at ``t0``; shape (n + 1, dims)."""
        out = np.zeros((self.n + 1, self.dims))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def scaled(self, factor: float) -> "NoisePath":
        return NoisePath(self.t0, self.dt, self.increments * factor, self.kind, self.order,
                         self.seed, self.stream)


def _check_grid(n, dt, dims, n_min=1):
    if int(n) < n_min:
        raise ValidationError("n", f"must be >= {n_min}")
    if not dt > 0:
        raise ValidationError("dt", "must be > 0")
    if int(dims) < 1:
        raise ValidationError("dims", "must be >= 1")


def white_path(params: PhysicalParams, n: int, dt: float, dims: int = 1,
               seed: int = 0, stream: int = 0, t0: float = 0.0) -> NoisePath:
    _check_grid(n, dt, dims)
    w = params.noise_strength
    z = rng_for(seed, stream).standard_normal((int(n), int(dims)))
    inc = math.sqrt(w * dt) * z
    return NoisePath(t0, dt, inc, "white", 0, seed, stream)


def colored_path(spec: SpectrumSpec, n: int, dt: float, dims: int = 1,
                 seed: int = 0, stream: int = 0, t0: float = 0.0) -> NoisePath:
    """Spectral synthesis on the periodic grid of length ``n * dt``.

    White impulses are transformed, each Fourier mode is scaled by
    ``sqrt(S(omega_j) / w)`` and transformed back, giving a stationary
    sequence with circulant covariance and power density ``S`` below the
    cutoff.
    """
    _check_grid(n, dt, dims, n_min=8)
    n, dims = int(n), int(dims)
    kind = {"flat": "white", "truncated": "truncated", "coth": "coth"}[spec.mode]
    order = int(spec.order) if spec.mode == "truncated" else 0
    w = spec.params.noise_strength
    omega = 2.0 * math.pi * np.fft.rfftfreq(n, d=dt)
    cutoff = spec.nyquist_cutoff(dt)
    shape = spectral_shape(spec, omega)
    if np.any(shape < 0):
        bad = omega[np.argmax(shape < 0)]
        raise UnsupportedSpectrum(
            f"truncated spectrum of order {spec.order} turns negative at omega = {bad:g}; "
            "lower the cutoff or change the order"
        )
    gain = np.sqrt(shape)
    gain[omega > cutoff * (1 + 1e-12)] = 0.0
    if w == 0:
        return NoisePath(t0, dt, np.zeros((n, dims)), kind, order, seed, stream)
    z = rng_for(seed, stream).standard_normal((n, dims)) * math.sqrt(w * dt)
    zf = np.fft.rfft(z, axis=0) * gain[:, None]
    inc = np.fft.irfft(zf, n=n, axis=0)
    return NoisePath(t0, dt, inc, kind, order, seed, stream)


def make_path(spec: SpectrumSpec, n: int, dt: float, dims: int = 1, seed: int = 0,
              stream: int = 0, t0: float = 0.0) -> NoisePath:
    """White generator for flat spectra without cutoff, spectral synthesis otherwise."""
    if spec.mode == "flat" and spec.cutoff is None:
        return white_path(spec.params, n, dt, dims, seed, stream, t0)
    return colored_path(spec, n, dt, dims, seed, stream, t0)


def periodogram(path: NoisePath, component: int = 0):
    """Raw periodogram of ``eta ~ deta / dt``, one-sided in frequency.

    Normalised so that white noise of strength ``w`` has expectation ``w``
    at every non-zero frequency.
    """
    f = np.fft.rfft(path.increments[:, component])
    omega = 2.0 * math.pi * np.fft.rfftfreq(path.n, d=path.dt)
    return omega, (np.abs(f) ** 2) / (path.n * path.dt)


def band_average(omega, values, n_bands: int, omega_max: Optional[float] = None):
    """Average ``values`` over ``n_bands`` contiguous frequency bands.

    The zero-frequency bin is excluded. Returns band-centre frequencies and
    averages.
    """
    omega = np.asarray(omega)[1:]
    values = np.asarray(values)[1:]
    if omega_max is not None:
        keep = omega <= omega_max
        omega, values = omega[keep], values[keep]
    edges = np.linspace(0, omega.size, int(n_bands) + 1).astype(int)
    centers = np.array([omega[a:b].mean() for a, b in zip(edges[:-1], edges[1:]) if b > a])
    means = np.array([values[a:b].mean() for a, b in zip(edges[:-1], edges[1:]) if b > a])
    return centers, means


# ---------------------------------------------------------------------------
# CSV round trip


def path_to_csv(path: NoisePath, meta: Optional[dict] = None) -> str:
    buf = io.StringIO()
    info = {"kind": path.kind, "order": path.order, "dt": repr(path.dt), "t0": repr(path.t0),
            "seed": path.seed, "stream": path.stream}
    info.update(meta or {})
    buf.write("# meta: " + " ".join(f"{k}={v}" for k, v in info.items()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"deta_{i + 1}" for i in range(path.dims)])
    times = path.times[:-1]
    for t, row in zip(times, path.increments):
        writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return buf.getvalue()


def path_from_csv(text: str) -> NoisePath:
    meta = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("# meta:"):
            for item in line[len("# meta:"):].split():
                k, _, v = item.partition("=")
                meta[k] = v
        elif line and not line.startswith("#"):
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if header[0] != "t":
        raise ValidationError("noise csv", "first column must be 't'")
    data = np.array([[float(v) for v in r] for r in reader])
    t = data[:, 0]
    dt = float(meta["dt"]) if "dt" in meta else float(t[1] - t[0])
    t0 = float(meta["t0"]) if "t0" in meta else float(t[0])

    def _int(key):
        v = meta.get(key)
        return None if v in (None, "None") else int(v)

    return NoisePath(t0, dt, data[:, 1:], meta.get("kind", "white"), _int("order") or 0,
                     _int("seed"), _int("stream"))
