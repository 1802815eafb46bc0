"""Command-line front end.

Every subcommand writes CSV with a leading ``# meta:`` line. Exit status is
0 on success, 2 for configuration or validation problems and 3 when the
integration itself fails; errors are reported on stderr as
``error: <field>: <message>``.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import analytic, greenfn, noise, wigner
from .config import (Config, initial_from_config, load_config, params_from_config,
                     potential_from_config, time_grid_from_config)
from .core import DomainError, PhaseState, ValidationError, make_params
from .langevin import IntegrationError, IntegratorSpec, integrate, run_ensemble, trajectory_to_csv


def _meta(**kw) -> str:
    return "# meta: " + " ".join(f"{k}={v}" for k, v in kw.items()) + "\n"


def _write(path, text: str):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _summary(args, text: str):
    # stdout carries the CSV when --out is '-', so the summary moves to stderr
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(text, file=stream)


def _load(args) -> Config:
    if getattr(args, "config", None) is None:
        return Config()
    return load_config(args.config)


def _spectrum_from_config(cfg: Config, params) -> noise.SpectrumSpec:
    return noise.SpectrumSpec(params, cfg.get("noise.mode", "flat").lower(),
                              cfg.get_int("noise.order", 1), cfg.get_float("noise.cutoff"))


def _integrator_from_config(cfg: Config, dt: float, n_steps: int) -> IntegratorSpec:
    return IntegratorSpec(dt, n_steps, cfg.get("integrator.scheme", "split").lower(),
                          cfg.get_int("integrator.order", 2),
                          cfg.get_float("integrator.runaway_threshold", 1e6))


def _packet_from_config(cfg: Config, params):
    if "packet.sigma" not in cfg:
        return None
    return wigner.gaussian_packet(cfg.get_float("packet.xbar", 0.0), cfg.get_float("packet.k", 0.0),
                                  cfg.get_float("packet.sigma"), params.hbar)


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load(args)
    params = params_from_config(cfg)
    initial = initial_from_config(cfg)
    potential = potential_from_config(cfg, params)
    t0, dt, n_steps = time_grid_from_config(cfg)
    spec = _integrator_from_config(cfg, dt, n_steps)
    nspec = _spectrum_from_config(cfg, params)
    n_traj = args.n_traj or cfg.get_int("ensemble.n_traj", 1)
    record_every = cfg.get_int("ensemble.record_every", 1)
    packet = _packet_from_config(cfg, params)
    deterministic = params.noise_strength == 0 and packet is None
    start = time.perf_counter()
    if n_traj == 1 or deterministic:
        path = None
        if params.noise_strength > 0:
            path = noise.make_path(nspec, n_steps, dt, initial.dim, args.seed, 0, t0)
        traj = integrate(params, potential, initial, path, spec, t0)
        text = trajectory_to_csv(traj, {"seed": args.seed, "dt": repr(dt), "n_traj": 1,
                                        "scheme": spec.scheme})
        elapsed = time.perf_counter() - start
        _write(args.out, text)
        _summary(args, f"trajectory: t={traj.times[-1]:.6g} x={traj.x[-1].tolist()} "
                       f"p={traj.p[-1].tolist()} wall={elapsed:.3f}s")
        return 0
    sampler = packet.sample if packet is not None else initial
    moments, _ = run_ensemble(params, potential, sampler, nspec, spec, n_traj, args.seed,
                              workers=args.workers, record_every=record_every, dim=initial.dim,
                              fail_fast=not args.skip_failures, t0=t0,
                              chunk_size=cfg.get_int("ensemble.chunk_size", 1024))
    elapsed = time.perf_counter() - start
    _write(args.out, moments.to_csv({"failures": len(moments.failures)}))
    _summary(args, f"ensemble: n_traj={n_traj} t={moments.t[-1]:.6g} mean_x={moments.mean_x[-1]:.6g} "
          f"var_x={moments.var_x[-1]:.6g} var_p={moments.var_p[-1]:.6g} "
          f"failures={len(moments.failures)} wall={elapsed:.3f}s "
          f"traj_per_s={n_traj / max(elapsed, 1e-9):.1f}")
    return 0


def _parse_list(text: str, field: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(field, f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ValidationError(field, "list must not be empty")
    return vals


def cmd_width(args) -> int:
    gammas = _parse_list(args.gammas, "--gammas")
    if not args.tmax > 0 or args.points < 2:
        raise ValidationError("--tmax", "need tmax > 0 and at least 2 points")
    omega_t = np.linspace(0.0, args.tmax, args.points)
    table = analytic.width_curve(gammas, omega_t)
    meta = {"seed": args.seed, "tmax": args.tmax, "gammas": ",".join(f"{g:g}" for g in gammas)}
    if args.mc:
        # omega = M = w = 1; friction gamma/omega from the list, noise decoupled
        # so that gamma = 0 still has a bath.
        dt = args.mc_dt
        n_steps = int(round(args.tmax / dt))
        stride = max(1, n_steps // (args.points - 1))
        if n_steps % (args.points - 1) or abs(stride * dt * (args.points - 1) - args.tmax) > 1e-9:
            raise ValidationError("--mc-dt", "tmax / mc-dt must be a multiple of points - 1")
        bath = make_params(1.0, 0.5, 1.0)
        nspec = noise.SpectrumSpec(bath)
        spec = IntegratorSpec(dt, n_steps)
        for g in gammas:
            params = make_params(1.0, g, 0.0)
            mom, _ = run_ensemble(params, analytic_harmonic(), PhaseState([0.0], [0.0]), nspec,
                                  spec, args.mc_traj, args.seed, workers=args.workers,
                                  record_every=stride)
            table[f"mc_f_gamma_{g:g}"] = 2.0 * mom.var_x
            table[f"mc_se_{g:g}"] = 2.0 * mom.se_var_x
        meta.update(mc_traj=args.mc_traj, dt=repr(dt), scheme="split")
    _write(args.out, analytic.width_curve_csv(table, meta))
    return 0


def analytic_harmonic():
    from .core import Harmonic

    return Harmonic(1.0, 1.0)


def _parse_grid(text: str):
    try:
        xs, ps = text.split(",")
        (x0, x1, nx), (p0, p1, npts) = xs.split(":"), ps.split(":")
        return (np.linspace(float(x0), float(x1), int(nx)), np.linspace(float(p0), float(p1), int(npts)))
    except ValueError:
        raise ValidationError("--grid", "expected xmin:xmax:nx,pmin:pmax:np") from None


def cmd_wigner(args) -> int:
    cfg = _load(args)
    params = params_from_config(cfg)
    packet = _packet_from_config(cfg, params)
    if packet is None:
        raise ValidationError("packet.sigma", "wigner needs a Gaussian packet (packet.* keys)")
    potential = potential_from_config(cfg, params, dim=1)
    t0, dt, _ = time_grid_from_config(cfg, default_dt=1e-2)
    xs, ps = _parse_grid(args.grid)
    X, P = np.meshgrid(xs, ps, indexing="ij")
    t = t0 if args.time is None else args.time
    est = wigner.evaluate_transport(packet, (X, P), t, params, potential,
                                    _spectrum_from_config(cfg, params), args.samples, args.seed,
                                    dt=dt, scheme=cfg.get("integrator.scheme", "split"),
                                    splitting_order=cfg.get_int("integrator.order", 2), t_a=t0,
                                    workers=args.workers)
    _write(args.out, est.to_csv())
    return 0


def _parse_spec(text: str):
    mode, _, order = text.partition(":")
    mode = {"white": "flat", "flat": "flat", "truncated": "truncated", "coth": "coth"}.get(mode.lower())
    if mode is None:
        raise ValidationError("--spec", f"expected white, truncated[:m] or coth, got {text!r}")
    try:
        return mode, int(order) if order else 1
    except ValueError:
        raise ValidationError("--spec", f"bad truncation order in {text!r}") from None


def cmd_noise(args) -> int:
    cfg = _load(args)
    params = params_from_config(cfg) if cfg else make_params(1.0, 0.5, 1.0)
    mode, order = _parse_spec(args.spec)
    spec = noise.SpectrumSpec(params, mode, order, cfg.get_float("noise.cutoff"))
    dt = args.dt if args.dt is not None else cfg.get_float("time.dt", 1e-2)
    try:
        path = noise.colored_path(spec, args.n, dt, 1, args.seed, 0)
    except noise.UnsupportedSpectrum as exc:
        raise ValidationError("--spec", str(exc)) from None
    _write(args.out, noise.path_to_csv(path, {"mode": mode, "w": repr(params.noise_strength)}))
    omega, pgram = noise.periodogram(path)
    s = noise.spectrum(spec, omega)
    centres, pav = noise.band_average(omega, pgram, args.bands)
    _, sav = noise.band_average(omega, s, args.bands)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sav > 0, pav / sav, np.nan)
    pout = args.periodogram_out
    if pout is None:
        pout = "-" if args.out in (None, "-") else str(Path(args.out).with_suffix("")) + "_periodogram.csv"
    text = _meta(seed=args.seed, dt=repr(dt), n=args.n, mode=mode, bands=args.bands)
    text += "omega,periodogram,spectrum,ratio\n"
    text += "".join(f"{a!r},{b!r},{c!r},{d!r}\n" for a, b, c, d in
                    zip(centres.tolist(), pav.tolist(), sav.tolist(), ratio.tolist()))
    _write(pout, text)
    return 0


def _wronskian_error(green) -> float:
    # relative to the size of the two products, which grow on unstable orbits
    scale = np.abs(green.xi1 * green.dxi2) + np.abs(green.dxi1 * green.xi2)
    return float(np.max(np.abs(green.wronskian + 1) / np.maximum(scale, 1.0)))


def cmd_semiclassical(args) -> int:
    cfg = _load(args)
    params = params_from_config(cfg)
    potential = potential_from_config(cfg, params, dim=1)
    initial = initial_from_config(cfg)
    if initial.dim != 1:
        raise ValidationError("initial.x", "semiclassical mode is one-dimensional")
    t0, dt, n_steps = time_grid_from_config(cfg)
    t = t0 + dt * np.arange(n_steps + 1)
    scale = cfg.get_float("noise.scale")
    s = greenfn.noise_scale(params, scale)
    orbit = greenfn.solve_classical(params, potential, initial.x[0], initial.p[0], t)
    green = greenfn.build_green(orbit)
    corr = greenfn.compute_B(green, orbit, params, (cfg.get_float("semiclassical.c1", 0.0),
                                                    cfg.get_float("semiclassical.c2", 0.0)))
    nspec = _spectrum_from_config(cfg, params)
    if params.noise_strength > 0:
        path = noise.make_path(nspec, n_steps, dt, 1, args.seed, 0, t0)
    else:
        path = noise.NoisePath(t0, dt, np.zeros((n_steps, 1)))
    Q = greenfn.compute_Q(green, greenfn.rescale_noise(path, s), params)
    x_sc = greenfn.composite_solution(orbit, corr, Q, params, scale)
    traj = integrate(params, potential, initial, path, _integrator_from_config(cfg, dt, n_steps), t0)
    x_sde = traj.x[:, 0]
    amp = orbit.amplitude
    rms = float(np.sqrt(np.mean((x_sc - x_sde) ** 2)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(seed=args.seed, dt=repr(dt), scale=repr(s), gamma=repr(params.gamma))
    _write(out / "orbit.csv", meta + orbit.to_csv())
    _write(out / "green.csv", meta + green.to_csv())
    _write(out / "corrections.csv", meta + greenfn.correction_csv(corr, Q))
    comp = greenfn._columns_csv({"t": t, "x_composite": x_sc, "x_sde": x_sde, "diff": x_sc - x_sde})
    _write(out / "composite.csv", meta + comp)
    lines = [f"rms_discrepancy={rms!r}",
             f"rms_relative={(rms / amp if amp > 0 else math.nan)!r}",
             f"orbit_amplitude={amp!r}",
             f"wronskian_max_rel_error={_wronskian_error(green):.3e}"]
    try:
        gr = greenfn.growth_rate(green)
        lines += [f"growth_rate={gr.rate!r}", f"growth_rate_stderr={gr.stderr!r}",
                  f"growth_rate_degenerate={gr.degenerate}"]
    except ValidationError as exc:
        lines.append(f"growth_rate=nan  # {exc.message}")
    report = "\n".join(lines) + "\n"
    _write(out / "report.txt", report)
    sys.stdout.write(report)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default="-", help="output path ('-' for stdout)")

    ap = argparse.ArgumentParser(prog="photonbath", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="trajectory or ensemble moments")
    p.add_argument("--n-traj", type=int, default=None, help="overrides ensemble.n_traj")
    p.add_argument("--skip-failures", action="store_true",
                   help="drop failed trajectories instead of aborting")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("width", parents=[common], help="harmonic fluctuation-width curves")
    p.add_argument("--gammas", required=True, help="comma-separated gamma values (units of 1/omega)")
    p.add_argument("--tmax", type=float, default=30.0, help="largest omega*t")
    p.add_argument("--points", type=int, default=301)
    p.add_argument("--mc", action="store_true", help="append Monte Carlo columns (omega=M=w=1)")
    p.add_argument("--mc-traj", type=int, default=2000)
    p.add_argument("--mc-dt", type=float, default=0.01)
    p.set_defaults(func=cmd_width)

    p = sub.add_parser("wigner", parents=[common], help="transported Wigner function on a grid")
    p.add_argument("--grid", default="-4:4:41,-4:4:41", help="xmin:xmax:nx,pmin:pmax:np")
    p.add_argument("--time", type=float, default=None)
    p.add_argument("--samples", type=int, default=10000)
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("noise", parents=[common], help="noise path and periodogram")
    p.add_argument("--spec", default="white", help="white | truncated[:order] | coth")
    p.add_argument("--n", type=int, default=1 << 16)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--bands", type=int, default=64)
    p.add_argument("--periodogram-out", default=None)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("semiclassical", parents=[common], help="orbit, Green function, Q and B")
    p.set_defaults(func=cmd_semiclassical)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ValidationError("--workers", "must be >= 1")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc.field}: {exc.message}", file=sys.stderr)
        return 2
    except (DomainError, noise.UnsupportedSpectrum) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"error: integration: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
