import io
import math

import numpy as np
import pytest

from photonbath.cli import main


def _read(path):
    lines = [ln for ln in open(path) if not ln.startswith("#")]
    return np.genfromtxt(io.StringIO("".join(lines)), delimiter=",", names=True)


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_simulate_free_ensemble_diffusion(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mass = 1\ngamma = 0.5\ntemperature = 1\ntime.dt = 0.01\ntime.t_max = 2\n"
                         "ensemble.n_traj = 4000\nensemble.record_every = 20\n")
    out = tmp_path / "ens.csv"
    assert main(["simulate", "--config", cfg, "--seed", "1", "--out", str(out)]) == 0
    assert "traj_per_s" in capsys.readouterr().out
    data = _read(out)
    # Var x = w t / M^2; relative se sqrt(2 / 4000) ~ 2.2%
    assert data["var_x"][-1] == pytest.approx(2.0, rel=0.08)
    assert open(out).readline().startswith("# meta: seed=1")


def test_simulate_noiseless_single_trajectory(tmp_path):
    cfg = _cfg(tmp_path, "mass = 1\npotential.kind = harmonic\npotential.omega = 1\ninitial.x = 1\n"
                         "time.dt = 0.01\ntime.t_max = 1\nensemble.n_traj = 500\n")
    out = tmp_path / "tr.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    data = _read(out)
    assert data.dtype.names == ("t", "x_1", "p_1", "intgradv_1")
    assert data["x_1"][-1] == pytest.approx(math.cos(1.0), abs=1e-4)


def test_width_columns_and_gamma_zero(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["width", "--gammas", "0,0.02,0.05", "--tmax", "30", "--points", "301",
                 "--out", str(out)]) == 0
    assert open(out).read().splitlines()[1] == "omega_t,f_gamma_0,f_gamma_0.02,f_gamma_0.05"
    data = _read(out)
    f0 = data[data.dtype.names[1]]
    assert np.all(f0[10:] >= data["omega_t"][10:] - 0.5)


def test_width_mc_overlay(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["width", "--gammas", "0", "--tmax", "5", "--points", "11", "--mc",
                 "--mc-traj", "4000", "--mc-dt", "0.01", "--seed", "3", "--out", str(out)]) == 0
    data = _read(out)
    names = data.dtype.names
    f, mc, se = data[names[1]], data[names[2]], data[names[3]]
    sel = f > 0.05 * f.max()
    assert np.all(np.abs(mc[sel] - f[sel]) < 4 * se[sel] + 1e-3)


def test_noise_white_and_zero(tmp_path):
    cfg = _cfg(tmp_path, "mass = 1\ngamma = 0.5\ntemperature = 1\n")
    out = tmp_path / "n.csv"
    assert main(["noise", "--config", cfg, "--spec", "white", "--n", str(1 << 18), "--dt", "0.01",
                 "--bands", "8", "--out", str(out)]) == 0
    pg = _read(tmp_path / "n_periodogram.csv")
    assert np.all(np.abs(pg["ratio"] - 1.0) < 0.05)
    assert np.allclose(pg["spectrum"], 1.0)

    cfg0 = _cfg(tmp_path, "mass = 1\ngamma = 0\ntemperature = 1\n", "zero.cfg")
    assert main(["noise", "--config", cfg0, "--spec", "coth", "--n", "256", "--dt", "0.1",
                 "--out", str(tmp_path / "z.csv")]) == 0
    z = _read(tmp_path / "z.csv")
    assert not z["deta_1"].any()
    assert not _read(tmp_path / "z_periodogram.csv")["periodogram"].any()


def test_noise_truncated_quadratic_rise(tmp_path):
    cfg = _cfg(tmp_path, "mass = 1\ngamma = 0.5\ntemperature = 1\n")
    out = tmp_path / "t.csv"
    assert main(["noise", "--config", cfg, "--spec", "truncated:1", "--n", str(1 << 18),
                 "--dt", "0.05", "--bands", "256", "--out", str(out)]) == 0
    pg = _read(tmp_path / "t_periodogram.csv")
    # S / w - 1 = (hbar omega)^2 / 12 (kT)^2; narrow bands so centre^2 ~ band mean of omega^2
    rise = pg["spectrum"][4:] - 1.0
    assert np.allclose(rise, pg["omega"][4:] ** 2 / 12, rtol=0.02)
    # 512 bins per band: per-band se ~ 4.4%, overall mean much tighter
    assert abs(np.mean(pg["ratio"]) - 1.0) < 0.01


def test_wigner_at_start_time(tmp_path):
    cfg = _cfg(tmp_path, "mass = 1\ngamma = 0.1\ntemperature = 1\npacket.xbar = 0.5\n"
                         "packet.k = 1\npacket.sigma = 2\ntime.t_start = 3\n")
    out = tmp_path / "g.csv"
    assert main(["wigner", "--config", cfg, "--grid=-1:1:3,0:2:3", "--time", "3",
                 "--out", str(out)]) == 0
    d = _read(out)
    ref = np.exp(-(d["p"] - 1) ** 2 * 2 - (d["x"] - 0.5) ** 2 / 2) / math.pi
    assert np.allclose(d["value"], ref, rtol=1e-14)


def test_semiclassical_free_and_inverted(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mass = 1\ngamma = 0.1\ntemperature = 0\ninitial.x = 1\ninitial.p = 0.5\n"
                         "noise.scale = 0\ntime.dt = 0.01\ntime.t_max = 5\n")
    assert main(["semiclassical", "--config", cfg, "--out", str(tmp_path / "free")]) == 0
    corr = _read(tmp_path / "free" / "corrections.csv")
    assert np.all(corr["B_masked"] == 0)
    cfg = _cfg(tmp_path, "mass = 1\npotential.kind = inverted\npotential.mu = 0.5\n"
                         "initial.x = 0.001\nnoise.scale = 0\ntime.dt = 0.01\ntime.t_max = 60\n",
               "inv.cfg")
    assert main(["semiclassical", "--config", cfg, "--out", str(tmp_path / "inv")]) == 0
    report = (tmp_path / "inv" / "report.txt").read_text()
    rate = float(report.split("growth_rate=")[1].split()[0])
    assert rate == pytest.approx(0.5, rel=0.05)


@pytest.mark.parametrize("args,text,code,field", [
    (["simulate"], "mass = 1\nbogus = 3\n", 2, "bogus"),
    (["simulate"], "mass = -1\n", 2, "mass"),
    (["noise", "--spec", "coth"], "mass = 1\ngamma = 0.5\ntemperature = 0\n", 2, "--spec"),
    (["noise", "--spec", "violet"], "mass = 1\n", 2, "--spec"),
    (["wigner"], "mass = 1\n", 2, "packet.sigma"),
    (["simulate", "--workers", "0"], "mass = 1\n", 2, "--workers"),
    (["simulate"], "mass = 1\npotential.kind = quartic\npotential.b = -1\ninitial.x = 3\n"
                   "time.dt = 0.05\ntime.t_max = 20\n", 3, "integration"),
])
def test_exit_codes(tmp_path, capsys, args, text, code, field):
    cfg = _cfg(tmp_path, text)
    assert main(args + ["--config", cfg, "--out", str(tmp_path / "o.csv")]) == code
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith(f"error: {field}: ")


def test_width_requires_gammas(capsys):
    assert main(["width", "--gammas", ","]) == 2
    assert capsys.readouterr().err.startswith("error: --gammas: ")
