import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonbath.config import (initial_from_config, load_config, params_from_config,
                               params_to_config, parse_config, potential_from_config,
                               time_grid_from_config)
from photonbath.core import ValidationError, make_params


def test_parse_comments_and_case():
    cfg = parse_config("# header\nMass = 2   # inline\n\npotential.kind = harmonic\n")
    assert cfg == {"mass": "2", "potential.kind": "harmonic"}


@pytest.mark.parametrize("text,field", [
    ("mass = 1\nmas = 2\n", "mas"),
    ("mass\n", "line 1"),
    ("mass = one\n", "mass"),
    ("gamma = 1\n", "mass"),
    ("mass = 1\ngamma = -1\n", "gamma"),
    ("mass = 1\ntemperature = inf\n", "temperature"),
])
def test_errors_name_the_field(text, field):
    with pytest.raises(ValidationError) as exc:
        params_from_config(parse_config(text))
    assert exc.value.field == field


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(0, 10), st.floats(0, 1e4), st.floats(1e-3, 10),
       st.one_of(st.none(), st.floats(1e-3, 1e3)))
def test_params_round_trip_bit_exact(M, gamma, T, hbar, c):
    P = make_params(M, gamma, T, hbar=hbar, c=c)
    assert params_from_config(parse_config(params_to_config(P))) == P


def test_potentials(tmp_path):
    P = make_params(2.0, 0, 0)
    harm = potential_from_config(parse_config("potential.kind = harmonic\npotential.omega = 3"), P)
    assert harm.grad_v(np.array([[1.0]]))[0, 0] == pytest.approx(18.0)
    inv = potential_from_config(parse_config("potential.kind = inverted\npotential.mu = 0.5"), P)
    assert inv.hess_v(np.array([[0.3]]))[0, 0, 0] == pytest.approx(-0.5)
    quart = potential_from_config(parse_config("potential.kind = quartic\npotential.b = 1"), P)
    assert quart.grad_v(np.array([[2.0]]))[0, 0] == pytest.approx(8.0)
    grid = np.linspace(-2, 2, 41)
    f = tmp_path / "v.csv"
    np.savetxt(f, np.column_stack([grid, grid**2]), delimiter=",", header="x,v")
    tab = potential_from_config(parse_config(f"potential.kind = tabulated\npotential.file = {f}"), P)
    assert tab.v(np.array([[0.5]]))[0] == pytest.approx(0.25, abs=1e-3)
    with pytest.raises(ValidationError):
        potential_from_config(parse_config("potential.kind = harmonic"), P)
    with pytest.raises(ValidationError):
        potential_from_config(parse_config("potential.kind = morse"), P)


def test_initial_and_time_grid():
    cfg = parse_config("initial.x = 1, 2\ninitial.p = 0.5\ntime.dt = 0.1\ntime.t_max = 2\n")
    s = initial_from_config(cfg)
    assert np.array_equal(s.x, [1, 2]) and np.array_equal(s.p, [0.5, 0.5])
    assert time_grid_from_config(cfg) == (0.0, 0.1, 20)
    assert time_grid_from_config(parse_config("time.n_steps = 7"))[2] == 7
    with pytest.raises(ValidationError):
        time_grid_from_config(parse_config("time.dt = 0"))


def test_load_missing_file(tmp_path):
    with pytest.raises(ValidationError) as exc:
        load_config(tmp_path / "nope.cfg")
    assert exc.value.field == "config"
