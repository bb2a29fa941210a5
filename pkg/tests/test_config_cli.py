import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkv.cli import EXIT_CONDITIONS, EXIT_INPUT, EXIT_OK, run
from mkv.config import (
    ConfigParseError,
    ConfigTypeError,
    ConfigValueError,
    UnknownKeyError,
    UnresolvedReferenceError,
    parse_config,
    serialize,
)
from mkv.grid import GridSpec, ScalarField, VectorField, read_field_csv, write_field_csv

BURGERS = """\
[model]
kind = burgers
[noise]
alpha = 2.0
[grid]
d = 1
L = 8.0
N = 256
[solver]
horizon = 0.2
M = 16
snapshots = 2
[particles]
n = 500
dt = 0.02
"""

KS = """\
[model]
kind = keller_segel
R = 2.0
chi = 1.0
[noise]
alpha = 2.0
[grid]
d = 2
L = 4.0
N = 64
[initial]
sigma = 0.5
p0 = 4.0
[solver]
horizon = 0.1
M = 8
"""


def test_minimal_config_is_valid():
    cfg = parse_config(BURGERS)
    assert cfg["model"]["kind"] == "burgers"
    assert cfg["grid"]["N"] == 256
    assert cfg["initial"]["sigma"] == 1.0
    assert cfg.warnings == []


def test_alpha_out_of_range_message():
    with pytest.raises(ConfigValueError, match=r"alpha must lie in \(1, 2\], got 0.8"):
        parse_config(BURGERS.replace("alpha = 2.0", "alpha = 0.8"))


def test_parse_error_names_line():
    with pytest.raises(ConfigParseError) as err:
        parse_config("[grid]\nd = 1\nthis is not a key value pair\n")
    assert err.value.line == 3
    with pytest.raises(ConfigParseError):
        parse_config("d = 1\n")


def test_unknown_key_and_section():
    with pytest.raises(UnknownKeyError, match="gamma"):
        parse_config(BURGERS.replace("alpha = 2.0", "alpha = 2.0\ngamma = 1"))
    with pytest.raises(UnknownKeyError, match="extras"):
        parse_config(BURGERS + "[extras]\nx = 1\n")


def test_type_mismatch():
    with pytest.raises(ConfigTypeError, match="integer"):
        parse_config(BURGERS.replace("N = 256", "N = many"))
    with pytest.raises(ConfigTypeError, match="bandwidth"):
        parse_config(BURGERS.replace("dt = 0.02", "dt = 0.02\nbandwidth = wide"))


def test_unresolved_references(tmp_path):
    custom = BURGERS.replace("kind = burgers", "kind = custom")
    with pytest.raises(UnresolvedReferenceError, match="field"):
        parse_config(custom)
    with pytest.raises(UnresolvedReferenceError, match="not found"):
        parse_config(custom.replace("kind = custom", "kind = custom\nfield = nowhere.csv"), base_dir=tmp_path)
    with pytest.raises(UnresolvedReferenceError, match="dimension"):
        parse_config(BURGERS.replace("d = 1", "d = 2"))
    with pytest.raises(UnresolvedReferenceError, match="kernel"):
        parse_config(BURGERS.replace("M = 16", "M = 16\nkernel = other"))
    with pytest.raises(ConfigValueError, match="support"):
        parse_config(KS.replace("R = 2.0", "R = 3.5"))


def test_custom_kernel_beta_minus_one_warns(tmp_path):
    g = GridSpec(1, 8.0, 256)
    write_field_csv(tmp_path / "b.csv", VectorField(g, np.tanh(g.axis)[None]))
    text = BURGERS.replace("kind = burgers", "kind = custom\nfield = b.csv\nbeta = -1\np = 2")
    cfg = parse_config(text, base_dir=tmp_path)
    assert any("(C2) unavailable" in w for w in cfg.warnings)


reals = st.floats(0.01, 5.0, allow_nan=False)


@st.composite
def configs(draw):
    lines = [
        "[model]", "kind = burgers", f"epsilon = {draw(st.floats(0.0, 1.0))!r}",
        f"eta = {draw(reals)!r}", f"r = {draw(st.one_of(st.just('inf'), st.floats(1.0, 50.0).map(repr)))}",
        "[noise]", f"alpha = {draw(st.floats(1.01, 2.0))!r}",
        f"measure = {draw(st.sampled_from(['isotropic', 'cylindrical']))}",
        f"diffusivity = {draw(reals)!r}",
        "[grid]", "d = 1", f"L = {draw(st.floats(2.0, 20.0))!r}", f"N = {2 ** draw(st.integers(4, 12))}",
        "[initial]", f"sigma = {draw(reals)!r}", f"center = {draw(st.floats(-1, 1))!r}",
        f"beta0 = {draw(st.floats(0.0, 3.0))!r}",
        "[solver]", f"horizon = {draw(st.floats(0.1, 5.0))!r}", f"M = {draw(st.integers(8, 256))}",
        f"vartheta = {draw(st.floats(0.05, 0.95))!r}",
        "[particles]", f"n = {draw(st.integers(100, 10**6))}", "dt = 0.01",
        f"seed = {draw(st.integers(0, 2**31))}",
        f"bandwidth = {draw(st.one_of(st.just('auto'), reals.map(repr)))}",
    ]
    return "\n".join(lines) + "\n"


@settings(max_examples=100, deadline=None)
@given(configs())
def test_serialize_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(serialize(cfg))
    assert again.values == cfg.values
    assert serialize(again) == serialize(cfg)


# --- command line ------------------------------------------------------------------


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_check_reports_conditions(tmp_path, capsys):
    code = run(["check", "--config", _write(tmp_path, KS)])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "c2: true" in out
    assert "model: kellersegel" in out


def test_check_strict_exit_code(tmp_path, capsys):
    bad = KS.replace("p0 = 4.0", "p0 = 1.0")
    assert run(["check", "--config", _write(tmp_path, bad)]) == EXIT_OK
    assert run(["check", "--strict", "--config", _write(tmp_path, bad)]) == EXIT_CONDITIONS
    assert "c2: false" in capsys.readouterr().out


def test_fp_solve_refusal_and_force(tmp_path):
    bad = _write(tmp_path, KS.replace("p0 = 4.0", "p0 = 1.0"))
    assert run(["fp-solve", "--config", bad, "--out", str(tmp_path / "a")]) == EXIT_CONDITIONS
    assert run(["fp-solve", "--force", "--config", bad, "--out", str(tmp_path / "b")]) == EXIT_OK


def test_fp_solve_outputs(tmp_path):
    out = tmp_path / "pde"
    assert run(["fp-solve", "--config", _write(tmp_path, BURGERS), "--out", str(out)]) == EXIT_OK
    diag = np.loadtxt(out / "diagnostics.csv", delimiter=",", skiprows=1, ndmin=2)
    assert diag.shape == (16, 6)
    assert np.abs(diag[:, 1] - 1.0).max() < 1e-6
    snaps = np.loadtxt(out / "snapshots.csv", delimiter=",", skiprows=1, ndmin=2)
    assert snaps[-1, 1] == pytest.approx(0.2)
    rho = read_field_csv(out / f"density_{int(snaps[-1, 0]):04d}.csv")
    assert isinstance(rho, ScalarField) and rho.integral() == pytest.approx(1.0, abs=1e-6)
    assert "status: converged" in (out / "summary.txt").read_text()


def test_particles_reproducible_and_compared(tmp_path, capsys):
    cfg = _write(tmp_path, BURGERS)
    pde = tmp_path / "pde"
    assert run(["fp-solve", "--config", cfg, "--out", str(pde)]) == EXIT_OK
    for name in ("p1", "p2"):
        assert run(["particles", "--config", cfg, "--out", str(tmp_path / name), "--pde-dir", str(pde)]) == EXIT_OK
    a = (tmp_path / "p1" / "positions_0000.csv").read_bytes()
    assert a == (tmp_path / "p2" / "positions_0000.csv").read_bytes()
    assert run(["particles", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "p3")]) == EXIT_OK
    assert a != (tmp_path / "p3" / "positions_0000.csv").read_bytes()
    l1 = np.loadtxt(tmp_path / "p1" / "comparison.csv", delimiter=",", skiprows=1)[1]
    assert 0 < l1 < 0.5
    assert "L1 to PDE" in capsys.readouterr().out


def test_besov_command(tmp_path, capsys):
    g = GridSpec(1, 8.0, 256)
    vals = np.exp(-(g.axis**2) / 2)
    write_field_csv(tmp_path / "f.csv", ScalarField(g, vals / g.integrate(vals)))
    assert run(["besov", "--field", str(tmp_path / "f.csv"), "--gamma", "-0.5", "--ell", "2", "--m", "inf"]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    assert header == "norm,gamma,ell,m,tail_estimate"
    vals = row.split(",")
    assert float(vals[0]) > 0 and float(vals[1]) == -0.5 and math.isinf(float(vals[3]))


def test_kernels_command(tmp_path):
    assert run(["kernels", "--config", _write(tmp_path, KS), "--out", str(tmp_path / "k")]) == EXIT_OK
    b = read_field_csv(tmp_path / "k" / "b.csv")
    div = read_field_csv(tmp_path / "k" / "div_b.csv")
    assert isinstance(b, VectorField) and isinstance(div, ScalarField)


def test_compare_command(tmp_path, capsys):
    g = GridSpec(1, 8.0, 256)
    f = ScalarField(g, np.full(g.shape, 1 / 16))
    write_field_csv(tmp_path / "a.csv", f)
    write_field_csv(tmp_path / "b.csv", f)
    assert run(["compare", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv")]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[1] == "0,0"
    g2 = GridSpec(1, 8.0, 128)
    write_field_csv(tmp_path / "c.csv", ScalarField(g2, np.full(g2.shape, 1 / 16)))
    assert run(["compare", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "c.csv")]) == EXIT_INPUT


def test_input_errors_exit_one(tmp_path, capsys):
    assert run(["check"]) == EXIT_INPUT
    assert run(["check", "--config", str(tmp_path / "missing.ini")]) == EXIT_INPUT
    assert run(["check", "--config", _write(tmp_path, BURGERS.replace("alpha = 2.0", "alpha = 0.8"))]) == EXIT_INPUT
    assert "alpha must lie in (1, 2]" in capsys.readouterr().err
