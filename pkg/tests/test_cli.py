import math

import pytest

from rfi import integral_eq
from rfi.cli import EXIT_CONFIG, EXIT_ASSERT, EXIT_OK, EXIT_RUNTIME, list_builtin, main, run_scenario
from rfi.errors import ConfigError
from rfi.operators import LineProjector, SinglePoint
from rfi.sampling import ContinuousUniform, Dirac, FiniteDiscrete
from rfi.scenarios import builtin_header, builtin_names, builtin_text, load_scenario, parse_scenario

ROTATION = """
[scenario]
name = rot
steps = 5
trajectories = 10

[family]
law = finite
operators = a
probs = 1

[operator.a]
type = rotation
phi = pi/2

[feasible_set]
type = point
point = 0, 0

[initial]
law = dirac
point = 1, 0

[diagnostics]
expect_class = NeverCertain
expect_constant_mean_dist = true
"""


def write(tmp_path, text, name="s.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- loading -------------------------------------------------------------------------


def test_bundled_lines():
    s = load_scenario("lines_beta_pi2")
    fam = s.problem.family
    assert isinstance(fam, ContinuousUniform) and fam.builder is LineProjector
    assert fam.hi == pytest.approx(math.pi / 2) and fam.lo == 0
    assert isinstance(s.problem.feasible_set, SinglePoint)


def test_bundled_halfspaces():
    s = load_scenario("halfspaces_03_07")
    fam = s.problem.family
    assert isinstance(fam, FiniteDiscrete) and list(fam.probs) == [0.3, 0.7]
    assert isinstance(s.mu, Dirac) and list(s.mu.point) == [-1.0, -1.0]
    assert s.K == 10 and s.M == 100_000


def test_load_from_path(tmp_path):
    s = load_scenario(write(tmp_path, ROTATION))
    assert s.name == "rot" and s.K == 5 and s.M == 10


@pytest.mark.parametrize("name", builtin_names())
def test_bundled_scenarios_parse_and_name_their_example(name):
    assert load_scenario(name).name == name
    assert "example" in builtin_header(name).lower()


def test_eleven_bundled():
    assert len(builtin_names()) == 11


def test_empty_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(write(tmp_path, ""))
    with pytest.raises(ConfigError):
        load_scenario(write(tmp_path, "# only a comment\n"))


def test_unknown_key_lists_valid(tmp_path):
    with pytest.raises(ConfigError, match="trajectories"):
        load_scenario(write(tmp_path, ROTATION.replace("steps = 5", "stepz = 5")))


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigError, match="section"):
        load_scenario(write(tmp_path, ROTATION + "\n[plots]\nx = 1\n"))


def test_parse_error_has_line_number(tmp_path):
    with pytest.raises(ConfigError, match="line"):
        load_scenario(write(tmp_path, "[scenario]\nname = x\nthis is not a key value pair\n"))


def test_unresolved_operator(tmp_path):
    with pytest.raises(ConfigError, match="b"):
        load_scenario(write(tmp_path, ROTATION.replace("operators = a", "operators = b")))


def test_unknown_operator_type(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(write(tmp_path, ROTATION.replace("type = rotation", "type = shear")))


@pytest.mark.parametrize("field", ["steps = 0", "trajectories = 0", "steps = -3", "steps = two"])
def test_bad_counts(tmp_path, field):
    key = field.split()[0]
    text = ROTATION.replace(f"{key} = {5 if key == 'steps' else 10}", field)
    with pytest.raises(ConfigError):
        load_scenario(write(tmp_path, text))


def test_missing_scenario():
    with pytest.raises(ConfigError, match="bundled"):
        load_scenario("no_such_scenario")


def test_expression_safety(tmp_path):
    with pytest.raises(ConfigError):
        parse_scenario(ROTATION.replace("phi = pi/2", "phi = __import__('os').getpid()"))


def test_unknown_kernel(tmp_path):
    text = "[scenario]\nname = ie\n\n[integral]\nkernel = sinc\nrhs = t\na = 0\nb = 1\nn = 11\niterations = 10\n"
    with pytest.raises(ConfigError, match="indicator"):
        load_scenario(write(tmp_path, text))


# -- running ---------------------------------------------------------------------------


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, ROTATION)), "--out", str(out)]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert "report.txt" in names and "ensemble.csv" in names
    header = (out / "ensemble.csv").read_text().splitlines()[0]
    assert header == "k,mean_dist,std_dist,feas_frac,frac_hit"


def test_verify_writes_nothing(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["verify", "rotation_nonconvergence"]) == EXIT_OK
    assert list(tmp_path.iterdir()) == []
    assert "classification: NeverCertain" in capsys.readouterr().out


def test_failed_assertion_exit(tmp_path, capsys):
    bad = ROTATION.replace("expect_class = NeverCertain", "expect_class = OneStep")
    assert main(["verify", str(write(tmp_path, bad))]) == EXIT_ASSERT
    assert "classification" in capsys.readouterr().err


def test_config_error_exit(tmp_path, capsys):
    assert main(["verify", str(write(tmp_path, ""))]) == EXIT_CONFIG
    assert main(["verify", "rotation_nonconvergence", "--threads", "0"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_runtime_error_exit(tmp_path, capsys):
    # |x0| overflows float64, so no distance to C is representable
    text = builtin_text("rotation_nonconvergence").replace("point = 1, 0", "point = 1e308, 1e308")
    assert main(["verify", str(write(tmp_path, text))]) == EXIT_RUNTIME
    assert "runtime error: NumericError" in capsys.readouterr().err


def test_probes_in_c_are_a_config_error(tmp_path):
    text = builtin_text("lines_beta_pi2").replace("regularity_grid = circle:10000", "regularity_grid = 0, 0")
    assert main(["verify", str(write(tmp_path, text))]) == EXIT_CONFIG


def test_status_matches_assertions():
    res = run_scenario(load_scenario("halfspaces_1_0"))
    assert res.status == (EXIT_OK if all(a.passed for a in res.assertions) else EXIT_ASSERT)
    assert res.assertions


def test_lines_report():
    res = run_scenario(load_scenario("lines_beta_pi2"))
    assert "kappa_theory = 5.50388" in res.report
    assert "r_theory = 0.904605" in res.report
    assert "11.0078" in res.report
    assert ", 0 flagged" in res.report
    assert res.status == EXIT_OK


def test_rotation_report():
    res = run_scenario(load_scenario("rotation_nonconvergence"))
    assert "classification: NeverCertain" in res.report
    assert "no rate claim" in res.report and "r_theory" not in res.report


def test_disks_feas_table():
    res = run_scenario(load_scenario("disks_rho_05"))
    header, rows = res.tables["feas_prob.csv"]
    assert "closed_form" in header
    col = header.index("closed_form")
    lam = {round(r[0], 2): r[col] for r in rows}
    assert lam[1.0] == pytest.approx(math.acos(0.25) / math.pi)


def test_seed_override_changes_output(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    main(["run", "disks_rho_05", "--out", str(a)])
    main(["run", "disks_rho_05", "--out", str(b)])
    main(["run", "disks_rho_05", "--out", str(c), "--seed", "99"])
    assert (a / "feas_prob.csv").read_bytes() == (b / "feas_prob.csv").read_bytes()
    assert (a / "feas_prob.csv").read_bytes() != (c / "feas_prob.csv").read_bytes()


@pytest.mark.parametrize("name", ["affine_r3", "huber", "inconsistent_two_family", "intervals_eps01"])
def test_threads_do_not_change_csv(tmp_path, name):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", name, "--out", str(a), "--threads", "1"])
    main(["run", name, "--out", str(b), "--threads", "8"])
    files = sorted(p.name for p in a.iterdir() if p.suffix == ".csv")
    assert files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_csv_line_format(tmp_path):
    main(["run", "halfspaces_1_0", "--out", str(tmp_path)])
    raw = (tmp_path / "ensemble.csv").read_bytes()
    assert raw.endswith(b"\r\n") and b"," in raw and b";" not in raw


# -- listing ---------------------------------------------------------------------------


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text == list_builtin()
    assert "intervals" in text and "indicator" in text
    for k in integral_eq.KERNELS:
        assert k in text
    for n in builtin_names():
        assert n in text
