import io

import pytest

from tiemortar.cli import CliConfig, main, parse_config
from tiemortar.errors import ConfigurationError


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def test_empty_config_gives_defaults():
    cfg = parse_config("", "study")
    cfg.preset = "square-square"
    cfg.validate()
    assert cfg == CliConfig(subcommand="study", preset="square-square")
    assert cfg.method_spec().label == "mixed-p1p1"


def test_comments_and_types():
    cfg = parse_config("# study setup\npreset = square-square  # geometry\nlevels = 4\nmatching = no\n"
                       "methods = stab-p1p1, mixed-p1p1\n", "study")
    assert (cfg.levels, cfg.matching, cfg.methods) == (4, False, ("stab-p1p1", "mixed-p1p1"))
    assert cfg.source_lines["levels"] == 3


@pytest.mark.parametrize("text,match", [
    ("preset = square-square\nbogus = 1\n", "line 2: unknown key 'bogus'"),
    ("levels = four\n", "line 1: bad value for 'levels'"),
    ("matching = maybe\n", "line 1: bad value"),
    ("just words\n", "line 1: expected 'key = value'"),
    ("levels = 3\nlevels = 4\n", "line 2: key 'levels' already set on line 1"),
    ("alpha =\n", "line 1: key 'alpha' has no value"),
])
def test_parse_errors_carry_line_numbers(text, match):
    with pytest.raises(ConfigurationError, match=match):
        parse_config(text)


def test_missing_preset():
    with pytest.raises(ConfigurationError, match="missing required key 'preset'"):
        parse_config("levels = 3\n").validate()


def test_negative_alpha_names_constraint():
    cfg = parse_config("preset = patch-test\nmethod = stab-p1p1\nalpha = -1\n")
    with pytest.raises(ConfigurationError, match=r"line 3.*0 < alpha < C_I"):
        cfg.validate()


def test_continuous_p0_rejected():
    cfg = parse_config("preset = patch-test\nmultiplier = P0-continuous\n")
    with pytest.raises(ConfigurationError, match="degree l >= 1"):
        cfg.validate()


def test_method_composition():
    cfg = parse_config("preset = patch-test\ndegree = 1\nmultiplier = P0-discontinuous\nstabilized = true\n")
    spec = cfg.validate().method_spec()
    assert (spec.k, spec.l, spec.continuous, spec.stabilized) == (1, 0, False, True)


def test_alpha_on_mixed_method_rejected():
    with pytest.raises(ConfigurationError, match="not stabilized"):
        parse_config("preset = patch-test\nmethod = mixed-p1p1\nalpha = 1e-5\n").validate()


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("preset = square-square\nmethod = stab-p1p1\nalpha = -1\n")
    code, out = run(["solve", "--config", str(path), "--preset", "patch-test", "--alpha", "1e-5"])
    assert code == 0
    assert "alpha 1.000000e-05" in out


def test_solve_patch_test_statistics(tmp_path):
    code, out = run(["solve", "--preset", "patch-test", "--method", "mixed-p1p1", "--out", str(tmp_path)])
    assert code == 0
    ratio = float(out.split("max |lambda_t| / max |lambda_n| = ")[1].split()[0])
    assert ratio <= 1e-8
    assert (tmp_path / "lambda.csv").read_text().startswith("s,lambda_n,lambda_t\n")


def test_infsup_table_decays(tmp_path):
    code, out = run(["infsup", "--preset", "square-square", "--pair", "p1p0", "--levels", "4", "--out", str(tmp_path)])
    assert code == 0
    betas = [float(line.split()[2]) for line in out.splitlines()[1:]]
    assert len(betas) == 4 and all(a > b for a, b in zip(betas, betas[1:]))
    assert (tmp_path / "infsup_p1p0.csv").exists()


def test_constants(tmp_path):
    code, out = run(["constants", "--preset", "square-square", "--levels", "2", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "constants.csv").read_text().count("C_E") == 2


def test_study_writes_artifacts(tmp_path):
    argv = ["study", "--preset", "square-square", "--methods", "mixed-p1p1,stab-p1p1", "--levels", "3",
            "--out", str(tmp_path / "a")]
    assert run(argv)[0] == 0
    for name in ("convergence.csv", "rates.csv", "err_lambda.svg", "err_energy.svg"):
        assert (tmp_path / "a" / name).exists()
    argv[-1] = str(tmp_path / "b")
    assert run(argv)[0] == 0
    for name in ("convergence.csv", "rates.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dump_system(tmp_path):
    code, out = run(["dump-system", "--preset", "square-square", "--method", "stab-p1p0", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "matrix.txt").read_text().startswith("% ")


@pytest.mark.parametrize("argv", [
    ["solve", "--preset", "patch-test", "--seed", "1"],
    ["solve", "--preset", "nowhere"],
    ["solve"],
    ["frobnicate"],
    [],
    ["solve", "--preset", "patch-test", "--method", "stab-p1p1", "--alpha", "-1"],
    ["solve", "--preset", "patch-test", "--config", "/nonexistent/config.txt"],
])
def test_validation_errors_exit_1(argv, capsys):
    assert run(argv)[0] == 1
    assert "tiemortar: error" in capsys.readouterr().err


def test_bad_thread_count(monkeypatch):
    monkeypatch.setenv("TIEMORTAR_THREADS", "lots")
    assert run(["study", "--preset", "square-square", "--levels", "3"])[0] == 1


def test_numerical_failure_exit_2(monkeypatch, capsys):
    from tiemortar import cli
    from tiemortar.errors import SingularSystemError

    def broken(system):
        raise SingularSystemError("factorization failed", ("lambda", 0))

    monkeypatch.setattr(cli, "solve", broken)
    assert run(["solve", "--preset", "patch-test"])[0] == 2
    assert "lambda[0]" in capsys.readouterr().err
