import subprocess
import sys

import pytest

from fpaccel.cli import (
    RunConfig,
    build_config,
    compare,
    combined_csv,
    format_table,
    main,
    parse_config_text,
    pi_table,
    unique_labels,
)
from fpaccel.errors import ConfigError

SMALL = ["--problem", "bratu", "--nx", "12", "--max-fevals", "80"]


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "fpaccel.cli", *args], capture_output=True, text=True)


def test_run_writes_header_and_converges(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code = main(["run", *SMALL, "--method", "aa", "--window", "5", "--tol", "1e-5", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "iter,fevals,resnorm,time_s,event"
    assert lines[1].startswith("0,1,")


def test_run_budget_exit_code(capsys):
    assert main(["run", *SMALL, "--method", "gd", "--max-fevals", "5"]) == 2


def test_run_is_byte_identical(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["run", *SMALL, "--method", "nltgcr", "--mode", "adapt", "--out", str(p)]) in (0, 2)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_unknown_method_names_field(capsys):
    assert main(["run", "--method", "sor"]) == 1
    assert "method" in capsys.readouterr().err


def test_invalid_choice_is_config_error():
    proc = run_cli("run", "--problem", "heat")
    assert proc.returncode == 1 and "--problem" in proc.stderr


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# small bratu\nproblem = bratu\nnx=10\nmethod=rre\nwindow=3\nmax_fevals=7\n")
    assert main(["run", "--config", str(cfg), "--max-fevals", "4"]) == 2
    out = capsys.readouterr().out.splitlines()
    assert out[-1].split(",")[1] == "4"


def test_unknown_config_key_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("method=aa\nwindw=5\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "bad.cfg:2" in capsys.readouterr().err


def test_missing_config_file(capsys):
    assert main(["run", "--config", "/nonexistent/x.cfg"]) == 1


def test_parse_config_types():
    values = parse_config_text("window=4\ntol=1e-8\nmu=\n")
    assert values == {"window": 4, "tol": 1e-8, "mu": None}
    with pytest.raises(ConfigError, match="window"):
        parse_config_text("window=four")


def test_build_config_validation():
    with pytest.raises(ConfigError, match="window"):
        build_config({"window": 0}, {})
    assert build_config({"window": 3}, {"window": 6, "mu": None}).window == 6


@pytest.mark.parametrize(
    "method", ["gd", "rre", "mpe", "aa", "aatgs", "nltgcr", "newton", "broyden1", "broyden2"]
)
def test_every_nonlinear_method_runs(method):
    rows = compare([RunConfig(problem="bratu", nx=8, method=method, max_fevals=60)])
    assert rows[0].trace is not None and rows[0].trace.fevals <= 60


@pytest.mark.parametrize("method", ["cg", "cheb", "tgcr", "aa"])
def test_linear_problem_methods(method):
    row = compare([RunConfig(problem="linear", n=30, kappa=20.0, method=method, tol=1e-8)])[0]
    assert row.code == 0


def test_linear_only_method_on_bratu_is_error():
    assert compare([RunConfig(problem="bratu", method="cg", nx=4)])[0].code == 1


def test_atan_problem():
    row = compare([RunConfig(problem="atan", method="aa", window=2, tol=1e-10)])[0]
    assert row.code == 0


def test_compare_empty(capsys):
    assert main(["compare"]) == 0
    assert capsys.readouterr().out.splitlines() == [format_table([]).rstrip("\n")]


def test_unique_labels():
    assert unique_labels(["AA", "RRE", "AA", "AA"]) == ["AA", "RRE", "AA#2", "AA#3"]


def test_compare_worst_row_and_csv(tmp_path, capsys):
    good, bad, short = (tmp_path / f"{n}.cfg" for n in "gbs")
    good.write_text("problem=bratu\nnx=8\nmethod=aa\nwindow=3\ntol=1e-6\nlabel=x\n")
    short.write_text("problem=bratu\nnx=8\nmethod=gd\nmax_fevals=3\nlabel=x\n")
    bad.write_text("problem=bratu\nnx=8\nmethod=cg\n")
    out = tmp_path / "all.csv"
    assert main(["compare", str(good), str(short), "--out", str(out)]) == 2
    assert main(["compare", str(good), str(short), str(bad)]) == 1
    lines = out.read_text().splitlines()
    assert lines[0] == "label,iter,fevals,resnorm,time_s,event"
    assert {ln.split(",")[0] for ln in lines[1:]} == {"x", "x#2"}


def test_compare_jobs_do_not_change_results():
    cfgs = [RunConfig(problem="bratu", nx=10, method=m, max_fevals=50) for m in ("aa", "rre", "aatgs")]
    assert combined_csv(compare(cfgs, 1)) == combined_csv(compare(cfgs, 3))


def test_pi_demo_values():
    rows = pi_table(30, 1.0, 6)
    assert rows[0]["eps6"] is None
    # alternating tail bounds for the arctangent series at z = 1
    assert 1 / 124 < rows[30]["raw"] < 1 / 120
    assert min(r["eps6"] for r in rows[12:21]) <= 1e-13
    assert rows[-1]["aitken2"] <= rows[-1]["aitken"]


def test_pi_demo_command(capsys):
    assert main(["pi-demo", "--n", "12", "--max-order", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["step", "raw", "aitken", "aitken2", "eps1", "eps2", "eps3"]
    assert len(out) == 14
