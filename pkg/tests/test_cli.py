import io
import subprocess
import sys

import pytest

from cutmg.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, load_config_file, main, UsageError


def run(args):
    out = io.StringIO()
    code = main(args, stdout=out)
    return code, out.getvalue()


def test_convergence_success(tmp_path):
    code, out = run(["convergence", "--levels", "2", "--output", str(tmp_path)])
    assert code == EXIT_OK
    assert "eoc" in out
    assert (tmp_path / "convergence.csv").exists()


def test_mg_table_with_values():
    code, out = run(["mg-table", "--interface", "planar", "--levels", "2",
                     "--sweep", "delta", "--values", "0,0.1"])
    assert code == EXIT_OK
    assert "delta=0.1" in out


def test_divergence_exit_code():
    code, out = run(["mg-table", "--method", "nitsche", "--interface", "planar",
                     "--levels", "2", "--sweep", "lambda_n", "--values", "1", "--max-iter", "5"])
    assert code == EXIT_DIVERGED
    assert "div" in out


@pytest.mark.parametrize("args", [
    ["convergence", "--dim", "5"],
    ["frobnicate"],
    ["convergence", "--mu1", "abc"],
    ["mg-table", "--values", "1,x"],
    ["convergence", "--config", "/nonexistent/file.ini"],
    ["diagnostics", "--smoother", "sor"],
])
def test_configuration_errors(args, capsys):
    assert main(args) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_config_file_and_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[geometry]\ninterface = planar\n\n[solver]\nlevels = 2\nmu1 = 0.1\n"
                   "iso-p2 = no\n")
    values = load_config_file(ini)
    assert values == {"interface": "planar", "levels": 2, "mu1": 0.1, "iso_p2": False}
    code, out = run(["solve", "--problem", "product", "--config", str(ini), "--levels", "1"])
    assert code == EXIT_OK
    assert out.count("\n") >= 3
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\ncolour = red\n")
    with pytest.raises(UsageError):
        load_config_file(bad)
    assert main(["solve", "--config", str(bad)]) == EXIT_CONFIG


def test_quiet_and_diagnostics():
    code, out = run(["diagnostics", "--levels", "1", "--quiet"])
    assert code == EXIT_OK and out == ""


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cutmg", "solve", "--levels", "1"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "iterations" in proc.stdout
