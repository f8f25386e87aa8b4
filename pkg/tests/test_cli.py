import shutil
import subprocess
from pathlib import Path

import pytest

from dollardlab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_list_suites(capsys):
    assert main(["list-suites"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("prop1_asymptotes", "thm4_shift", "thm5_smoothing", "assumption_audit"):
        assert name in out


def test_run_passing_suite(tmp_path, capsys):
    code = main(["run", "thm5_smoothing", "--config", str(CONFIGS / "thm5_smoothing.toml"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "thm5_smoothing: pass" in capsys.readouterr().out
    assert (tmp_path / "thm5_smoothing_summary.txt").exists()


def test_run_failing_suite_exit_code(tmp_path):
    # a metric exponent outside (1/2, 1] violates the decay contract
    code = main(
        ["run", "prop1_asymptotes", "--config", str(CONFIGS / "prop1_free.toml"), "--set", "model.mu=0.4", "--out", str(tmp_path)]
    )
    assert code == EXIT_FAIL


def test_audit_command(tmp_path):
    assert main(["audit", "--config", str(CONFIGS / "lemma8.toml"), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "assumption_audit_checks.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "prop1_asymptotes", "--config", "/nonexistent.toml"],
        ["run", "no_such_suite", "--config", str(CONFIGS / "prop1_free.toml")],
        ["run", "prop1_asymptotes", "--config", str(CONFIGS / "prop1_free.toml"), "--set", "grid.n=3"],
    ],
)
def test_configuration_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_console_script_installed():
    exe = shutil.which("dollardlab")
    if exe is None:
        pytest.skip("console script not on PATH")
    out = subprocess.run([exe, "list-suites"], capture_output=True, text=True, check=True)
    assert "lemma7_bounds" in out.stdout
