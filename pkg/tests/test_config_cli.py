import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from fluxdg.cli import main, run
from fluxdg.config import ConfigError, load_config, parse_override
from fluxdg.reports import fmt, read_vtk_grid


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_defaults():
    cfg = load_config()
    assert cfg["mesh"] == {"domain": [0.0, 1.0, 0.0, 1.0], "nx": 8, "ny": 8}
    assert cfg["space"]["degree"] == 2
    assert cfg["penalty"]["sigma"] == 1.0
    assert cfg["problem"]["case"] == "a"


def test_precedence(tmp_path):
    path = write(tmp_path, "schema_version = 1\n[mesh]\nnx = 4\nny = 6\n")
    cfg = load_config(path, ["mesh.nx=2", ("space", "degree", 3)])
    assert (cfg["mesh"]["nx"], cfg["mesh"]["ny"], cfg["space"]["degree"]) == (2, 6, 3)


@pytest.mark.parametrize("text, needle", [
    ("schema_version = 1\n[mesh]\nnz = 3\n", "mesh.nz"),
    ("schema_version = 1\n[grid]\nnx = 3\n", "[grid]"),
    ("[mesh]\nnx = 3\n", "schema_version"),
    ("schema_version = 1\n[mesh]\nnx = 0\n", "mesh.nx"),
    ("schema_version = 1\n[penalty]\nsigma = 0.0\n", "comparison"),
    ("schema_version = 1\n[penalty]\ntheta = -1\n", "penalty.theta"),
    ("schema_version = 1\n[problem]\ncase = \"q\"\n", "problem.case"),
    ("schema_version = 1\n[mesh]\nnx = 3\n[problem]\ncase = \"c\"\n", "even"),
    ("schema_version = 1\n[problem]\ncase = \"a\"\nf = \"1\"\n", "either"),
    ("schema_version = 1\n[space]\ndegree = [1, 2]\n", "space.degree"),
    ("schema_version = 1\n[mesh\n", "run.toml"),
])
def test_rejections(tmp_path, text, needle):
    with pytest.raises(ConfigError, match=None) as info:
        load_config(write(tmp_path, text))
    assert needle in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_override_parsing():
    assert parse_override("study.levels=[2, 4]") == ("study", "levels", [2, 4])
    assert parse_override("problem.case=b") == ("problem", "case", "b")
    with pytest.raises(ConfigError):
        parse_override("nx=3")


def test_seed_is_mandatory():
    with pytest.raises(ConfigError):
        load_config().seed


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(True) == "true" and fmt(None) == ""
    assert fmt("a,b") == '"a,b"'


def test_constants_reports_corollary_values(tmp_path, capsys):
    assert main(["constants", "--out", str(tmp_path)]) == 0
    (row,) = rows(capsys.readouterr().out)
    assert float(row["xi2"]) == 0.1 and row["xi2_exact"] == "1/10"
    assert float(row["gamma_lb"]) == pytest.approx(228 ** -0.5, rel=1e-15)
    assert float(row["beta"]) == -0.4
    assert "sqrt(288)" in row["xi1_note"]
    assert (tmp_path / "constants.csv").read_text().startswith("sigma,")


def test_solve_zero_source(tmp_path, capsys):
    assert main(["solve", "--f", "0", "--nx", "4", "--ny", "4", "--out", str(tmp_path)]) == 0
    (row,) = rows(capsys.readouterr().out)
    assert float(row["max_abs_u"]) <= 1e-12
    dims, origin, spacing, vals = read_vtk_grid(tmp_path / "solution.vtk")
    assert dims == (65, 65, 1) and np.all(vals == 0.0)


def test_solve_writes_field(tmp_path, capsys):
    assert main(["solve", "--nx", "4", "--ny", "4", "--out", str(tmp_path)]) == 0
    dims, origin, spacing, vals = read_vtk_grid(tmp_path / "solution.vtk")
    assert origin == (0.0, 0.0, 0.0) and spacing[0] == pytest.approx(1 / 64)
    assert vals.reshape(65, 65)[32, 32] == pytest.approx(1.0, abs=0.1)


def test_converge_end_to_end(tmp_path, capsys):
    assert main(["converge", "--out", str(tmp_path)]) == 0
    table = rows(capsys.readouterr().out)
    assert len(table) == 3
    l2 = [float(r["l2"]) for r in table]
    h1 = [float(r["h1"]) for r in table]
    assert l2[0] > l2[1] > l2[2] and h1[0] > h1[1] > h1[2]


def test_conserve_and_lemmas(tmp_path, capsys):
    assert main(["conserve", "--case", "c", "--nx", "4", "--ny", "4", "--out", str(tmp_path)]) == 0
    assert len(rows(capsys.readouterr().out)) == 16
    assert main(["lemmas", "--nx", "2", "--ny", "2", "--seed", "4", "--samples", "10", "--out", str(tmp_path)]) == 0
    assert len(rows(capsys.readouterr().out)) == 10


def test_infsup_gates(tmp_path, capsys):
    args = ["infsup", "--set", "study.levels=[2, 4]", "--out", str(tmp_path)]
    assert main(args) == 0
    table = rows(capsys.readouterr().out)
    assert [r["M_h_within_M"] for r in table] == ["true", "true"]


def test_error_exit_codes(tmp_path, capsys):
    assert main(["lemmas", "--out", str(tmp_path)]) == 1  # no seed
    assert "study.seed" in capsys.readouterr().err
    assert run("solve", tmp_path / "missing.toml") == 1
    assert main(["converge", "--f", "1", "--out", str(tmp_path)]) == 1


def test_gate_failure_exit_code(tmp_path):
    # the measured continuity constant exceeds the closed-form M once h = 1/8
    assert main(["infsup", "--set", "study.levels=[8]", "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fluxdg", "constants", "--out", str(tmp_path)],
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0 and "1/10" in out.stdout


def test_config_file_drives_run(tmp_path, capsys):
    path = write(tmp_path, f"""schema_version = 1
[mesh]
nx = 2
ny = 2
[coefficient]
kind = "checkerboard"
values = [1.0, 10.0]
[problem]
f = "1"
[output]
directory = "{tmp_path.as_posix()}/o"
""")
    assert main(["solve", "--config", str(path)]) == 0
    assert (tmp_path / "o" / "solve.csv").exists()
