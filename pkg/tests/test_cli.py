import csv
import io
import json

import pytest

from fixpde import fileio
from fixpde.cli import main

BLOWUP = """\
[domain]
extent = 1
horizon = 1
[system]
u1_t = u1^2
[initial]
u1 = 3
[boundary.left]
u1 = 3
[boundary.right]
u1 = 3
"""

FAULT = """\
[domain]
extent = 1
horizon = 0.5
[system]
u1_t = -sqrt(u1)
[initial]
u1 = 0.5 - x
[boundary.left]
u1 = 0.5
[boundary.right]
u1 = -0.5
"""


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_validate_ok_and_noncausal():
    code, text = run("validate", "builtin:transport", "--resolution", "32,32")
    assert code == 0 and "causal: True" in text and text.startswith("plan m=1")
    code, text = run("validate", "builtin:transport", "--a", "1")
    assert code == 3 and "causal: False" in text


def test_input_errors(tmp_path, capsys):
    assert run("validate", "builtin:nope")[0] == 2
    bad = write(tmp_path, "bad.ini", BLOWUP.replace("u1^2", "u1^^2"))
    assert run("validate", bad)[0] == 2
    assert "line 5" in capsys.readouterr().err
    assert run("validate", str(tmp_path / "missing.ini"))[0] == 2


def test_solve_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    code, text = run("solve", "builtin:reaction_linear", "--resolution", "32,32",
                     "--out", str(out), "--csv", "--save-kernels")
    assert code == 0 and "status: converged" in text
    for name in ("u.fxpd", "u.csv", "report.txt", "kernels.json", "manifest.json",
                 "kernels.fxpd"):
        assert (out / name).exists(), name
    u, spacings, meta = fileio.load_array(out / "u.fxpd")
    assert u.shape == (1, 32, 32) and meta["status"] == "converged"
    man = json.loads((out / "manifest.json").read_text())
    assert man["grid_points"] == [32, 32] and man["threads"] == 1
    rows = list(csv.reader(io.StringIO((out / "u.csv").read_text())))
    assert rows[0] == ["t", "x", "component", "value"] and len(rows) == 1 + 32 * 32
    assert float(rows[1][3]) == u[0, 0, 0]


def test_solve_exit_codes(tmp_path):
    assert run("solve", "builtin:transport", "--a", "1", "--resolution", "16,16",
               "--out", str(tmp_path / "a"))[0] == 3
    blow = write(tmp_path, "blow.ini", BLOWUP)
    assert run("solve", blow, "--resolution", "32,32", "--out", str(tmp_path / "b"))[0] == 4
    fault = write(tmp_path, "fault.ini", FAULT)
    assert run("solve", fault, "--resolution", "16,16", "--out", str(tmp_path / "c"))[0] == 5
    assert run("solve", fault, "--resolution", "16,16", "--band-limit", "none",
               "--out", str(tmp_path / "d"))[0] == 5


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = run("solve", "builtin:reaction_linear", "--resolution", "16,16",
               "--out", str(blocker / "sub"))[0]
    assert code == 5


def test_compare_table_and_thresholds(tmp_path):
    dest = tmp_path / "t.csv"
    code, text = run("compare", "builtin:transport", "--oracle", "characteristics",
                     "--resolutions", "32,64", "--out", str(dest))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["resolution", "L2_error", "Linf_error", "valid_fraction", "iterations"]
    assert [r[0] for r in rows[1:]] == ["32", "64"]
    assert dest.read_text() == text
    assert code == 0 and float(rows[-1][1]) < float(rows[1][1]) < 0.05
    # diffusive upwind reference on a narrow bump sits far above 5 %
    assert run("compare", "builtin:transport", "--oracle", "fd", "--resolutions", "32")[0] == 1


def test_compare_inapplicable_oracle():
    assert run("compare", "builtin:burgers", "--oracle", "ode")[0] == 2
    assert run("compare", "builtin:hamilton_jacobi_1d", "--oracle", "fd")[0] == 2


def test_kernel_dump_and_inspect(tmp_path):
    dest = tmp_path / "k.fxpd"
    assert run("kernels", "dump", "builtin:transport", "--resolution", "16,16",
               "--out", str(dest))[0] == 0
    code, text = run("kernels", "inspect", str(dest))
    assert code == 0 and "imag_residue" in text and "points: [16, 16]" in text
    junk = write(tmp_path, "junk", "nope")
    assert run("kernels", "inspect", junk)[0] == 2
    assert run("kernels", "dump", "builtin:transport")[0] == 2


def test_repeated_runs_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert run("solve", "builtin:burgers", "--resolution", "64,64", "--csv",
                   "--out", str(d))[0] == 0
        outs.append(d)
    for name in ("u.fxpd", "u.csv", "kernels.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    r0 = (outs[0] / "report.txt").read_text().splitlines()
    r1 = (outs[1] / "report.txt").read_text().splitlines()
    strip = lambda lines: [l for l in lines if not l.startswith("wall_time_ms")]  # noqa: E731,E741
    assert strip(r0) == strip(r1)


@pytest.mark.parametrize("flag", ["--version", "--help"])
def test_info_flags(flag):
    with pytest.raises(SystemExit) as info:
        run(flag)
    assert info.value.code == 0
