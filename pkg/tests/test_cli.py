import json
import subprocess
import sys

import numpy as np
import pytest

from gelfand.cli import EXIT_CONFIG, EXIT_ERROR, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, run
from gelfand.fem.mesh import disk_mesh, write_mesh
from gelfand.io import read_csv, read_header


def _json(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    return json.loads(lines[0][2:]), json.loads("\n".join(lines[1:]))


def test_integrals_row(tmp_path):
    out = tmp_path / "m.csv"
    assert run(["integrals", "-o", str(out)]) == EXIT_OK
    assert "e^U,25.13274123,8π,<1e-8" in out.read_text().splitlines()
    head = read_header(out)
    assert {"tool", "version", "config_hash", "seed", "command"} <= set(head)
    assert "timestamp" not in head


def test_output_directory(tmp_path):
    assert run(["integrals", "-o", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "integrals.csv").is_file()


def test_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["vortex", "--points", "0.3 0.1 -0.2 -0.3", "--dt", "1e-2", "--steps", "50", "--seed", "4"]
    assert run(argv + ["-o", str(a)]) == EXIT_OK
    assert run(argv + ["-o", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert run(argv + ["-o", str(c), "--timestamps"]) == EXIT_OK
    assert c.read_text().splitlines()[1:] == a.read_text().splitlines()[1:]
    assert "timestamp" in read_header(c)
    assert read_header(a)["seed"] == 4


def test_vortex_reverse_returns(tmp_path):
    fwd, back = tmp_path / "f.csv", tmp_path / "b.csv"
    assert run(["vortex", "--points", "0.3 0.1 -0.2 -0.3", "--dt", "1e-2", "--steps", "100",
                "--record-every", "100", "-o", str(fwd)]) == EXIT_OK
    _, rows = read_csv(fwd)
    end = " ".join(rows[-1][k] for k in ("x1", "y1", "x2", "y2"))
    assert run(["vortex", "--points", end, "--dt", "1e-2", "--steps", "100", "--record-every", "100",
                "--reverse", "-o", str(back)]) == EXIT_OK
    _, rows = read_csv(back)
    final = [float(rows[-1][k]) for k in ("x1", "y1", "x2", "y2")]
    assert np.allclose(final, [0.3, 0.1, -0.2, -0.3], atol=1e-8)


def test_green_eval(tmp_path):
    out = tmp_path / "g.json"
    assert run(["green-eval", "--x", "0 0", "--y", "0.5 0", "-o", str(out)]) == EXIT_OK
    head, body = _json(out)
    assert head["command"] == "green-eval"
    assert body["green"] == pytest.approx(np.log(2) / (2 * np.pi), rel=1e-12)
    assert body["grad_x"][0] == pytest.approx(0.238732, abs=1e-6)


def test_green_eval_mesh_domain(tmp_path):
    write_mesh(disk_mesh(256), tmp_path / "d.mesh")
    dom = tmp_path / "dom.json"
    dom.write_text(json.dumps({"kind": "mesh", "file": "d.mesh"}))
    out = tmp_path / "g.json"
    assert run(["green-eval", "--domain", str(dom), "--x", "0 0", "--y", "0.5 0", "-o", str(out)]) == EXIT_OK
    _, body = _json(out)
    assert body["green"] == pytest.approx(0.110318, abs=1e-3)


def test_critical_points(tmp_path):
    out = tmp_path / "c.json"
    assert run(["critical-points", "--m", "1", "--seeds", "5", "-o", str(out)]) == EXIT_OK
    _, body = _json(out)
    assert len(body["critical_points"]) == 1
    cp = body["critical_points"][0]
    assert np.abs(cp["points"]).max() <= 1e-9
    assert cp["neg_morse_index"] == 0


def test_limit_spectrum(tmp_path):
    out = tmp_path / "l.csv"
    assert run(["limit-spectrum", "--k-max", "1", "-o", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    assert sum(int(r["multiplicity"]) for r in rows) == 4


def test_identities_small(tmp_path):
    out = tmp_path / "i.json"
    assert run(["identities", "--pairs", "3", "--trials", "10", "-o", str(out)]) == EXIT_OK
    _, body = _json(out)
    assert body["passed"] is True


def test_solve_branch_and_export(tmp_path):
    out, sol = tmp_path / "b.csv", tmp_path / "u.csv"
    assert run(["solve-branch", "--s-values", "6 8", "--grading", "0.05", "-o", str(out),
                "--export-solution", str(sol)]) == EXIT_OK
    head, rows = read_csv(out)
    assert [float(r["s"]) for r in rows] == [6.0, 8.0]
    assert head["critical_point"] == [[0.0, 0.0]]
    uhead, urows = read_csv(sol)
    assert max(float(r["u"]) for r in urows) == pytest.approx(8.0, abs=1e-9)
    assert uhead["mass"] > 0


def test_spectrum_command(tmp_path):
    out = tmp_path / "s.json"
    assert run(["spectrum", "--s-values", "8", "--grading", "0.05", "--K", "4", "-o", str(out)]) == EXIT_OK
    _, body = _json(out)
    assert len(body) == 1 and len(body[0]["mu"]) == 4
    assert body[0]["morse_index"] == 1


def test_verify_theorem1(tmp_path):
    out = tmp_path / "t1.json"
    code = run(["verify-theorems", "--m", "1", "--theorem", "1", "--s-values", "8 10 12",
                "--grading", "0.03", "-o", str(out)])
    assert code == EXIT_OK
    _, body = _json(out)
    assert body["theorem1"]["lower"] and body["theorem1"]["upper"]
    assert body["passed"] is True


def test_verify_theorem2_failure_exit(tmp_path):
    # too shallow for the inverse-log law: an honest verification failure
    out = tmp_path / "t2.json"
    code = run(["verify-theorems", "--theorem", "2", "--s-values", "13.5 13.8 14",
                "--grading", "0.03", "-o", str(out)])
    assert code == EXIT_VERIFY
    _, body = _json(out)
    assert body["passed"] is False
    assert not body["theorem2"]["fits"][0]["passed"]


def test_insufficient_samples_is_error(tmp_path):
    assert run(["verify-theorems", "--theorem", "2", "--s-values", "6 8 10", "--grading", "0.05",
                "-o", str(tmp_path / "x.json")]) == EXIT_ERROR


def test_config_errors(tmp_path):
    assert run(["green-eval", "--domain", str(tmp_path / "none.json"), "--x", "0 0", "--y", "0.5 0"]) == EXIT_CONFIG
    assert run(["integrals", "--nodes", "10"]) == EXIT_CONFIG
    assert run(["vortex", "--points", "0.1 0.2 0.3"]) == EXIT_CONFIG
    assert run(["solve-branch", "--m", "0"]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["green-eval", "--domain", str(bad), "--x", "0 0", "--y", "0.5 0"]) == EXIT_CONFIG


def test_runtime_error_exit():
    assert run(["green-eval", "--x", "0 0", "--y", "0 0"]) == EXIT_ERROR
    assert run(["green-eval", "--x", "2 0", "--y", "0 0"]) == EXIT_ERROR


def test_usage_errors(capsys):
    assert run(["integrals", "--bogus"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err
    assert run(["no-such-command"]) == EXIT_USAGE
    assert run(["green-eval", "--x", "1 2 3", "--y", "0 0"]) == EXIT_USAGE
    assert run(["--help"]) == 0


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "gelfand", "integrals", "--unknown"],
                       capture_output=True, text=True)
    assert p.returncode == EXIT_USAGE
    assert "usage:" in p.stderr and p.stdout == ""
    p = subprocess.run([sys.executable, "-m", "gelfand", "integrals"], capture_output=True, text=True)
    assert p.returncode == 0
    assert p.stdout.startswith("# {")
