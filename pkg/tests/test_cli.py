import csv
import io
import json

import numpy as np
import pytest

from collapse_oracle.cli import UsageError, main, parse_grid
from collapse_oracle.discrimination import optimal_known_psi
from collapse_oracle.linalg import diag_part, projector
from collapse_oracle.model import (
    CollapseBasis,
    array_from_json_dict,
    density_from_json,
    dumps,
    random_unitary,
    state_from_json,
)

from conftest import random_psi


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, value):
    path = tmp_path / name
    path.write_text(dumps(value))
    return "@" + str(path)


def strip_meta(text):
    obj = json.loads(text)
    obj.get("meta", {}).pop("wall_time_s", None)
    return obj


def test_parse_grid():
    assert parse_grid("0:1:0.25") == [0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("0.1,0.2") == [0.1, 0.2]
    assert len(parse_grid("0:1:0.01")) == 101
    assert parse_grid("0:0.95:0.1")[-1] == 0.9
    assert parse_grid("0:0.96:0.1")[-1] == 1.0  # within half a step
    for bad in ("1:0:0.1", "0:1:0", "a:b:c", "0:1", ""):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_rmax_uniform(capsys):
    code, out, _ = run(capsys, "rmax", "--psi", "uniform", "--dim", "4", "--p", "0.4")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert float(rows[0]["r_max"]) == pytest.approx(0.9, abs=1e-12)
    assert float(rows[0]["lower"]) == pytest.approx(0.9, abs=1e-12)


def test_rmax_curve_has_kink_at_two_thirds(capsys):
    code, out, _ = run(capsys, "rmax", "--psi", "0.05,0.95", "--p", "0.0:1.0:0.01", "--format", "json")
    assert code == 0
    rows = json.loads(out)
    assert len(rows) == 101
    for r in rows:
        if r["p"] >= 2 / 3:
            assert r["r_max"] == pytest.approx(r["p"], abs=1e-12)
        else:
            assert r["r_max"] > r["p"]
        assert r["lower"] - 1e-9 <= r["r_max"] <= min(r["upper"], r["delta_upper"]) + 1e-9
    half = next(r for r in rows if r["p"] == 0.5)
    assert half["r_max"] == pytest.approx(0.5 + 0.5 * np.sqrt(0.0475), abs=1e-9)


def test_rmax_degenerate(capsys):
    code, out, err = run(capsys, "rmax", "--psi", "1,0", "--p", "0.3")
    assert code == 3
    assert "blind guessing" in err
    row = next(csv.DictReader(io.StringIO(out)))
    assert float(row["r_max"]) == pytest.approx(0.7)


def test_rmax_gnuplot_and_table(capsys):
    code, out, _ = run(capsys, "rmax", "--psi", "0.3,0.7", "--p", "0.5", "--gnuplot")
    assert code == 0 and out.startswith("# gnuplot")
    code, out, _ = run(capsys, "rmax", "--psi", "0.3,0.7", "--p", "0.5", "--format", "table")
    assert code == 0 and "r_max" in out.splitlines()[0]


def test_csv_is_rfc4180(capsys):
    _, out, _ = run(capsys, "ellipse", "--p", "0.5", "--grid", "0:1:0.5")
    assert out.endswith("\r\n")
    assert all(line.count(",") == 1 for line in out.split("\r\n") if line)
    rows = list(csv.reader(io.StringIO(out, newline="")))
    assert rows[0] == ["psi1_sq", "r_max"]


def test_ellipse(capsys):
    code, out, _ = run(capsys, "ellipse", "--p", "0.5", "--grid", "0:1:0.01", "--format", "json")
    assert code == 0
    rows = json.loads(out)
    peak = max(rows, key=lambda r: r["r_max"])
    assert peak["r_max"] == pytest.approx(0.75, abs=1e-9) and peak["psi1_sq"] == 0.5
    assert rows[0]["r_max"] == pytest.approx(0.5) and rows[-1]["r_max"] == pytest.approx(0.5)
    assert next(r for r in rows if r["psi1_sq"] == 0.2)["r_max"] == pytest.approx(0.7, abs=1e-12)


def test_helstrom_command(capsys, tmp_path, rng):
    g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    f = write(tmp_path, "rho.json", rho)
    code, out, _ = run(capsys, "helstrom", f, f, "--p", "0.3", "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["r_max"] == pytest.approx(0.7, abs=1e-12)
    assert rec["p_lo"] <= 0.5 <= rec["p_hi"]
    m = write(tmp_path, "mixed.json", np.eye(3) / 3)
    rec = json.loads(run(capsys, "helstrom", m, m, "--p", "0.3", "--format", "json")[1])
    assert rec["p_lo"] == pytest.approx(0.5) and rec["p_hi"] == pytest.approx(0.5)

    a = write(tmp_path, "a.json", np.diag([1.0, 0.0]))
    b = write(tmp_path, "b.json", np.diag([0.0, 1.0]))
    code, out, _ = run(capsys, "helstrom", a, b, "--p", "0.4", "--format", "json")
    rec = json.loads(out)
    assert rec["r_max"] == pytest.approx(1.0) and "threshold_note" in rec

    psi = np.sqrt([0.2, 0.8])
    r2 = projector(psi)
    c1 = write(tmp_path, "c1.json", diag_part(r2))
    c2 = write(tmp_path, "c2.json", r2)
    code, out, _ = run(capsys, "helstrom", c1, c2, "--p", "0.5", "--format", "json")
    rec = json.loads(out)
    assert rec["r_max"] == pytest.approx(0.7, abs=1e-12)
    assert rec["p_hi"] == pytest.approx(2 / 3)
    e = array_from_json_dict(rec["e_opt"])
    assert e.shape == (2, 2)
    code, out, _ = run(capsys, "helstrom", c1, c2, "--p", "0.5")
    assert code == 0 and "r_max" in out


def test_helstrom_invalid_inputs(capsys, tmp_path):
    bad = write(tmp_path, "bad.json", np.diag([0.7, 0.7]))
    good = write(tmp_path, "good.json", np.eye(2) / 2)
    code, _, err = run(capsys, "helstrom", bad, good, "--p", "0.5")
    assert code == 4 and "invalid input" in err
    neg = write(tmp_path, "neg.json", np.diag([1.5, -0.5]))
    assert run(capsys, "helstrom", neg, good, "--p", "0.5")[0] == 4
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    assert run(capsys, "helstrom", "@" + str(junk), good, "--p", "0.5")[0] == 2
    assert run(capsys, "helstrom", "@/nonexistent.json", good, "--p", "0.5")[0] == 2


def test_usage_errors(capsys):
    assert run(capsys, "rmax", "--psi", "a,b", "--p", "0.5")[0] == 2
    assert run(capsys, "rmax", "--psi", "0.5,0.5", "--p", "1.5")[0] == 2
    assert run(capsys, "rmax", "--psi", "uniform", "--p", "0.5")[0] == 2
    assert run(capsys, "ellipse", "--grid", "1:0:0.1")[0] == 2
    assert run(capsys, "lambda", "--dim", "2", "--p", "0.5", "--effect", "weird")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "rmax", "--psi", "0.5,0.5", "--seed", "-1")[0] == 2


def test_simulate_command(capsys):
    code, out, _ = run(capsys, "simulate", "--psi", "uniform", "--dim", "4", "--p", "0.4",
                       "--effect", "complement", "--trials", "100000", "--seed", "3")
    rec = json.loads(out)
    assert code == 0 and rec["analytic"] == pytest.approx(0.9) and abs(rec["z_score"]) < 4
    assert rec["meta"]["seed"] == 3
    code, out, _ = run(capsys, "simulate", "--psi", "0.3,0.7", "--p", "0", "--effect", "zero", "--trials", "5000")
    assert json.loads(out)["estimate"] == 1.0
    code, out, _ = run(capsys, "simulate", "--psi", "0.3,0.7", "--p", "0.8", "--effect", "blind", "--trials", "100000")
    rec = json.loads(out)
    assert rec["analytic"] == pytest.approx(0.8) and abs(rec["z_score"]) < 4
    code, out, _ = run(capsys, "simulate", "--psi", "0.2,0.3,0.5", "--p", "0.5", "--blocks", "0,1;2",
                       "--effect", "opt", "--trials", "20000")
    assert code == 0


def test_simulate_with_basis_and_operators(capsys, tmp_path, rng):
    basis = write(tmp_path, "basis.json", random_unitary(2, rng))
    code, out, _ = run(capsys, "simulate", "--psi", "0.3,0.7", "--p", "0.4", "--basis", basis, "--trials", "20000")
    assert code == 0 and abs(json.loads(out)["z_score"]) < 4
    t = 0.3
    ops = tmp_path / "ops.json"
    ops.write_text(json.dumps({"operators": [json.loads(dumps(np.diag([np.cos(t), np.sin(t)]))),
                                             json.loads(dumps(np.diag([np.sin(t), np.cos(t)])))]}))
    code, out, _ = run(capsys, "simulate", "--psi", "0.3,0.7", "--p", "0.4", "--operators", "@" + str(ops),
                       "--effect", "zero", "--trials", "20000")
    assert code == 0 and abs(json.loads(out)["z_score"]) < 4


def test_seed_determinism(capsys, tmp_path):
    argv = ["simulate", "--psi", "0.3,0.7", "--p", "0.4", "--trials", "30000", "--seed", "17"]
    a = strip_meta(run(capsys, *argv)[1])
    b = strip_meta(run(capsys, *argv)[1])
    assert a == b
    lam = ["lambda", "--dim", "3", "--p", "0.3", "--samples", "20000", "--seed", "5"]
    assert strip_meta(run(capsys, *lam)[1]) == strip_meta(run(capsys, *lam)[1])
    before = strip_meta(run(capsys, "--seed", "17", *argv[:-2])[1])
    assert before == a and before["meta"]["seed"] == 17
    out = tmp_path / "o.json"
    assert main(lam + ["--out", str(out)]) == 0
    assert strip_meta(out.read_text()) == strip_meta(run(capsys, *lam)[1])


def test_lambda_command(capsys):
    code, out, _ = run(capsys, "lambda", "--dim", "2", "--p", "0.3", "--samples", "100000", "--seed", "1")
    rec = json.loads(out)
    est = rec["estimates"][0]
    assert code == 0 and est["fraction"] <= 0.5 + 4 * est["std_error"]
    code, out, _ = run(capsys, "lambda", "--dim", "3", "--p", "0.3", "--effect", "zero", "--samples", "5000")
    assert json.loads(out)["estimates"][0]["fraction"] == 0.0
    code, out, _ = run(capsys, "lambda", "--dim", "3", "--p", "0.3,0.6", "--scan", "--n-effects", "4",
                       "--samples", "5000")
    rec = json.loads(out)
    assert code == 0 and rec["conjecture_bound"] == pytest.approx(5 / 9)
    assert "estimates" not in rec and "note_half" in rec
    code, out, _ = run(capsys, "lambda", "--dim", "2", "--p", "0.3", "--scan", "--n-effects", "2",
                       "--samples", "2000", "--verbose")
    assert len(json.loads(out)["estimates"]) == 2


def test_scenario_variants(capsys, tmp_path, rng):
    psi = random_psi(rng, 4)
    f = write(tmp_path, "psi.json", psi)
    code, out, _ = run(capsys, "scenario", "--variant", "2", "--state", f, "--dim-s", "2", "--dim-t", "2",
                       "--p", "0.3", "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["r_max"] == pytest.approx(0.7, abs=1e-9)
    np.testing.assert_allclose(density_from_json(json.dumps(rec["rho1"])).matrix,
                               density_from_json(json.dumps(rec["rho2"])).matrix, atol=1e-12)

    s, t = random_psi(rng, 2), random_psi(rng, 2)
    prod = write(tmp_path, "prod.json", np.kron(s, t))
    u = random_unitary(2, rng)
    basis = write(tmp_path, "basis.json", u)
    code, out, _ = run(capsys, "scenario", "--variant", "1", "--state", prod, "--dim-s", "2", "--dim-t", "2",
                       "--basis", basis, "--p", "0.4", "--format", "json")
    rec = json.loads(out)
    assert rec["r_max"] == pytest.approx(optimal_known_psi(s, 0.4, CollapseBasis(u)).r_max, abs=1e-9)

    code, out, _ = run(capsys, "scenario", "--variant", "3", "--state", f, "--dim-s", "2", "--dim-t", "2",
                       "--p", "0.4", "--format", "json")
    assert code == 0 and json.loads(out)["r_max"] >= 0.6 - 1e-12

    ops = tmp_path / "id.json"
    ops.write_text(json.dumps([json.loads(dumps(np.eye(4)))]))
    code, out, _ = run(capsys, "scenario", "--variant", "4", "--state", f, "--operators", "@" + str(ops),
                       "--p", "0.3", "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["r_max"] == pytest.approx(0.7, abs=1e-9)
    code, out, _ = run(capsys, "scenario", "--variant", "4", "--state", f, "--blocks", "0,1;2,3", "--p", "0.3")
    assert code == 0
    assert run(capsys, "scenario", "--variant", "1", "--state", f, "--p", "0.3")[0] == 2
    assert run(capsys, "scenario", "--variant", "4", "--state", f, "--p", "0.3")[0] == 2


def test_json_outputs_round_trip_through_model(capsys, tmp_path, rng):
    psi = random_psi(rng, 3)
    f = write(tmp_path, "psi.json", psi)
    np.testing.assert_array_equal(state_from_json((tmp_path / "psi.json").read_text()).amplitudes, psi)
    code, out, _ = run(capsys, "simulate", "--psi", f, "--p", "0.3", "--trials", "1000")
    assert code == 0
    code, out, _ = run(capsys, "scenario", "--variant", "4", "--state", f, "--blocks", "0;1,2", "--p", "0.3",
                       "--format", "json")
    rec = json.loads(out)
    rho1 = density_from_json(json.dumps(rec["rho1"]))
    assert rho1.dim == 3
