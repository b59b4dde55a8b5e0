from __future__ import annotations

import io
import json

import pytest

from plate_homog import cli
from plate_homog.errors import SolverFailure
from plate_homog.material import PeriodicMaterial, save_material


@pytest.fixture
def files(tmp_path):
    hom = tmp_path / "hom.json"
    lam = tmp_path / "lam.json"
    save_material(PeriodicMaterial.homogeneous(1.0, 0.0), hom)
    save_material(PeriodicMaterial.laminate([1.0, 10.0], [0.0, 0.0]), lam)
    surf = tmp_path / "surf.json"
    surf.write_text(json.dumps({"pieces": [
        {"type": "arm", "T": [1, 0], "kappa": 1.0, "length": 0.5, "s_range": [0, 1], "dt": 0.01, "direction": [1, 0]},
        {"type": "arm", "T": [1, 0], "kappa": 1.0, "length": 0.5, "s_range": [0, 1], "dt": 0.01, "direction": [1, 0]},
    ]}))
    case = tmp_path / "case.json"
    case.write_text(json.dumps({"surface": {"T": [1, 0], "kappa": 1.0}, "schedule": [0.5, 0.25]}))
    return {"hom": str(hom), "lam": str(lam), "surf": str(surf), "case": str(case), "dir": tmp_path}


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def table(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


def test_selftest_passes():
    code, out, _ = run(["selftest"])
    assert code == 0
    rows = table(out)
    assert rows and all(r["result"] == "PASS" for r in rows)


def test_qhom_m_homogeneous(files):
    code, out, _ = run(["qhom-m", "--material", files["hom"], "--ii", "1", "0", "0"])
    assert code == 0
    assert float(table(out)[0]["energy"]) == pytest.approx(1.0, abs=1e-12)


def test_qhom_sc_variants(files):
    code, out, _ = run(["qhom-sc", "--material", files["lam"], "--dir", "1", "0"])
    assert code == 0 and float(table(out)[0]["energy"]) == pytest.approx(20 / 11, abs=1e-12)
    code, out, _ = run(["qhom-sc", "--material", files["lam"], "--ii", "-1", "0", "0", "--dir", "1", "0"])
    assert float(table(out)[0]["energy"]) == pytest.approx(20 / 11, abs=1e-12)
    code, out, _ = run(["qhom-sc", "--material", files["lam"], "--ii", "-1", "0", "0"])
    assert table(out)[0]["kind"] == "irrational" and float(table(out)[0]["energy"]) == pytest.approx(5.5)
    code, _, err = run(["qhom-sc", "--material", files["lam"], "--ii", "1", "0", "1"])
    assert code == 2 and "error" in err


def test_sweep_rows_and_mirror(files):
    out_path = files["dir"] / "sweep.csv"
    code, _, _ = run(["sweep", "--material", files["lam"], "--max-den", "6", "--out", str(out_path)])
    assert code == 0
    rows = table(out_path.read_text())
    assert len(rows) == 26
    assert rows[-1]["p"] == "" and float(rows[-1]["q_sc"]) == pytest.approx(5.5)
    mirror = json.loads((files["dir"] / "sweep.csv.json").read_text())
    assert mirror["columns"][:9] == ["p", "q", "T1", "T2", "P", "q_sc", "q_m", "mean_q2", "gap"]
    assert len(mirror["rows"]) == 26
    assert mirror["header"]["config"]["extra"]["max_den"] == 6


def test_output_is_deterministic(files):
    def body(text):
        return "\n".join(l for l in text.splitlines() if not l.startswith("#"))

    a = run(["sweep", "--material", files["lam"], "--max-den", "4", "--threads", "1"])[1]
    b = run(["sweep", "--material", files["lam"], "--max-den", "4", "--threads", "3"])[1]
    assert body(a) == body(b)
    c = run(["unfold-check", "--eps", "0.125", "--n", "32", "--trials", "4", "--seed", "3"])[1]
    d = run(["unfold-check", "--eps", "0.125", "--n", "32", "--trials", "4", "--seed", "3"])[1]
    assert body(c) == body(d)


def test_header_records_configuration(files):
    _, out, _ = run(["qhom-m", "--material", files["hom"], "--ii", "1", "0", "0", "--modes", "4"])
    head = dict(l[2:].split(": ", 1) for l in out.splitlines() if l.startswith("# "))
    assert json.loads(head["config"])["modes"] == 4
    versions = json.loads(head["versions"])
    assert {"plate_homog", "numpy", "scipy", "backend"} <= set(versions)
    assert float(head["elapsed_seconds"]) >= 0


def test_surface_energy(files):
    code, out, _ = run(["surface-energy", "--material", files["lam"], "--surface", files["surf"], "--regime", "sc"])
    assert code == 0
    rows = table(out)
    assert float(rows[-1]["energy"]) == pytest.approx(20 / 11 / 12, abs=1e-12)
    assert float(rows[0]["energy"]) + float(rows[1]["energy"]) == pytest.approx(float(rows[-1]["energy"]))


def test_surface_pieces_glue_in_order(files, tmp_path):
    surf = tmp_path / "glued.json"
    surf.write_text(json.dumps({"pieces": [
        {"type": "arm", "T": [1, 0], "kappa": 1.0, "length": 1.0, "s_range": [0, 1]},
        {"type": "cantor", "beta": 0.1, "levels": 2, "kappa": 1.0, "s_range": [0, 0.5]},
        {"type": "arm", "angle": 0.0, "kappa": 0.5, "kappa_gamma": 0.3, "length": 1.0},
    ]}))
    code, out, _ = run(["surface-energy", "--material", files["lam"], "--surface", str(surf), "--regime", "m"])
    assert code == 0
    rows = table(out)
    assert [r["piece"] for r in rows] == ["0", "1", "2", "total"]
    assert sum(float(r["energy"]) for r in rows[:3]) == pytest.approx(float(rows[-1]["energy"]))


def test_recovery_check(files):
    code, out, _ = run(["recovery-check", "--material", files["lam"], "--case", files["case"], "--regime", "sc"])
    assert code == 0
    rows = table(out)
    assert [float(r["eps"]) for r in rows] == [0.5, 0.25]
    assert float(rows[-1]["rel_error"]) < float(rows[0]["rel_error"])


def test_cantor_demo(files):
    code, out, _ = run(["cantor-demo", "--beta", "1", "--levels", "3", "--samples", "10"])
    assert code == 0
    assert '# removed_measure: "7/16"' in out
    removed = [r for r in table(out) if r["kind"] == "removed"]
    assert len(removed) == 7


def test_unfold_and_mollify_demos():
    code, out, _ = run(["unfold-check", "--eps", "0.125", "--n", "64", "--trials", "4"])
    assert code == 0 and all(float(r["residual"]) <= 1e-12 for r in table(out))
    code, out, _ = run(["mollify-demo", "--h", "0.0625", "--n", "128"])
    assert code == 0
    head = dict(l[2:].split(": ", 1) for l in out.splitlines() if l.startswith("# "))
    assert float(head["observed_ratio"]) == pytest.approx(float(head["transfer_factor"]), rel=1e-12)


@pytest.mark.parametrize("argv", [
    ["nonsense"],
    ["qhom-m", "--ii", "1", "0", "0"],
    ["cantor-demo", "--beta", "5", "--levels", "2"],
    ["cantor-demo", "--beta", "1", "--levels", "13"],
    ["qhom-m", "--material", "/nonexistent.json", "--ii", "1", "0", "0"],
    ["qhom-sc", "--material", "/nonexistent.json"],
    ["unfold-check", "--eps", "0.25", "--n", "10"],
])
def test_validation_errors_exit_2(argv):
    assert run(argv)[0] == 2


def test_solver_failure_exits_3(monkeypatch):
    def boom(cfg, args):
        raise SolverFailure("forced", 1.0)

    monkeypatch.setitem(cli.HANDLERS, "selftest", boom)
    code, _, err = run(["selftest"])
    assert code == 3 and "forced" in err
