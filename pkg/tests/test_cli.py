import json

import pytest

from hbvnsfd import EquilibriumReport
from hbvnsfd.cli import EXIT_BLOWUP, EXIT_CONFIG, EXIT_GATE, EXIT_OK, main, ring_states
from hbvnsfd.config import ConfigError, bundled_scenarios, load_scenario, parse_scenario
from hbvnsfd.solvers import read_csv

BASE = {
    "name": "tiny",
    "params": {
        "lambda": 1.0, "mu0": 0.1, "mu1": 0.0, "beta": 0.1, "nu": 0.1,
        "incidence": {"family": "bilinear", "alpha": 0.1},
    },
    "initial": [8, 1, 1],
    "schemes": [{"scheme": "nsfd", "dt": 1.0, "steps": 20}],
}


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# --- scenario parsing ----------------------------------------------------------


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert {"example1", "example2", "example3", "bilinear"} <= set(names)
    for path in names.values():
        scn = load_scenario(path)
        assert scn.schemes


def test_scenario_round_trip():
    scn = load_scenario(bundled_scenarios()["example1"])
    again = parse_scenario(json.loads(json.dumps(scn.to_dict())))
    assert again.to_dict() == scn.to_dict()


@pytest.mark.parametrize(
    "patch, fragment",
    [
        ({"schemes": []}, "at least one scheme"),
        ({"name": "bad name/"}, "name"),
        ({"initial": [1, -1, 0]}, "initial"),
        ({"extra": 1}, "unknown top-level"),
        ({"params": {**BASE["params"], "kappa": 1}}, "params"),
        ({"schemes": [{"scheme": "euler", "dt": 1, "steps": 5, "phi": {"kind": "identity"}}]}, "schemes[0]"),
        ({"outputs": ["movie"]}, "outputs"),
    ],
)
def test_invalid_scenarios(patch, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_scenario({**BASE, **patch})
    assert fragment in str(exc.value)


def test_json_syntax_error_reports_position(tmp_path):
    path = write(tmp_path, '{\n  "name": "x",\n  oops\n}')
    with pytest.raises(ConfigError) as exc:
        load_scenario(path)
    assert "line 3" in str(exc.value)


# --- exit codes --------------------------------------------------------------------


def test_exit_ok_and_artifacts(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--config", write(tmp_path, BASE), "--out", str(tmp_path / "o"))
    assert code == EXIT_OK
    assert (tmp_path / "o" / "tiny_nsfd_dt1.csv").exists()


def test_exit_config_error(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--config", write(tmp_path, {**BASE, "schemes": []}))
    assert code == EXIT_CONFIG
    assert "at least one scheme" in err
    code, _, err = run(capsys, "equilibria", "--config", str(tmp_path / "missing.json"))
    assert code == EXIT_CONFIG


def test_exit_blow_up(tmp_path, capsys):
    doc = {
        **BASE,
        "params": {**BASE["params"], "incidence": {"family": "bilinear", "alpha": 5.0}},
        "schemes": [{"scheme": "euler", "dt": 100.0, "steps": 400}],
    }
    code, out, _ = run(capsys, "simulate", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o"))
    assert code == EXIT_BLOWUP
    assert "blow-up" in out
    t, states = read_csv(tmp_path / "o" / "tiny_euler_dt100.csv")
    assert len(t) >= 1


def test_exit_gate_failure(tmp_path, capsys):
    code, out, _ = run(
        capsys, "convergence", "--config", "example2", "--scheme", "rk2",
        "--T", "400", "--dt-list", "40,20,10,5", "--dt-ref", "0.05",
    )
    assert code == EXIT_GATE
    assert "FAIL" in out


def test_convergence_needs_four_step_sizes(capsys):
    code, _, err = run(capsys, "convergence", "--config", "example2", "--dt-list", "0.4")
    assert code == EXIT_CONFIG
    assert "at least 4" in err


# --- commands --------------------------------------------------------------------


def test_equilibria_example1(capsys):
    code, out, _ = run(capsys, "equilibria", "--config", "example1")
    assert code == EXIT_OK
    assert "R0 = 0.7795" in out
    assert "DFE = (649.35, 0.00, 2798.93)" in out


def test_equilibria_example2(capsys):
    _, out, _ = run(capsys, "equilibria", "--config", "example2")
    assert "R0 = 0.0139" in out
    assert "DFE = (126.64, 0.00, 873.36)" in out


def test_equilibria_example3_audit(capsys):
    _, out, _ = run(capsys, "equilibria", "--config", "example3")
    # 0.38835023... rounds up at four places
    assert "R0 = 0.3884" in out
    assert "DEE = none" in out
    assert "audit" in out and "0.0139" in out


def test_equilibria_bilinear(capsys):
    _, out, _ = run(capsys, "equilibria", "--config", "bilinear")
    assert "R0 = 2.5000" in out
    assert "DEE = (2.00, 3.00, 5.00)" in out


def test_equilibria_machine_round_trip(capsys):
    _, out, _ = run(capsys, "equilibria", "--config", "bilinear", "--format", "machine")
    doc = json.loads(out)
    rep = EquilibriumReport.from_dict(doc)
    assert rep.dee == pytest.approx((2, 3, 5))
    assert rep.to_dict() == doc


def test_compare_example1(tmp_path, capsys):
    code, out, _ = run(capsys, "compare", "--config", "example1", "--out", str(tmp_path), "--format", "machine")
    assert code == EXIT_OK
    rows = {r["scheme"]: r for r in json.loads(out)["rows"]}
    assert rows["nsfd"]["min_component"] >= 0
    assert rows["euler"]["min_component"] < 0
    for scheme in ("nsfd", "euler", "rk2"):
        assert (tmp_path / f"example1_compare_{scheme}_dt2.5.csv").exists()


def test_compare_small_step_all_positive(tmp_path, capsys):
    code, out, _ = run(
        capsys, "compare", "--config", "example1", "--out", str(tmp_path),
        "--format", "machine", "--dt", "0.001", "--steps", "2000",
    )
    rows = json.loads(out)["rows"]
    assert all(r["min_component"] >= 0 and r["finite"] for r in rows)


def test_compare_zero_steps(tmp_path, capsys):
    _, out, _ = run(capsys, "compare", "--config", "example1", "--out", str(tmp_path), "--format", "machine", "--steps", "0")
    rows = json.loads(out)["rows"]
    assert {r["min_component"] for r in rows} == {100.0}


def test_convergence_example2(capsys):
    code, out, _ = run(capsys, "convergence", "--config", "example2", "--format", "machine")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert 0.8 <= doc["fitted_order"] <= 1.2
    assert all(e <= b for e, b in zip(doc["errors"], doc["bounds"]))
    code, out, _ = run(capsys, "convergence", "--config", "example2", "--scheme", "rk2")
    assert code == EXIT_OK
    assert "fitted order (rk2) = 2.0" in out or "fitted order (rk2) = 1.9" in out


def test_check_hypotheses(capsys):
    code, out, _ = run(capsys, "check-hypotheses", "--config", "example1", "--format", "machine")
    assert code == EXIT_OK
    assert set(json.loads(out)["verdicts"].values()) == {"pass"}


def test_phase_portrait_reaches_equilibrium(tmp_path, capsys):
    code, out, _ = run(capsys, "phase-portrait", "--config", "example2", "--out", str(tmp_path), "--format", "machine")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["target"] == "DFE" and len(doc["runs"]) == 8
    assert all(r["relative_distance"] <= 1e-3 for r in doc["runs"])
    assert len(list(tmp_path.glob("example2_portrait_x*.csv"))) == 8


def test_phase_portrait_random_starts_use_seed(tmp_path, capsys):
    outs = []
    for _ in range(2):
        _, out, _ = run(
            capsys, "phase-portrait", "--config", "bilinear", "--out", str(tmp_path),
            "--format", "machine", "--seed", "7", "--random-starts", "3",
        )
        outs.append(out)
    assert outs[0] == outs[1]
    assert len(json.loads(outs[0])["runs"]) == 11


def test_ring_states():
    pts = ring_states([0, 4, 0, 2], 8, 1.0)
    assert [(p.S, p.I) for p in pts] == [
        (0, 0), (2, 0), (4, 0), (4, 1), (4, 2), (2, 2), (0, 2), (0, 1),
    ]
    assert all(p.R == 1.0 for p in pts)
    assert len(ring_states([0, 4, 0, 2], 12, 0.0)) == 12


# --- determinism ----------------------------------------------------------------


def test_simulate_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        code, _, _ = run(capsys, "simulate", "--config", "example1", "--out", str(tmp_path / d))
        assert code == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    assert any(f.endswith(".csv") for f in files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_machine_artifacts_reparse(tmp_path, capsys):
    run(capsys, "simulate", "--config", "example2", "--out", str(tmp_path))
    for path in tmp_path.glob("*.json"):
        doc = json.loads(path.read_text())
        if path.name.endswith("_equilibria.json"):
            assert EquilibriumReport.from_dict(doc).to_dict() == {k: v for k, v in doc.items() if k != "audit"}
