import json

import pytest

from unstable_qbc.decay import MONOENERGETIC, ParticleSpecies
from unstable_qbc.harness import (
    CSV_HEADER,
    ExperimentPlan,
    emit_csv,
    main,
    read_csv,
    run_plan,
    wilson_interval,
)
from unstable_qbc.protocol import CommitmentConfig

MONO = ParticleSpecies("mono", 10.0, 0.9, 782.0, 0.0, MONOENERGETIC)


def plan(strategies=("honest0",), n_values=(200,), trials=1, seed=0, **kw):
    return ExperimentPlan(CommitmentConfig(n=n_values[0] if n_values else 1, species=MONO), tuple(strategies), tuple(n_values), trials, seed, **kw)


def strip_wall(doc: str) -> dict:
    d = json.loads(doc)
    d.pop("wall_time_s")
    return d


def test_single_trial_record():
    rep = run_plan(plan())
    assert len(rep.trials) == 1
    assert rep.points[0].trials == 1


def test_plan_validation():
    with pytest.raises(ValueError, match="trials"):
        plan(trials=0)
    with pytest.raises(ValueError, match="n"):
        plan(n_values=(0,))
    with pytest.raises(ValueError):
        plan(strategies=("nope",))
    with pytest.raises(ValueError, match="switch"):
        plan(strategies=("switch01",), switch_time=2.5)


def test_same_seed_same_powers():
    p = plan(("honest1", "switch01"), (500, 1000), trials=3, seed=4)
    a, b = run_plan(p), run_plan(p)
    assert [x.power for x in a.points] == [x.power for x in b.points]
    assert strip_wall(a.to_json()) == strip_wall(b.to_json())


def test_honest0_never_rejected():
    rep = run_plan(plan(("honest0",), (10, 1000), trials=5))
    assert all(p.power == 0 for p in rep.points)


def test_powers_and_intervals_are_probabilities():
    rep = run_plan(plan(("honest1", "switch10"), (300,), trials=4))
    for p in rep.points:
        assert 0 <= p.ci_low <= p.power <= p.ci_high <= 1
        assert p.trials == 4


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0 and 0 < hi < 0.05
    lo, hi = wilson_interval(100, 100)
    assert hi == pytest.approx(1.0) and lo > 0.95


def test_csv_empty_sweep(tmp_path):
    out = tmp_path / "empty.csv"
    emit_csv(run_plan(plan(strategies=())), out)
    assert out.read_text().splitlines() == [",".join(CSV_HEADER)]


def test_csv_rows_and_round_trip(tmp_path):
    rep = run_plan(plan(("honest0", "switch10"), (50, 100, 200), trials=3))
    out = tmp_path / "r.csv"
    emit_csv(rep, out)
    rows = read_csv(out)
    assert len(rows) == 6
    for row, p in zip(rows, rep.points):
        assert row["strategy"] == p.strategy and int(row["N"]) == p.n
        assert int(row["trials"]) == p.trials and int(row["rejected"]) == p.rejected
        for key in ("power", "ci_low", "ci_high"):
            assert float(row[key]) == pytest.approx(getattr(p, key), rel=1e-11, abs=1e-15)


def test_serial_and_parallel_identical():
    p = plan(("honest1", "switch01", "fabricate"), (400,), trials=4, seed=7)
    serial = run_plan(p, workers=1)
    parallel = run_plan(p, workers=2)
    assert strip_wall(serial.to_json()) == strip_wall(parallel.to_json())


def test_json_schema():
    d = json.loads(run_plan(plan()).to_json())
    assert d["schema_version"] == 1
    assert {"plan", "points", "trials", "tool_version", "wall_time_s"} <= d.keys()


# -- CLI --------------------------------------------------------------------------


def test_cli_json(tmp_path):
    out = tmp_path / "r.json"
    code = main(["--n", "100", "--n", "200", "--strategy", "honest0", "--trials", "2", "--out", str(out)])
    assert code == 0
    d = json.loads(out.read_text())
    assert [p["n"] for p in d["points"]] == [100, 200]


def test_cli_csv(tmp_path):
    out = tmp_path / "r.csv"
    args = ["--n", "300", "--strategy", "switch10", "--strategy", "honest0", "--monoenergetic", "--alpha", "0.9"]
    assert main(args + ["--trials", "2", "--format", "csv", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 2


def test_cli_audit(capsys):
    assert main(["--audit-concealing", "2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert max(d["trace_distance"].values()) < 1e-12


def test_cli_config_errors(capsys):
    assert main(["--trials", "0"]) == 2
    assert "trials" in capsys.readouterr().err
    assert main(["--alpha", "3"]) == 2
    assert main(["--species", "unobtainium"]) == 2
    assert main(["--audit-concealing", "9"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["--strategy", "bogus"])
    assert exc.value.code == 2


def test_cli_io_error(tmp_path):
    assert main(["--n", "10", "--strategy", "honest0", "--trials", "1", "--out", str(tmp_path / "no" / "x.json")]) == 1
    assert main(["--species-file", str(tmp_path / "missing.json")]) == 1


def test_cli_species_file(tmp_path):
    f = tmp_path / "sp.json"
    f.write_text(json.dumps({"species": [{"name": "toy", "asymmetry": 0.8, "spectrum": "monoenergetic"}]}))
    out = tmp_path / "r.json"
    assert main(["--species-file", str(f), "--species", "toy", "--n", "100", "--trials", "1", "--strategy", "honest1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["plan"]["config"]["species"]["asymmetry"] == 0.8
