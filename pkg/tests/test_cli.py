import csv
import json

import pytest

from csqf.cli import main
from csqf.errors import ConfigError, MalformedAggregate
from csqf.experiment import (
    AGGREGATE_COLUMNS,
    ExperimentSpec,
    apply_preset,
    emit_plot_data,
    load_spec,
    run_experiment,
    spec_from_dict,
    write_rows,
)
from csqf.tabu import PAPER_PARAMS


def _write_spec(path, **kw):
    doc = {"topology": {"generator": "internet2"}, "traffic": {"flow_counts": [10]},
           "algorithms": ["naive"], "repetitions": 1, "seeds": [7]}
    doc.update(kw)
    path.write_text(json.dumps(doc))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_smoke_run(tmp_path, capsys):
    spec = _write_spec(tmp_path / "spec.json")
    assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "out")]) == 0
    (row,) = _rows(tmp_path / "out" / "aggregate.csv")
    assert list(row) == AGGREGATE_COLUMNS
    assert (row["algorithm"], row["flow_count"], row["scheduled_count"], row["verifier_violations"]) == \
        ("naive", "10", "10", "0")
    doc = json.loads((tmp_path / "out" / "runs" / "naive_n10_s7.json").read_text())
    assert len(doc["solutions"]) == 10 and doc["violations"] == []
    assert "wrote" in capsys.readouterr().out


def test_fault_injection_exits_with_violation(tmp_path, capsys):
    spec = _write_spec(tmp_path / "spec.json")
    rc = main(["run", "--spec", str(spec), "--out", str(tmp_path / "out"), "--inject-fault"])
    assert rc == 3
    out = capsys.readouterr().out
    assert "VIOLATION DeltaOutOfRange" in out
    (row,) = _rows(tmp_path / "out" / "aggregate.csv")
    assert row["verifier_violations"] != "0" and row["scheduled_count"] == "9"


def test_invalid_inputs_exit_2(tmp_path, capsys):
    assert main(["run", "--spec", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = _write_spec(tmp_path / "bad.json", repetitions=0)
    assert main(["run", "--spec", str(bad), "--out", str(tmp_path)]) == 2
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{nope")
    assert main(["run", "--spec", str(garbage), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--spec", "x", "--out", "y", "--algo", "greedy"])


def test_spec_validation(tmp_path):
    with pytest.raises(ConfigError):
        spec_from_dict({"algorithms": ["magic"]})
    with pytest.raises(ConfigError):
        spec_from_dict({"repetitions": 3, "seeds": [1]})
    with pytest.raises(ConfigError):
        spec_from_dict({"colour": "blue"})
    spec = spec_from_dict({"repetitions": 3, "master_seed": 5})
    assert len(spec.run_seeds()) == 3 and spec.run_seeds() == spec.run_seeds()


def test_presets():
    spec = ExperimentSpec(traffic={"flow_counts": [1000, 4000]})
    paper = apply_preset(spec, "paper")
    assert paper.tabu == PAPER_PARAMS and paper.config.t_cycle_us == 125 and paper.config.queue_len == 10
    desk = apply_preset(spec, "desk")
    assert desk.traffic["flow_counts"] == [125, 500] and desk.tabu.max_iterations == 100
    with pytest.raises(ConfigError):
        apply_preset(spec, "huge")


def test_variants_and_parallel_runs_match(tmp_path):
    spec = spec_from_dict({
        "traffic": {"flow_counts": [150]},
        "algorithms": ["cs", "focs", "tabu"],
        "repetitions": 2,
        "seeds": [1, 2],
        "config": {"queue_len": 2},
        "variants": [{"label": "3q"}, {"label": "6q", "queue_num": 6},
                     {"label": "L20N3", "queue_len": 20, "t_cycle_us": "auto"}],
    })
    a = run_experiment(spec, tmp_path / "a", jobs=1)
    b = run_experiment(spec, tmp_path / "b", jobs=2)
    assert (tmp_path / "a" / "aggregate_stable.csv").read_bytes() == (tmp_path / "b" / "aggregate_stable.csv").read_bytes()
    labels = [r["algorithm"] for r in a["rows"]]
    assert labels[:2] == ["cs-3q", "cs-3q"] and "focs-L20N3" in labels
    assert not a["violations"]
    log = (tmp_path / "a" / "logs" / "tabu-6q_n150_s1.log").read_text()
    assert log.startswith("iteration=") or log == ""
    doc = json.loads((tmp_path / "a" / "runs" / "tabu-3q_n150_s1.json").read_text())
    assert sorted(doc["best_order"]) == sorted(f["id"] for f in doc["flows"])
    l20 = json.loads((tmp_path / "a" / "runs" / "focs-L20N3_n150_s1.json").read_text())
    assert l20["config"]["t_cycle_us"] == 250 and l20["beta"] == 128


def _aggregate(path, rows):
    write_rows(path, rows, AGGREGATE_COLUMNS)
    return path


def _row(algo, n, count, max_us=10.0):
    return {"algorithm": algo, "seed": 1, "flow_count": n, "scheduled_count": count, "scheduled_pct": 0,
            "total_runtime_ms": 1.0, "p50_per_flow_us": 1.0, "p90_per_flow_us": 1.0,
            "max_per_flow_us": max_us, "verifier_violations": 0}


def _series(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_plot_data_bars(tmp_path):
    rows = [_row(a, n, n // 2) for a in ("naive", "fo", "cs", "focs") for n in (1000, 2000, 3000, 4000)]
    rows += [_row("cs-6q", 1000, 700), _row("focs-L10N6", 3000, 2400)]
    files = emit_plot_data(_aggregate(tmp_path / "aggregate.csv", rows), tmp_path / "plots")
    assert {p.name for p in files} >= {"scheduled_counts.csv", "exec_time_cdf.csv",
                                       "queue_number.csv", "memory_allocation.csv"}
    bars = [r for r in _series(tmp_path / "plots" / "scheduled_counts.csv")
            if r["series"] in ("naive", "fo", "cs", "focs")]
    assert len(bars) == 16
    assert [r["series"] for r in _series(tmp_path / "plots" / "queue_number.csv")] == ["cs-6q"]
    assert [r["series"] for r in _series(tmp_path / "plots" / "memory_allocation.csv")] == ["focs-L10N6"]


def test_plot_data_single_run_cdf(tmp_path):
    agg = _aggregate(tmp_path / "aggregate.csv", [_row("focs", 10, 10, max_us=42.0)])
    emit_plot_data(agg, tmp_path / "plots")
    (pt,) = _series(tmp_path / "plots" / "exec_time_cdf.csv")
    assert (pt["x"], pt["series"], float(pt["y"])) == ("42.0", "focs", 1.0)


def test_plot_data_errors(tmp_path):
    empty = _aggregate(tmp_path / "empty.csv", [])
    with pytest.raises(MalformedAggregate):
        emit_plot_data(empty, tmp_path / "p")
    (tmp_path / "bad.csv").write_text("algorithm,seed\nfocs,1\n")
    with pytest.raises(MalformedAggregate):
        emit_plot_data(tmp_path / "bad.csv", tmp_path / "p")
    with pytest.raises(MalformedAggregate):
        emit_plot_data(tmp_path / "nothing.csv", tmp_path / "p")
    assert main(["plot-data", "--aggregate", str(empty), "--out", str(tmp_path / "p")]) == 2


def test_gen_schedule_verify_roundtrip(tmp_path, capsys):
    t, f, c, s = (tmp_path / n for n in ("t.json", "f.json", "c.json", "s.json"))
    assert main(["gen", "topo", "er", "--n", "10", "--m", "14", "--seed", "3", "--out", str(t)]) == 0
    assert main(["gen", "flows", "--topo", str(t), "--count", "200", "--seed", "4", "--out", str(f)]) == 0
    c.write_text(json.dumps({"t_cycle_us": 125, "queue_len": 10, "queue_num": 3}))
    grid = tmp_path / "grid.csv"
    assert main(["schedule", "--topo", str(t), "--flows", str(f), "--config", str(c), "--out", str(s),
                 "--dump-grid", str(grid)]) == 0
    assert grid.read_text().startswith("edge,cycle_index,occupancy")
    report = tmp_path / "r.json"
    assert main(["verify", "--schedule", str(s), "--topo", str(t), "--config", str(c), "--report", str(report)]) == 0
    assert json.loads(report.read_text())["violations"] == []

    doc = json.loads(s.read_text())
    doc["solutions"][0]["deltas"][0] = 5
    s.write_text(json.dumps(doc))
    assert main(["verify", "--schedule", str(s), "--topo", str(t), "--config", str(c)]) == 3
    assert "VIOLATION" in capsys.readouterr().out


def test_schedule_with_tabu(tmp_path, capsys):
    t, f, c, s = (tmp_path / n for n in ("t.json", "f.json", "c.json", "s.json"))
    main(["gen", "topo", "internet2", "--out", str(t)])
    main(["gen", "flows", "--topo", str(t), "--count", "300", "--out", str(f)])
    c.write_text(json.dumps({"queue_len": 1, "t_cycle_us": 125}))
    assert main(["schedule", "--algo", "tabu", "--tabu-k", "5", "--tabu-p", "5", "--topo", str(t),
                 "--flows", str(f), "--config", str(c), "--out", str(s)]) == 0
    assert "iteration=1 " in capsys.readouterr().err
    assert len(json.loads(s.read_text())["order"]) == 300


def test_cli_overrides(tmp_path):
    spec = _write_spec(tmp_path / "spec.json", algorithms=["naive", "fo"])
    out = tmp_path / "o"
    assert main(["run", "--spec", str(spec), "--out", str(out), "--algo", "focs", "--seed", "3",
                 "--preset", "desk"]) == 0
    rows = _rows(out / "aggregate.csv")
    assert [r["algorithm"] for r in rows] == ["focs"]
    assert rows[0]["flow_count"] == "10"
    assert load_spec(spec).seeds == [7]
