import json

import pytest

from redag.cli import main
from redag.model import DagSpec, Task, Workload
from redag.workload_file import save_workload


@pytest.fixture
def wfile(tmp_path):
    path = tmp_path / "w.json"
    assert main(["gen", "--preset", "multi_baseline", "--seed", "7", "-o", str(path)]) == 0
    return path


def test_gen_is_deterministic(tmp_path, wfile, capsys):
    other = tmp_path / "w2.json"
    main(["gen", "--preset", "multi_baseline", "--seed", "7", "-o", str(other)])
    assert wfile.read_bytes() == other.read_bytes()
    doc = json.loads(wfile.read_text())
    assert doc["provenance"]["spec"]["target_utilization"] == 0.8
    assert "U=0.80" in capsys.readouterr().out


def test_gen_overload_warns_but_writes(tmp_path, capsys):
    out = tmp_path / "o.json"
    assert main(["gen", "--utilization", "1.5", "--workers", "1", "-o", str(out)]) == 0
    assert "warning" in capsys.readouterr().err
    assert out.exists()


def test_gen_infeasible_is_input_error(tmp_path):
    code = main(["gen", "--utilization", "5", "--dags", "1", "--tasks-per-dag", "2", "-o", str(tmp_path / "x")])
    assert code == 1


def test_run_writes_artifacts_and_validates(tmp_path, wfile, capsys):
    out = tmp_path / "runs"
    assert main(["run", str(wfile), "--workers", "4", "--horizon-us", "500000", "--trace", "--out", str(out)]) == 0
    line = capsys.readouterr().out
    assert "MR=0.0000" in line and "p99_us=" in line
    (run_dir,) = out.iterdir()
    names = {p.name for p in run_dir.iterdir()}
    assert {"jobs.csv", "metrics.csv", "cdf.csv", "trace.jsonl", "response_cdf.png"} <= names
    assert main(["validate", str(run_dir / "trace.jsonl"), str(wfile)]) == 0
    assert "all_enforced = 1" in capsys.readouterr().out


def test_run_is_reproducible(tmp_path, wfile):
    args = ["run", str(wfile), "--policy", "fifo-multi", "--horizon-us", "300000", "--no-plots"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    (a,) = (tmp_path / "a").iterdir()
    (b,) = (tmp_path / "b").iterdir()
    assert a.name == b.name
    for name in ("jobs.csv", "metrics.csv", "cdf.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_run_overloaded_has_misses(tmp_path, capsys):
    path = tmp_path / "over.json"
    save_workload(Workload((DagSpec(1, (Task(1, 1, 3, 4, 4), Task(2, 1, 3, 6, 6))),)), path)
    assert main(["run", str(path), "--workers", "1", "--no-plots", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "MR=0.0000" not in out


def test_validate_forged_trace(tmp_path, capsys):
    path = tmp_path / "cap.json"
    save_workload(Workload((DagSpec(1, (Task(1, 1, 2, 10, 10), Task(2, 1, 2, 10, 10)), (), 1),)), path)
    trace = tmp_path / "t.jsonl"
    trace.write_text("\n".join(json.dumps(e) for e in [
        {"timestamp_us": 0, "kind": "Dispatch", "task_id": 1, "instance": 0, "worker": 0},
        {"timestamp_us": 0, "kind": "Dispatch", "task_id": 2, "instance": 0, "worker": 1},
    ]) + "\n")
    assert main(["validate", str(trace), str(path)]) != 0
    assert "violation t=0us dag=1 running=2" in capsys.readouterr().out
    trace.write_text('{"timestamp_us": 0, "kind": "Complete", "task_id": 1, "instance": 0}\n')
    assert main(["validate", str(trace), str(path)]) == 1


def test_analyze_exit_codes(tmp_path, capsys):
    ok = tmp_path / "ok.json"
    save_workload(Workload((DagSpec(1, (Task(1, 1, 1, 4, 4), Task(2, 1, 2, 6, 6), Task(3, 1, 3, 12, 12))),)), ok)
    assert main(["analyze", str(ok), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [t["response_us"] for t in doc["tasks"]] == [1, 3, 10]
    assert doc["overall"] == "AllSchedulable"
    bad = tmp_path / "bad.json"
    save_workload(Workload((DagSpec(1, (Task(1, 1, 3, 4, 4), Task(2, 1, 3, 6, 6))),)), bad)
    assert main(["analyze", str(bad)]) == 2
    assert "SomeUnschedulable" in capsys.readouterr().out


def test_input_errors(tmp_path):
    assert main(["analyze", str(tmp_path / "missing.json")]) == 1
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["run", str(broken)]) == 1


def test_compare(tmp_path, wfile, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", str(wfile), "--horizon-us", "300000", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("policy,workers,jobs")
    (d,) = out.iterdir()
    names = {p.name for p in d.iterdir()}
    assert {"compare.csv", "cdf_redag.csv", "response_cdf.png", "policy_comparison.png"} <= names


def test_sweep(tmp_path, capsys):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({
        "base": {"preset": "sweep_default", "tasks_per_dag": 4, "target_utilization": 1.5},
        "seeds": [0], "worker_counts": [2, 4], "deadline_scales": [1.0],
        "concurrency_pairs": [[1, 1], [2, 2]], "horizon": 100000,
    }))
    assert main(["sweep", str(cfg), "--out", str(tmp_path / "s")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("sweep: 4 rows")
    assert "errors=0 all_enforced=4/4" in out
    (d,) = (tmp_path / "s").iterdir()
    names = {p.name for p in d.iterdir()}
    assert {"results.csv", "mr_vs_workers.csv", "cap_heatmap.csv", "mr_vs_workers.png", "cap_heatmap.png"} <= names
