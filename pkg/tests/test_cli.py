from __future__ import annotations

import json
import subprocess
import sys

import pytest

from dyncoal.cli import main
from dyncoal.harness import read_episodes, read_summary_csv


def test_run_writes_files(tmp_path, capsys):
    code = main(["run", "--policy", "greedy", "--seeds", "0", "--episodes", "2", "--horizon", "20",
                 "--out", str(tmp_path)])
    assert code == 0
    (summary,) = tmp_path.glob("*.summary.csv")
    (episodes,) = tmp_path.glob("*.episodes.ndjson")
    meta, rows = read_summary_csv(summary)
    head, recs = read_episodes(episodes)
    assert meta["prng"] == "numpy.PCG64" and meta["seeds"] == [0]
    assert meta["config"]["horizon"] == 20 and len(recs) == 2
    assert "greedy: mean" in capsys.readouterr().out


def test_run_flag_overrides(tmp_path):
    code = main(["run", "--policy", "random", "--seeds", "1", "--episodes", "1", "--width", "14",
                 "--task-setting", "2,1,0", "--spawn-p", "0.02", "--region", "homogeneous",
                 "--set", "horizon=5", "--set", "intent_anchor=robot", "--out", str(tmp_path)])
    assert code == 0
    meta, _ = read_summary_csv(next(tmp_path.glob("*.summary.csv")))
    cfg = meta["config"]
    assert cfg["width"] == 14 and cfg["task_setting"] == [2, 1, 0] and cfg["horizon"] == 5
    assert cfg["spawn"] == {"kind": "bernoulli", "p": 0.02} and cfg["intent_anchor"] == "robot"


def test_run_from_config_file(tmp_path):
    conf = tmp_path / "env.yaml"
    conf.write_text("preset: nonhomogeneous\nhorizon: 7\n")
    assert main(["run", "--config", str(conf), "--seeds", "0", "--episodes", "1",
                 "--out", str(tmp_path / "o")]) == 0
    meta, _ = read_summary_csv(next((tmp_path / "o").glob("*.summary.csv")))
    assert meta["config"]["horizon"] == 7


def test_bad_config_exits_2(tmp_path, capsys):
    assert main(["run", "--width", "2", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_ledger_dump(tmp_path):
    dump = tmp_path / "ledger.ndjson"
    assert main(["run", "--policy", "pcfa", "--seeds", "0", "--episodes", "1", "--horizon", "10",
                 "--ledger-dump", str(dump), "--out", str(tmp_path)]) == 0
    lines = dump.read_text().splitlines()
    assert lines and all({"t", "task_id", "coalition", "utilities"} <= set(json.loads(x)) for x in lines)


def test_eval_then_score(tmp_path, capsys):
    assert main(["eval", "--policy", "random", "--seeds", "0", "--episodes", "1", "--horizon", "10",
                 "--settings", "E1", "M2", "--out", str(tmp_path)]) == 0
    summary = tmp_path / "eval-random.summary.csv"
    _, rows = read_summary_csv(summary)
    ref = tmp_path / "ref.json"
    ref.write_text(json.dumps({r["setting"]: float(r["mean"]) for r in rows}))
    capsys.readouterr()
    assert main(["score", "--results", str(summary), "--reference", str(ref)]) == 0
    assert "score 1.000000" in capsys.readouterr().out
    ref.write_text(json.dumps({"E1": 1.0}))
    assert main(["score", "--results", str(summary), "--reference", str(ref)]) == 2
    assert main(["score", "--results", str(tmp_path / "missing.csv"), "--reference", str(ref)]) == 2


def test_sweep_small(tmp_path, capsys):
    assert main(["sweep", "--policy", "greedy", "--seeds", "0", "--episodes", "1", "--horizon", "10",
                 "--n-list", "10,40", "--out", str(tmp_path)]) == 0
    meta, rows = read_summary_csv(tmp_path / "sweep-greedy-0.1.csv")
    assert [int(r["width"]) for r in rows] == [10, 20] and "r2" in meta


def test_plan_debug(capsys):
    assert main(["plan-debug", "--start", "1,1", "--goal", "6,3", "--region", "homogeneous",
                 "--task-setting", "0,0,0", "--show-expansions"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["cost"] == 5 and out["path"][0] == [1, 1] and out["path"][-1] == [6, 3]
    assert out["expanded"] == len(out["expansions"]) > 0


def test_module_entry_point_bridge_over_stdio():
    # a client speaking the line protocol over the child's stdin/stdout
    from dyncoal.bridge import Transport, run_client

    proc = subprocess.Popen([sys.executable, "-m", "dyncoal", "bridge", "--horizon", "5",
                             "--seeds", "0", "--episodes", "2"],
                            stdin=subprocess.PIPE, stdout=subprocess.PIPE)
    t = Transport(proc.stdout.fileno(), proc.stdin.fileno())
    done = run_client(t, timeout=60)
    proc.stdin.close()
    assert proc.wait(60) == 0
    assert len(done) == 2 and all(d["valid"] for d in done)


def test_missing_command():
    with pytest.raises(SystemExit):
        main([])
