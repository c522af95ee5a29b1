import json
import os
import subprocess

import pytest

import rdmpc


def test_battery_and_prices():
    assert rdmpc.ocv(1.0) == 2.5651
    assert rdmpc.battery_current(rdmpc.ocv(0.5), 10.0, 1.5) == pytest.approx(1.9119, abs=1e-4)
    assert rdmpc.price_at(16.0) == (275.0, 15.0)
    with pytest.raises(rdmpc.Error):
        rdmpc.ocv(0.0)


def test_scenarios():
    sc = rdmpc.attack_scenarios([10.0, 0.0], [2.0, 0.0])
    assert [s[0] for s in sc] == [10.0, 8.0, 12.0]


def test_bad_config():
    with pytest.raises(rdmpc.ConfigError):
        rdmpc.ExperimentConfig.from_json('{"bogus": 1}')


def test_short_run():
    cfg = rdmpc.ExperimentConfig.paper_default()
    cfg.duration_h = 0.5
    cfg.horizon_h = 1.0
    res = rdmpc.run_experiment(cfg)
    assert [r.grid for r in res.summary] == [1, 2, 3]
    assert all(r.violations == 0 for r in res.summary)
    assert len(res.traces[0].soc) == 2
    assert res.traces[0].csv().startswith("step,time_h,soc,p_g,p_m,p_tr_2,p_tr_3,")


@pytest.mark.skipif("RDMPC_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_roundtrip(tmp_path):
    cfg = json.loads(rdmpc.ExperimentConfig.paper_default().to_json())
    cfg["duration_h"] = 0.5
    cfg["horizon_h"] = 1.0
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    cli = os.environ["RDMPC_CLI"]
    subprocess.run([cli, "simulate", "--config", str(path), "--seed", "4", "--out", str(out)],
                   check=True, capture_output=True)
    assert (out / "trace_1.csv").exists()
    rows = rdmpc.read_summary(str(out))
    assert len(rows) == 3
    rep = subprocess.run([cli, "report", "--in", str(out)], check=True, capture_output=True, text=True)
    assert "total_cost" in rep.stdout
    bad = subprocess.run([cli, "simulate", "--config", str(tmp_path / "missing.json")], capture_output=True)
    assert bad.returncode != 0
