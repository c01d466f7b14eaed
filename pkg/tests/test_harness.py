import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from parr.checkpoint import load_checkpoint, save_checkpoint
from parr.cli import main
from parr.config import ConfigError, RunConfig, dump_config, from_dict, read_config
from parr.experiments import BENCH_HEADER
from parr.metrics import METRICS_HEADER, MetricsRow, first_successes, read_jsonl, read_metrics, write_metrics
from parr.nn import CheckpointError
from parr.training import Trainer

from conftest import instrument

SMOKE = {
    "env": {"name": "keydoor", "width": 5, "height": 5, "key": [4, 4], "door": [0, 4], "step_limit": 40},
    "agent": {"burn_in": 200, "refresh_interval": 50, "capacity": 1024, "hidden": [16, 16], "batch_size": 16},
    "novelty": {"outputs": 8, "fixed_hidden": [16], "predictor_hidden": [16, 16], "epochs": 1},
    "run": {"total_steps": 600, "eval_episodes": 2, "seed": 4},
    "equivalence": {"train_steps": 200},
    "bench": {"sizes": [256, 512, 1024], "repeats": 3},
}


@pytest.fixture
def smoke_path(tmp_path):
    path = tmp_path / "smoke.yaml"
    path.write_text(yaml.safe_dump(SMOKE, sort_keys=False))
    return path


def smoke_config(**run) -> RunConfig:
    cfg = from_dict(SMOKE)
    for k, v in run.items():
        setattr(cfg.run, k, v)
    return cfg


# --- config ----------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = from_dict(SMOKE)
    assert cfg.agent.hidden == (16, 16) and cfg.novelty.fixed_hidden == (16,)
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert read_config(path) == cfg


def test_config_missing_key_named(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("env:\n  name: keydoor\nrun:\n  seed: 1\n")
    with pytest.raises(ConfigError, match=r"line 3: missing required key run\.total_steps"):
        read_config(path)


def test_config_unknown_key_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("env:\n  name: keydoor\n  colour: red\nrun:\n  total_steps: 5\n")
    with pytest.raises(ConfigError, match=r"line 3: unknown key env\.colour"):
        read_config(path)


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        from_dict({**SMOKE, "agent": {"gamma": 1.5}})
    with pytest.raises(ConfigError, match="unknown section"):
        from_dict({**SMOKE, "extras": {}})


# --- metrics ---------------------------------------------------------------

def test_metrics_header_and_round_trip(tmp_path):
    rows = [MetricsRow(1, 200, 0, 0.0, 0.5, 3.25, 0.125, 0.75, float("nan"), 0.0),
            MetricsRow(2, 400, 50, 1.0, 0.4, 2.5, 0.1, 0.5, 0.01, 0.0)]
    path = tmp_path / "m.csv"
    write_metrics(rows, path)
    assert path.read_text().splitlines()[0] == ",".join(METRICS_HEADER)
    back = read_metrics(path)
    assert back[1] == rows[1] and np.isnan(back[0].loss_ma)


def test_first_successes():
    rows = [MetricsRow(i, 100 * i, 0, float(i % 2), 0, 0, 1, 0, 0, 0) for i in range(1, 8)]
    s = first_successes(rows, 1.0, k=3)
    assert (s["first_refresh"], s["kth_refresh"], s["successes"]) == (1, 5, 4)
    assert first_successes(rows, 2.0)["first_env_steps"] is None


# --- determinism and checkpoints ------------------------------------------

def test_runs_are_deterministic():
    a, b = Trainer(smoke_config()), Trainer(smoke_config())
    instrument(a.agent)
    a.run(), b.run()
    assert [r.cells() for r in a.rows] == [r.cells() for r in b.rows]
    assert a.agent.replay.dump() == b.agent.replay.dump()


def test_checkpoint_resume_is_transparent(tmp_path):
    straight = Trainer(smoke_config())
    straight.run()

    first = Trainer(smoke_config())
    first.run(total_steps=333)
    save_checkpoint(first, tmp_path / "ck.bin")
    resumed = load_checkpoint(tmp_path / "ck.bin")
    instrument(resumed.agent)
    resumed.run()

    assert [r.cells() for r in resumed.rows] == [r.cells() for r in straight.rows]
    assert resumed.agent.online.checksum() == straight.agent.online.checksum()
    assert resumed.agent.replay.dump() == straight.agent.replay.dump()
    assert resumed.agent.rng_act.bit_generator.state == straight.agent.rng_act.bit_generator.state


def test_checkpoint_snapshot_mode_round_trip(tmp_path):
    cfg = smoke_config(total_steps=300)
    cfg.agent.mode = "snapshot_new"
    t = Trainer(cfg)
    t.run()
    save_checkpoint(t, tmp_path / "ck.bin")
    back = load_checkpoint(tmp_path / "ck.bin")
    assert back.agent.snapshot.checksum() == t.agent.snapshot.checksum()
    assert back.agent.novelty.sigma == t.agent.novelty.sigma


def test_checkpoint_corruption_detected(tmp_path):
    t = Trainer(smoke_config(total_steps=250))
    t.run()
    path = tmp_path / "ck.bin"
    save_checkpoint(t, path)
    data = bytearray(path.read_bytes())
    data[-5] ^= 0xFF
    (tmp_path / "bad.bin").write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(tmp_path / "bad.bin")
    (tmp_path / "magic.bin").write_bytes(b"NOTACKPT" + bytes(data[8:]))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "magic.bin")
    data[8] = 99  # version field
    (tmp_path / "ver.bin").write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "ver.bin")


# --- command line ----------------------------------------------------------

def test_cli_train_writes_outputs(smoke_path, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(smoke_path), "--out", str(out)]) == 0
    rows = read_metrics(out / "metrics.csv")
    assert len(rows) >= 2
    assert len(read_jsonl(out / "refresh_reports.jsonl")) == len(rows)
    assert (out / "checkpoint.bin").exists() and (out / "config.yaml").exists()


def test_cli_train_byte_identical(smoke_path, tmp_path):
    for name in ("a", "b"):
        assert main(["train", "--config", str(smoke_path), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()


def test_cli_resume_matches_straight_run(smoke_path, tmp_path):
    assert main(["train", "--config", str(smoke_path), "--out", str(tmp_path / "s")]) == 0
    assert main(["train", "--config", str(smoke_path), "--out", str(tmp_path / "r"), "--stop-at", "300"]) == 0
    assert len(read_metrics(tmp_path / "r" / "metrics.csv")) < len(read_metrics(tmp_path / "s" / "metrics.csv"))
    assert main(["train", "--resume", "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "s" / "metrics.csv").read_bytes() == (tmp_path / "r" / "metrics.csv").read_bytes()


def test_cli_seed_override(smoke_path, tmp_path):
    main(["train", "--config", str(smoke_path), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(smoke_path), "--out", str(tmp_path / "b"), "--seed-override", "9"])
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()
    assert read_config(tmp_path / "b" / "config.yaml").run.seed == 9


def test_cli_missing_key_exit(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("env:\n  name: keydoor\nrun:\n  seed: 1\n")
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "run.total_steps" in capsys.readouterr().err


def test_cli_missing_checkpoint(tmp_path, capsys):
    assert main(["evaluate", "--out", str(tmp_path / "nothing")]) == 2
    assert capsys.readouterr().err


def test_cli_evaluate(smoke_path, tmp_path, capsys):
    out = tmp_path / "run"
    main(["train", "--config", str(smoke_path), "--out", str(out)])
    capsys.readouterr()
    assert main(["evaluate", "--out", str(out)]) == 0
    assert "mean greedy return" in capsys.readouterr().out


def test_cli_equivalence(smoke_path, tmp_path, capsys):
    cfg = dict(SMOKE, agent={**SMOKE["agent"], "beta": 0.0})
    path = tmp_path / "eq.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["equivalence", "--config", str(path), "--out", str(tmp_path / "eq")]) == 0
    lines = (tmp_path / "eq" / "equivalence.csv").read_text().splitlines()
    assert lines[0] == "train_step,max_abs_weight_deviation" and len(lines) == 201
    # beta > 0 is refused
    assert main(["equivalence", "--config", str(smoke_path), "--out", str(tmp_path / "eq2")]) == 2
    assert "beta" in capsys.readouterr().err


def test_cli_equivalence_negative_control(tmp_path):
    cfg = dict(SMOKE, agent={**SMOKE["agent"], "beta": 0.0}, equivalence={"train_steps": 50, "mismatch_seeds": True})
    path = tmp_path / "eq.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["equivalence", "--config", str(path), "--out", str(tmp_path / "eq")]) == 1


def test_cli_refresh_bench(smoke_path, tmp_path):
    assert main(["refresh-bench", "--config", str(smoke_path), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "refresh_bench.csv").read_text().splitlines()
    assert lines[0].split(",") == BENCH_HEADER
    rows = [dict(zip(BENCH_HEADER, map(float, ln.split(",")))) for ln in lines[1:]]
    assert [r["size"] for r in rows] == [256, 512, 1024]
    for r in rows:
        phases = sum(v for k, v in r.items() if k not in ("size", "total_ms"))
        assert phases == pytest.approx(r["total_ms"], rel=0.05)
    assert rows[-1]["total_ms"] > rows[0]["total_ms"]


def test_cli_compare_modes(smoke_path, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare-modes", "--config", str(smoke_path), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "online_new" in printed and "snapshot_new" in printed
    for name in ("metrics_online_new.csv", "metrics_snapshot_new.csv", "compare_metrics.csv",
                 "compare_summary.csv", "boundary_check.log"):
        assert (out / name).exists(), name
    log = (out / "boundary_check.log").read_text()
    assert log.startswith("first_post_refresh_record_identical True")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "parr", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("train", "evaluate", "compare-modes", "equivalence", "refresh-bench"):
        assert cmd in res.stdout


@pytest.mark.parametrize("name", ["smoke", "keydoor", "chain", "equivalence"])
def test_shipped_configs_parse(name):
    cfg = read_config(Path(__file__).resolve().parents[1] / "configs" / f"{name}.yaml")
    assert cfg.run.total_steps >= 0
