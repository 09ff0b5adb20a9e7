import json

import pytest

from freqcache import cli, freq_stats


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def gen_small_trace(capsys, tmp_path, num_ids=20_000, samples=4000):
    path = tmp_path / "trace.csv"
    code, _, _ = run_cli(
        capsys,
        "gen-trace", "--preset", "criteo_like", "--num-ids", str(num_ids),
        "--samples", str(samples), "--seed", "3", "--out", str(path),
    )
    assert code == 0
    return path


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--frobnicate"])
    assert exc.value.code == 2


def test_gen_trace_then_stats_prints_head_coverage(capsys, tmp_path):
    trace_path = gen_small_trace(capsys, tmp_path)
    out_path = tmp_path / "stats.bin"
    code, out, _ = run_cli(
        capsys,
        "stats", "--trace", str(trace_path), "--num-ids", "20000", "--out", str(out_path),
    )
    assert code == 0
    assert "head_coverage(0.0014)" in out
    line = [l for l in out.splitlines() if "head_coverage(0.0014)" in l][0]
    assert 0.85 <= float(line.split("=")[1]) <= 0.95
    table = freq_stats.load_table(out_path)
    assert table.num_ids == 20_000


def test_stats_sample_rate_one_identical_output(capsys, tmp_path):
    trace_path = gen_small_trace(capsys, tmp_path, num_ids=2000, samples=500)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    assert run_cli(capsys, "stats", "--trace", str(trace_path), "--num-ids", "2000",
                   "--out", str(a))[0] == 0
    assert run_cli(capsys, "stats", "--trace", str(trace_path), "--num-ids", "2000",
                   "--sample-rate", "1.0", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_stats_missing_file_names_path(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, "stats", "--trace", str(tmp_path / "nope.csv"), "--num-ids", "10",
        "--out", str(tmp_path / "x.bin"),
    )
    assert code == 1
    assert "nope.csv" in err


def test_simulate_inline_flags_writes_metrics(capsys, tmp_path):
    out = tmp_path / "metrics.json"
    code, _, err = run_cli(
        capsys,
        "simulate", "--exponent", "1.3", "--num-ids", "1000", "--features", "2",
        "--batches", "20", "--batch-size", "8", "--dim", "8",
        "--cache-ratio", "0.05", "--seed", "1", "--out", str(out),
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert 0.0 <= doc["summary"]["hit_ratio"] <= 1.0
    assert doc["config"]["cache_ratio"] == 0.05
    assert doc["tool_version"] == cli.TOOL_VERSION
    assert "hit_ratio=" in err


def test_simulate_full_cache_hits_everything(capsys, tmp_path):
    out = tmp_path / "m.json"
    code, _, _ = run_cli(
        capsys,
        "simulate", "--exponent", "1.3", "--num-ids", "500", "--features", "2",
        "--batches", "10", "--batch-size", "8", "--dim", "4",
        "--cache-ratio", "1.0", "--seed", "1", "--out", str(out),
    )
    assert code == 0
    assert json.loads(out.read_text())["summary"]["hit_ratio"] == 1.0


def test_simulate_invalid_cache_ratio_usage_error(capsys):
    code, _, err = run_cli(capsys, "simulate", "--cache-ratio", "0")
    assert code == 2
    assert "cache_ratio" in err


def test_config_file_with_flag_override(capsys, tmp_path):
    cfg = {
        "preset": None, "exponent": 1.3, "num_ids": 800, "features": 2,
        "num_batches": 10, "batch_size": 8, "embedding_dim": 4,
        "cache_ratio": 0.05, "seed": 9,
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "m.json"
    code, _, _ = run_cli(
        capsys, "simulate", "--config", str(cfg_path), "--cache-ratio", "0.2",
        "--out", str(out),
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["cache_ratio"] == 0.2  # flag wins
    assert doc["config"]["num_ids"] == 800  # file value kept


def test_config_file_unknown_key_usage_error(capsys, tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"cache_ratios": [0.1]}))
    code, _, err = run_cli(capsys, "simulate", "--config", str(cfg_path))
    assert code == 2
    assert "unknown config keys" in err


def test_sweep_emits_summaries_and_csv(capsys, tmp_path):
    out = tmp_path / "sweep.json"
    csv_path = tmp_path / "per_batch.csv"
    code, _, err = run_cli(
        capsys,
        "sweep", "--exponent", "1.3", "--num-ids", "1000", "--features", "2",
        "--batches", "15", "--batch-size", "8", "--dim", "4", "--seed", "2",
        "--cache-ratios", "0.02,0.05,0.2", "--out", str(out),
        "--per-batch-csv", str(csv_path),
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["runs"]) == 3
    assert doc["cache_ratios"] == [0.02, 0.05, 0.2]
    assert err.count("hit_ratio=") == 3
    header = csv_path.read_text().splitlines()[0]
    assert header.startswith("run,cache_ratio,policy,batch")


def test_compare_emits_ranking(capsys, tmp_path):
    out = tmp_path / "cmp.json"
    code, _, err = run_cli(
        capsys,
        "compare", "--exponent", "1.3", "--num-ids", "1000", "--features", "2",
        "--batches", "15", "--batch-size", "8", "--dim", "4", "--seed", "2",
        "--cache-ratio", "0.05", "--policies", "freq_lfu,lru", "--out", str(out),
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert set(doc["ranking"]) == {"freq_lfu", "lru"}
    assert "ranking" in err


def test_compare_unknown_policy_usage_error(capsys):
    code, _, err = run_cli(capsys, "compare", "--policies", "belady")
    assert code == 2


def test_verify_exits_zero_on_clean_run(capsys, tmp_path):
    out = tmp_path / "verify.json"
    code, _, err = run_cli(
        capsys,
        "verify", "--exponent", "1.3", "--num-ids", "600", "--features", "2",
        "--batches", "12", "--batch-size", "8", "--dim", "4",
        "--cache-ratio", "0.05", "--seed", "3", "--out", str(out),
    )
    assert code == 0
    assert "passed" in err
    assert json.loads(out.read_text())["summary"]["oracle"]["ok"] is True
