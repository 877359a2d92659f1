"""Command-line driver: reproducibility, manifests, config, exit codes."""

import hashlib
import json
import subprocess
import sys

import pytest

from recomblab import cli
from recomblab.errors import NumericalInvariantError


def run_cli(args, cwd, env_extra=None):
    import os

    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "recomblab.cli", *args],
        cwd=cwd,
        env=env,
        capture_output=True,
        text=True,
    )


# -----------------------------------------------------------------------
# parsing units
# -----------------------------------------------------------------------


def test_grid_parsing():
    assert cli._parse_grid("-4..4") == [float(v) for v in range(-4, 5)]
    assert cli._parse_grid("0.5,0.25") == [0.5, 0.25]
    assert cli._parse_grid("3") == [3.0]
    with pytest.raises(Exception):
        cli._parse_grid("4..-4")


def test_negative_value_folding():
    argv = ["profile-discrete", "--lambda", "-4..4", "--n", "16"]
    folded = cli._join_negative_values(argv)
    assert "--lambda=-4..4" in folded
    assert "--n" in folded


def test_chunk_plan_is_worker_free_and_covers_total():
    for total in (1, 2, 9999, 10_000, 10_001, 25_000, 100_000):
        plan = cli._chunk_plan(total)
        assert sum(plan) == total
        assert all(size >= 1 for size in plan)
        # never a trailing singleton chunk (keeps per-chunk stats sane)
        if total >= 2:
            assert all(size >= 2 for size in plan[1:] or plan)


# -----------------------------------------------------------------------
# end-to-end runs
# -----------------------------------------------------------------------


def test_rerun_is_byte_identical(tmp_path):
    args = ["martingale", "--t", "2.5", "--samples", "400", "--seed", "77"]
    r1 = run_cli(args + ["--out-dir", str(tmp_path / "a")], tmp_path)
    r2 = run_cli(args + ["--out-dir", str(tmp_path / "b")], tmp_path)
    assert r1.returncode == 0 and r2.returncode == 0
    a = (tmp_path / "a" / "martingale.csv").read_bytes()
    b = (tmp_path / "b" / "martingale.csv").read_bytes()
    assert a == b


def test_worker_count_does_not_change_output(tmp_path):
    base = ["martingale", "--t", "2.0", "--samples", "25000", "--seed", "5"]
    r1 = run_cli(base + ["--workers", "1", "--out-dir", str(tmp_path / "w1")], tmp_path)
    r4 = run_cli(base + ["--workers", "4", "--out-dir", str(tmp_path / "w4")], tmp_path)
    assert r1.returncode == 0 and r4.returncode == 0
    assert (tmp_path / "w1" / "martingale.csv").read_bytes() == (
        tmp_path / "w4" / "martingale.csv"
    ).read_bytes()


def test_manifest_records_checksums_and_parameters(tmp_path):
    out = tmp_path / "run"
    r = run_cli(
        ["profile-discrete", "--n", "64", "--lambda", "-2..2", "--out-dir", str(out)],
        tmp_path,
    )
    assert r.returncode == 0
    manifest = json.loads((out / "profile_discrete_manifest.json").read_text())
    assert manifest["command"] == "profile-discrete"
    assert manifest["stream_algorithm"] == "pcg64:seedseq-spawnkey-v1"
    assert manifest["exit_status"] == 0
    assert manifest["parameters"]["n"] == 64
    assert manifest["parameters"]["lambda_grid"] == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert manifest["wall_seconds"] >= 0
    (entry,) = manifest["outputs"]
    blob = (out / entry["file"]).read_bytes()
    assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
    assert entry["bytes"] == len(blob)
    header = blob.decode().splitlines()[0]
    assert header == "lambda,s,tv_exact,phi_s,upper_bound"


def test_profile_continuous_csv_shape(tmp_path):
    out = tmp_path / "pc"
    r = run_cli(
        [
            "profile-continuous",
            "--lambda",
            "-1..1",
            "--samples",
            "500",
            "--seed",
            "3",
            "--out-dir",
            str(out),
        ],
        tmp_path,
    )
    assert r.returncode == 0
    lines = (out / "profile_continuous.csv").read_text().splitlines()
    assert lines[0] == "lambda,scale,tv,upper,lower"
    # upper/lower bounds are not defined here: cells stay empty
    assert lines[1].endswith(",,")


def test_config_file_fills_missing_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nn = 4\nstart = mono\nsteps = 3\n")
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    r1 = run_cli(
        ["evolve-discrete", "--config", str(cfg), "--steps", "6", "--out-dir", str(out1)],
        tmp_path,
    )
    r2 = run_cli(
        ["evolve-discrete", "--n", "4", "--start", "mono", "--steps", "6", "--out-dir", str(out2)],
        tmp_path,
    )
    assert r1.returncode == 0 and r2.returncode == 0
    assert (out1 / "evolved_discrete.csv").read_bytes() == (
        out2 / "evolved_discrete.csv"
    ).read_bytes()


def test_unknown_config_key_is_rejected(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n = 4\nbogus = 1\n")
    r = run_cli(["evolve-discrete", "--config", str(cfg)], tmp_path)
    assert r.returncode == 2
    assert "bogus" in r.stderr


def test_env_var_sets_output_dir(tmp_path):
    target = tmp_path / "envout"
    r = run_cli(
        ["collide", "--n", "2", "--a", "mono", "--b", "uniform"],
        tmp_path,
        env_extra={"RECOMBLAB_OUT_DIR": str(target)},
    )
    assert r.returncode == 0
    assert (target / "collide.csv").exists()


def test_flag_overrides_env_var(tmp_path):
    flag_dir = tmp_path / "flagged"
    r = run_cli(
        ["collide", "--n", "2", "--a", "mono", "--b", "mono", "--out-dir", str(flag_dir)],
        tmp_path,
        env_extra={"RECOMBLAB_OUT_DIR": str(tmp_path / "ignored")},
    )
    assert r.returncode == 0
    assert (flag_dir / "collide.csv").exists()
    assert not (tmp_path / "ignored").exists()


# -----------------------------------------------------------------------
# exit codes
# -----------------------------------------------------------------------


def test_missing_required_flag_exits_2(tmp_path):
    r = run_cli(["martingale", "--t", "1.0", "--samples", "10"], tmp_path)
    assert r.returncode == 2
    assert "--seed" in r.stderr


def test_capacity_violation_exits_3_and_is_recorded(tmp_path):
    out = tmp_path / "cap"
    r = run_cli(
        ["collide", "--n", "30", "--a", "mono", "--b", "mono", "--out-dir", str(out)],
        tmp_path,
    )
    assert r.returncode == 3
    manifest = json.loads((out / "collide_manifest.json").read_text())
    assert manifest["exit_status"] == 3
    assert len(manifest["capacity_events"]) == 1


def test_numerical_violation_exits_4(tmp_path, monkeypatch):
    # no stock input trips the integrator box check, so inject a command
    # body that raises and confirm the dispatcher's mapping and manifest
    def boom(ns, ctx):
        raise NumericalInvariantError("synthetic breach")

    real_build = cli.build_parser

    def patched_build():
        parser = real_build()
        for action in parser._actions:
            if hasattr(action, "choices") and isinstance(action.choices, dict):
                for sub in action.choices.values():
                    sub.set_defaults(fn=boom)
        return parser

    monkeypatch.setattr(cli, "build_parser", patched_build)
    status = cli.main(
        ["evolve-discrete", "--n", "2", "--start", "mono", "--steps", "1",
         "--out-dir", str(tmp_path)]
    )
    assert status == 4
    manifest = json.loads((tmp_path / "evolve_discrete_manifest.json").read_text())
    assert manifest["exit_status"] == 4


def test_bad_value_exits_2(tmp_path):
    r = run_cli(["evolve-discrete", "--n", "x", "--start", "mono", "--steps", "1"], tmp_path)
    assert r.returncode == 2


def test_selftest_exit_reflects_registry(tmp_path, monkeypatch):
    # the real registry runs in the acceptance tests; here only the wiring:
    # nonzero exit when any criterion fails, zero when all pass
    from recomblab.acceptance import CriterionResult

    def fake_run_all(seed, printer=print):
        results = [
            CriterionResult(1, "alpha", True, "ok", 0.0, {}),
            CriterionResult(2, "beta", False, "broken", 0.0, {}),
        ]
        for r in results:
            printer(r.line)
        return results

    monkeypatch.setattr(cli, "run_all", fake_run_all)
    status = cli.main(["selftest", "--out-dir", str(tmp_path)])
    assert status == 1
    lines = (tmp_path / "selftest.csv").read_text().splitlines()
    assert lines[0] == "criterion,slug,passed,seconds,summary"
    assert lines[2].startswith("2,beta,0,")

    monkeypatch.setattr(
        cli,
        "run_all",
        lambda seed, printer=print: [CriterionResult(1, "alpha", True, "ok", 0.0, {})],
    )
    assert cli.main(["selftest", "--out-dir", str(tmp_path)]) == 0
