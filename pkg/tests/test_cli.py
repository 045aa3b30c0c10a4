"""Command-line driver: flags, exit codes, outputs, determinism."""

import json
import shutil
from pathlib import Path

import pytest

from seer import cli, ir

CORPUS = Path("src/seer/corpus")


@pytest.fixture()
def work(tmp_path):
    src = tmp_path / "motivating.seer"
    shutil.copy(CORPUS / "motivating.seer", src)
    return tmp_path


def run(argv):
    return cli.main(argv)


def sched_file(tmp_path, f=10, g=100, h=1):
    path = tmp_path / "sched.json"
    path.write_text(json.dumps({"latency": {"f": f, "g": g, "h": h}}))
    return str(path)


def test_opt_writes_outputs_and_succeeds(work):
    out = work / "out"
    code = run(["opt", str(work / "motivating.seer"),
                "--sched", sched_file(work), "--out", str(out),
                "--runs", "50", "--iters", "10"])
    assert code == 0
    assert (out / "motivating.opt.seer").exists()
    report = json.loads((out / "motivating.report.json").read_text())
    assert report["validation"]["equivalent"] is True
    assert report["modeled_cycles_after"] < report["modeled_cycles_before"]
    assert report["egraph"]["elapsed_ms"] is None  # deterministic output
    # proof chain emitted
    steps = sorted((out / "motivating_proof").glob("step_*.seer"))
    assert len(steps) == report["chain_len"] >= 2


def test_opt_output_parses_and_verifies(work):
    out = work / "out"
    assert run(["opt", str(work / "motivating.seer"), "--sched", sched_file(work),
                "--out", str(out), "--runs", "20", "--iters", "10"]) == 0
    optimized = out / "motivating.opt.seer"
    ir.parse_program(optimized.read_bytes())
    code = run(["verify", str(work / "motivating.seer"), str(optimized),
                "--runs", "50"])
    assert code == 0


def test_opt_both_disables_is_config_error(work):
    code = run(["opt", str(work / "motivating.seer"),
                "--disable-control", "--disable-datapath"])
    assert code == 1


def test_opt_missing_file_is_usage_error(tmp_path):
    assert run(["opt", str(tmp_path / "nope.seer")]) == 1


def test_opt_disable_datapath_reproduces_ablation(tmp_path):
    src = tmp_path / "seq_loops.seer"
    shutil.copy(CORPUS / "seq_loops.seer", src)
    out = tmp_path / "out"
    code = run(["opt", str(src), "--sched", sched_file(tmp_path),
                "--disable-datapath", "--out", str(out), "--runs", "20",
                "--iters", "10"])
    assert code == 0
    optimized = ir.parse_program((out / "seq_loops.opt.seer").read_bytes())
    original = ir.parse_program(src.read_bytes())
    assert optimized == original  # fusion rejected on the non-affine index


def test_determinism_byte_identical_outputs(work):
    outs = []
    for name in ("a", "b"):
        out = work / name
        assert run(["opt", str(work / "motivating.seer"),
                    "--sched", sched_file(work), "--out", str(out),
                    "--seed", "7", "--runs", "30", "--iters", "10"]) == 0
        blobs = {}
        for path in sorted(out.rglob("*")):
            if path.is_file():
                blobs[str(path.relative_to(out))] = path.read_bytes()
        outs.append(blobs)
    assert outs[0] == outs[1]


def test_verify_detects_injected_bug(tmp_path):
    good = CORPUS / "motivating.seer"
    bad = tmp_path / "bad.seer"
    # invalid fusion of loops 1 and 3 (dependence on x)
    bad.write_text("""
(func motivating () (arrays (x 200 i32) (y 200 i32))
 (block
  (for loop_13 i 0 100 1 (block
    (store x (add i32 i (const i32 1)) (call f i32 (load i32 x i)))
    (store x (add i32 i (const i32 2)) (call h i32 (load i32 x i)))))
  (for loop_2 i 0 100 1 (block
    (store y i (call g i32 (load i32 y i)))))))
""")
    code = run(["verify", str(good), str(bad), "--runs", "1000"])
    assert code == 3


def test_verify_missing_file(tmp_path):
    assert run(["verify", str(tmp_path / "a.seer"), str(tmp_path / "b.seer")]) == 1


def test_verify_chain_dir(work, capsys):
    out = work / "out"
    run(["opt", str(work / "motivating.seer"), "--sched", sched_file(work),
         "--out", str(out), "--runs", "20", "--iters", "10"])
    capsys.readouterr()
    code = run(["verify", str(work / "motivating.seer"),
                str(out / "motivating.opt.seer"),
                "--chain", str(out / "motivating_proof"), "--runs", "50"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["equivalent"] is True
    assert payload["chain_len"] >= 2


def test_stats_single_file(work, capsys):
    code = run(["stats", str(work / "motivating.seer"),
                "--sched", sched_file(work), "--iters", "8"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3  # header, rule, one row
    assert "motivating" in lines[2]
    assert "saturated" in lines[2]


def test_stats_node_limit_column(work, capsys):
    code = run(["stats", str(work / "motivating.seer"),
                "--sched", sched_file(work), "--node-limit", "20"])
    assert code == 0
    assert "node-limit" in capsys.readouterr().out


def test_rules_list(capsys):
    assert run(["rules", "list"]) == 0
    out = capsys.readouterr().out
    assert "seq-assoc-r" in out
    assert "loop-fusion" in out


def test_opt_self_check_catches_bad_optimizer(work, monkeypatch):
    """If extraction ever emitted a wrong program, opt must exit 3."""
    from seer import extract as extract_mod

    real = extract_mod.optimize

    def sabotage(prog, config=None):
        result = real(prog, config)
        broken = ir.parse_program("""
(func motivating () (arrays (x 200 i32) (y 200 i32))
 (block (for loop_1 i 0 100 1 (block
    (store x (add i32 i (const i32 1)) (call g i32 (load i32 x i)))))))
""")
        return extract_mod.OptimizeResult(broken, result.report, result.trace,
                                          result.graph)

    monkeypatch.setattr(cli.extract, "optimize", sabotage)
    code = run(["opt", str(work / "motivating.seer"), "--sched", sched_file(work),
                "--out", str(work / "out"), "--runs", "50", "--iters", "6"])
    assert code == 3
