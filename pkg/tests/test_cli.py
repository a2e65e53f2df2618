import json

import numpy as np
import pytest

from falbp.cli import EXIT_CAP, EXIT_OK, EXIT_USAGE, main
from falbp.storage import read_vector


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def dct_instance(tmp_path, capsys):
    path = tmp_path / "inst"
    code, out, _ = run(capsys, "gen", "--family", "dct-100db", "--n", 1024, "--m", 256, "--s", 5,
                       "--seed", 7, "--out", path)
    assert code == EXIT_OK
    return path, out


def test_gen_is_deterministic(tmp_path, capsys, dct_instance):
    path, out = dct_instance
    code, out2, _ = run(capsys, "--seed", 7, "gen", "--family", "dct-100db", "--n", 1024,
                        "--m", 256, "--s", 5, "--out", tmp_path / "again")
    assert out.split()[0] == out2.split()[0]
    for name in ("spec.json", "operator.json", "b.bin", "x_true.bin"):
        assert (path / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_gen_hard_plan_prints_l1_norm(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "--family", "hard", "--plan", "1e5:33,1:5",
                       "--out", tmp_path / "h")
    assert code == EXIT_OK and "x_true_l1=3300005 " in out and "s=38" in out


@pytest.mark.parametrize("argv", [
    ["gen", "--family", "dct-100db", "--n", "64", "--m", "16", "--s", "0"],
    ["gen", "--family", "hard"],
    ["gen", "--family", "gaussian-noisy", "--n", "64"],
    ["gen", "--family", "dct-100db", "--plan", "1:2"],
    ["bench", "--suite", "scaling-sparse", "--seeds", "0"],
])
def test_usage_errors(tmp_path, capsys, argv):
    code, _, err = run(capsys, *argv, "--out", tmp_path / "x")
    assert code == EXIT_USAGE and "error" in err


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_solve_oracle_exact_zeros_and_outputs(tmp_path, capsys, dct_instance):
    path, _ = dct_instance
    out_dir = tmp_path / "sol"
    code, out, _ = run(capsys, "solve", path, "--stop", "oracle", "--gamma", 0.01, "--certify",
                       "--out", out_dir)
    assert code == EXIT_OK
    report = json.loads((out_dir / "report.json").read_text())
    assert report["metrics"]["inf_err_zero"] == 0.0
    assert report["extra"]["certificate"]["gap"] >= -1e-9
    assert read_vector(out_dir / "x_sol.bin").size == 1024
    assert (out_dir / "metrics.csv").read_text().splitlines()[0].startswith("N_FAL,")

    code, out, _ = run(capsys, "certify", path, "--solution", out_dir / "x_sol.bin",
                       "--theta", out_dir / "theta.bin")
    assert code == EXIT_OK and json.loads(out)["duality_gap"]["dual_feasibility"] <= 1.0


def test_bpdn_zero_radius_matches_bp_trace(tmp_path, capsys, dct_instance):
    path, _ = dct_instance
    run(capsys, "solve", path, "--stop", "oracle", "--gamma", 0.01, "--out", tmp_path / "bp")
    code, _, _ = run(capsys, "solve", path, "--mode", "bpdn", "--delta", 0, "--stop", "oracle",
                     "--gamma", 0.01, "--out", tmp_path / "dn")
    assert code == EXIT_OK
    bp = json.loads((tmp_path / "bp" / "report.json").read_text())
    dn = json.loads((tmp_path / "dn" / "report.json").read_text())
    assert bp["trace"] == dn["trace"] and bp["n_mat"] == dn["n_mat"]


def test_theoretical_solve_audit_passes(tmp_path, capsys):
    run(capsys, "gen", "--family", "hard", "--n", 1024, "--m", 256, "--plan", "1:10",
        "--out", tmp_path / "u")
    code, out, _ = run(capsys, "--format", "json", "solve", tmp_path / "u", "--theoretical",
                       "--alpha", 0.5, "--out", tmp_path / "u" / "th")
    assert code == EXIT_OK
    audit = json.loads(out)["extra"]["bound_audit"]
    assert audit["all_pass"] and audit["n_fal"] <= audit["n_fal_bound"]


def test_cap_exceeded_exit_code(tmp_path, capsys, dct_instance):
    path, _ = dct_instance
    code, _, _ = run(capsys, "solve", path, "--gamma", 1e-14, "--max-outer", 2,
                     "--out", tmp_path / "c")
    assert code == EXIT_CAP


def test_inconsistent_solve_flags(tmp_path, capsys, dct_instance):
    path, _ = dct_instance
    code, _, _ = run(capsys, "solve", path, "--delta", 1.0)
    assert code == EXIT_USAGE
    code, _, _ = run(capsys, "solve", tmp_path / "missing")
    assert code == EXIT_USAGE


def test_trace_and_unique_certificate(tmp_path, capsys):
    run(capsys, "gen", "--family", "dct-100db", "--n", 512, "--m", 128, "--s", 3,
        "--out", tmp_path / "t")
    code, out, err = run(capsys, "trace", tmp_path / "t", "--gamma", 1e-9)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "apg_iteration,rel_error,rel_feasibility,rel_optimality"
    assert [int(line.split(",")[0]) for line in lines[1:]] == list(range(1, len(lines)))
    assert "r_squared=" in err
    code, out, _ = run(capsys, "certify", tmp_path / "t", "--unique")
    assert code == EXIT_OK and json.loads(out)["uniqueness"]["unique"]


def test_bench_outputs_are_byte_identical(tmp_path, capsys):
    args = ["bench", "--suite", "scaling-sparse", "--sizes", "512", "--gammas", "1", "0.1",
            "--seeds", "3"]
    assert run(capsys, *args, "--out", tmp_path / "a")[0] == EXIT_OK
    assert run(capsys, *args, "--out", tmp_path / "b", "--threads", "2")[0] == EXIT_OK
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.is_file() and p.name != "bench.log")
    assert len(files) == 2 + 6
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    table = (tmp_path / "a" / "sparse_gamma1.csv").read_text().splitlines()
    assert table[0] == "metric,n=512 avg,n=512 max"
    assert [row.split(",")[0] for row in table[1:]] == [
        "N_APG", "rel_l1_gap", "inf_err_plus", "inf_err_zero", "residual", "x_sol_l1",
        "x_true_l1", "N_FAL", "nMat", "failures"]
    assert "wall_time=" in (tmp_path / "a" / "bench.log").read_text()


def test_bench_hard_suite(tmp_path, capsys):
    code, _, _ = run(capsys, "bench", "--suite", "hard", "--seeds", "1", "--out", tmp_path / "h")
    assert code == EXIT_OK
    rows = {r.split(",")[0]: r.split(",")[1:] for r in
            (tmp_path / "h" / "hard.csv").read_text().splitlines()}
    assert all(float(v) == 0.0 for v in rows["inf_err_zero"])
    assert all(float(v) <= 1e-8 for v in rows["rel_l1_gap"])
