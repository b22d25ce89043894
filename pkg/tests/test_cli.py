import json
import subprocess
import sys

import numpy as np
import pytest

from spectral_smooth.cli import build_parser, main
from spectral_smooth.diffusion_basis import build_basis, save_basis
from spectral_smooth.kernel_space import KernelConfig
from spectral_smooth.mnist_ingest import DEFAULT_BANDWIDTH, load_labeled

FAST = ["--m", "150", "--b1", "150", "--b2", "80", "--cutoffs", "1-3"]


@pytest.fixture
def normal_csv(tmp_path):
    p = tmp_path / "x.csv"
    np.savetxt(p, np.random.default_rng(0).normal(size=(25, 1)), delimiter=",")
    return p


@pytest.fixture
def shifted_csv(tmp_path):
    p = tmp_path / "shift.csv"
    np.savetxt(p, np.random.default_rng(1).normal(1.5, 1.0, size=(25, 1)), delimiter=",")
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.csv"
    code, _, err = run(["test", "--data", missing, "--seed", 1, *FAST], capsys)
    assert code == 1 and str(missing) in err


def test_seeded_runs_are_identical(normal_csv, capsys):
    code1, out1, _ = run(["test", "--data", normal_csv, "--seed", 7, *FAST], capsys)
    code2, out2, _ = run(["test", "--data", normal_csv, "--seed", 7, "--threads", 3, *FAST], capsys)
    assert code1 == code2 == 0
    assert out1 == out2
    doc = json.loads(out1)
    assert doc["seed"] == 7 and 0 < doc["p_value"] <= 1
    assert len(doc["per_lambda"]) >= 1


def test_reject_exit_code(shifted_csv, normal_csv, capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = run(["test", "--data", shifted_csv, "--seed", 3, "--alpha", 0.05, "--out", out, *FAST], capsys)
    assert code == 2
    assert json.loads(out.read_text())["rejected"] is True
    code, _, _ = run(["test", "--data", normal_csv, "--seed", 3, "--alpha", 0.05, *FAST], capsys)
    assert code == 0


def test_invalid_null_lists_tags(normal_csv, capsys):
    code, _, err = run(["test", "--data", normal_csv, "--null", "cauchy", "--seed", 1, *FAST], capsys)
    assert code == 1 and "normal_mean" in err and "gamma_shape" in err


def test_bad_flag_exits_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["test", "--no-such-flag"])
    assert info.value.code == 1


def test_calibration_save_and_load(normal_csv, capsys, tmp_path):
    cal = tmp_path / "cal.sst"
    _, out1, _ = run(["test", "--data", normal_csv, "--seed", 5, "--save-calibration", cal, *FAST], capsys)
    _, out2, _ = run(["test", "--data", normal_csv, "--load-calibration", cal], capsys)
    a, b = json.loads(out1), json.loads(out2)
    assert a["p_value"] == b["p_value"] and a["t_sst"] == b["t_sst"]
    code, out, _ = run(["basis", "inspect", cal], capsys)
    summary = json.loads(out)
    assert code == 0 and summary["m"] == 150 and summary["n"] == 25


def test_basis_inspect(tmp_path, capsys):
    path = save_basis(build_basis(np.random.default_rng(0).normal(size=(20, 2)), KernelConfig(1.5), 3), tmp_path / "b.sst")
    code, out, _ = run(["basis", "inspect", path], capsys)
    summary = json.loads(out)
    assert code == 0 and summary["kind"] == "basis" and summary["m"] == 20
    assert summary["bandwidth"] == 1.5 and len(summary["eigenvalues"]) == 4


def test_env_defaults(monkeypatch):
    monkeypatch.setenv("SST_SEED", "11")
    monkeypatch.setenv("SST_B1", "300")
    args = build_parser().parse_args(["test", "--data", "x.csv"])
    assert int(args.seed) == 11 and int(args.b1) == 300


def test_power_outputs_reproducible(tmp_path, capsys):
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps({
        "scenario": "normal_mean", "thetas": [0.0, 0.6], "n": 20, "m": 150, "b1": 150, "b2": 80,
        "reps": 10, "cutoffs": [1, 2], "methods": ["sst", "ks"],
    }))
    code, out, _ = run(["power", cfg, "--out", tmp_path / "a", "--seed", 2], capsys)
    assert code == 0
    run(["power", cfg, "--out", tmp_path / "b", "--seed", 2], capsys)
    for name in ("power.csv", "power.svg", "power_manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len((tmp_path / "a" / "power.csv").read_text().splitlines()) == 1 + 4


def test_power_invalid_scenario(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"scenario": "normal_means"}))
    code, _, err = run(["power", cfg, "--out", tmp_path], capsys)
    assert code == 1 and "normal_mean" in err and "fat_tails" in err


def test_rank_defaults():
    args = build_parser().parse_args(
        ["rank", "--train-images", "a", "--train-labels", "b", "--test-images", "c", "--test-labels", "d", "--digit", "7"]
    )
    assert args.cutoff == 10 and args.bandwidth == DEFAULT_BANDWIDTH == 6392915.0


def test_rank_digit_out_of_range(mnist_files, tmp_path, capsys):
    img, lab = mnist_files
    code, _, err = run(
        ["rank", "--train-images", img, "--train-labels", lab, "--test-images", img, "--test-labels", lab,
         "--digit", 12, "--out", tmp_path / "r.csv"],
        capsys,
    )
    assert code == 1 and "0..9" in err


def test_rank_rows_match_filtered_count(mnist_files, tmp_path, capsys):
    img, lab = mnist_files
    out = tmp_path / "r.csv"
    code, stdout, _ = run(
        ["rank", "--train-images", img, "--train-labels", lab, "--test-images", img, "--test-labels", lab,
         "--digit", 3, "--m", 200, "--seed", 0, "--out", out, "--sheet", tmp_path / "s.pgm"],
        capsys,
    )
    assert code == 0
    expected = int(np.sum(load_labeled(img, lab).labels == 3))
    assert len(out.read_text().splitlines()) == 1 + expected
    manifest = json.loads(stdout)
    assert manifest["cutoff"] == 10 and manifest["raw_pixels"] is True and manifest["rows"] == expected
    assert (tmp_path / "s.pgm").read_bytes().startswith(b"P5\n280 84\n")


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "spectral_smooth", "test", "--data", str(tmp_path / "none.csv"), "--seed", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1 and "none.csv" in proc.stderr
