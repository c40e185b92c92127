import csv
import io
import subprocess
import sys

import pytest
import yaml

from sepdiff import StateSpace, TorusGeometry, build_kernel, compute_D
from sepdiff.cli import main

NN = {"dimension": 1,
      "entries": [{"z": [1], "p": 0.5}, {"z": [-1], "p": 0.5}]}
MZ = {"dimension": 1,
      "entries": [{"z": [2], "p": "1/3"}, {"z": [-1], "p": "2/3"}]}


def write_cfg(tmp_path, name="cfg.yaml", **body):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(body))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(lines))))


def test_exact_golden_value(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N=3, K=3, direction=[1.0])
    out = tmp_path / "run"
    assert main(["exact", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "exact.csv")
    assert len(rows) == 1
    row = rows[0]
    assert list(row) == ["N", "K", "alpha", "a_index", "free_term",
                         "correction", "D", "residual", "sign"]
    assert row["N"] == "3" and row["K"] == "3" and row["sign"] == "-1"
    got = float(row["D"])
    sp = StateSpace(TorusGeometry(1, 3), 3)
    kernel = build_kernel(1, [((1,), 0.5), ((-1,), 0.5)])
    want = compute_D(sp, kernel, [1.0]).directions[0].D
    assert got == pytest.approx(want, abs=1e-14)
    assert got == pytest.approx(0.2, abs=1e-12)
    assert float(row["free_term"]) == pytest.approx(0.6, abs=1e-15)
    assert (out / "exact_report.txt").exists()
    assert (out / "run_metadata.txt").exists()
    meta = (out / "run_metadata.txt").read_text()
    assert "started:" in meta and "finished:" in meta


def test_exact_matrix_mode_rows(tmp_path):
    kernel2d = {"dimension": 2, "entries": [
        {"z": [1, 0], "p": 0.25}, {"z": [-1, 0], "p": 0.25},
        {"z": [0, 1], "p": 0.25}, {"z": [0, -1], "p": 0.25}]}
    cfg = write_cfg(tmp_path, kernel=kernel2d, N=2, K=2)
    out = tmp_path / "m"
    assert main(["exact", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "exact.csv")
    # e1, e2 and the mixed direction for polarization
    assert len(rows) == 3
    assert [r["a_index"] for r in rows] == ["0", "1", "2"]
    report = (out / "exact_report.txt").read_text()
    assert "matrix_D:" in report and "min_eigenvalue:" in report


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, kernel=MZ, N=3, K=3,
                    mc={"T": 6.0, "M": 40, "seed": 9})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for cmd in ("exact", "mc"):
        assert main([cmd, "--config", cfg, "--out", str(out1)]) == 0
        assert main([cmd, "--config", cfg, "--out", str(out2)]) == 0
    assert (out1 / "exact.csv").read_bytes() == (out2 / "exact.csv").read_bytes()
    assert (out1 / "mc.csv").read_bytes() == (out2 / "mc.csv").read_bytes()


def test_threads_do_not_change_bytes(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N=2, K=2,
                    mc={"T": 5.0, "M": 60, "seed": 4})
    out1, out4 = tmp_path / "t1", tmp_path / "t4"
    assert main(["mc", "--config", cfg, "--out", str(out1),
                 "--threads", "1"]) == 0
    assert main(["mc", "--config", cfg, "--out", str(out4),
                 "--threads", "4"]) == 0
    assert (out1 / "mc.csv").read_bytes() == (out4 / "mc.csv").read_bytes()


def test_seed_override_recorded_and_effective(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N=2, K=2,
                    mc={"T": 5.0, "M": 30, "seed": 4})
    outa, outb = tmp_path / "sa", tmp_path / "sb"
    assert main(["mc", "--config", cfg, "--out", str(outa)]) == 0
    assert main(["mc", "--config", cfg, "--out", str(outb),
                 "--seed", "99"]) == 0
    a = (outa / "mc.csv").read_text()
    b = (outb / "mc.csv").read_text()
    assert "# seed: 4" in a
    assert "# seed: 99" in b
    assert a != b


def test_mc_csv_shape(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N=2, K=2,
                    mc={"T": 4.0, "M": 25, "seed": 1})
    out = tmp_path / "mc"
    assert main(["mc", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "mc.csv")
    # two horizons (T, 2T), one row per replica, plus two summary rows
    assert len(rows) == 2 * 25 + 2
    assert list(rows[0]) == ["replica", "T", "X_1", "njumps"]
    body = [r for r in rows if r["replica"] != "summary"]
    summaries = [r for r in rows if r["replica"] == "summary"]
    assert len(summaries) == 2
    assert {r["T"] for r in summaries} == {"4", "8"}
    for r in body:
        int(r["X_1"])
        assert int(r["njumps"]) >= 0


def test_sweep_outputs(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N_list=[2, 3], alpha=0.5)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "sweep.csv")
    assert [r["N"] for r in rows] == ["2", "3"]
    assert float(rows[0]["D"]) == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert float(rows[1]["D"]) == pytest.approx(0.2, abs=1e-12)
    head = (out / "sweep.csv").read_text()
    assert "# alpha_target: 0.5" in head
    assert "verdict:" in (out / "sweep_report.txt").read_text()


def test_diagnostics_sections(tmp_path):
    cfg = write_cfg(
        tmp_path, kernel=MZ, N=3, K=3,
        diagnostics={
            "observable": {"type": "occupancy", "site": [1]},
            "spectral_gap": True,
            "sector_constant": True,
            "prop1": {"pairs": 10, "seed": 0},
            "resolvent": {"lambdas": [1.0, 0.1]},
            "multiscale": {"l": 1, "q": 2, "n_max": 1},
            "hminus1_sweep": None,
        },
    )
    # hminus1_sweep without N_list is a config error
    assert main(["diagnostics", "--config", cfg, "--out",
                 str(tmp_path / "x")]) == 2
    cfg = write_cfg(
        tmp_path, kernel=MZ, N=3, K=3,
        diagnostics={
            "observable": {"type": "occupancy", "site": [1]},
            "spectral_gap": True,
            "sector_constant": True,
            "prop1": {"pairs": 10, "seed": 0},
            "resolvent": {"lambdas": [1.0, 0.1]},
            "multiscale": {"l": 1, "q": 2, "n_max": 1},
        },
    )
    out = tmp_path / "diag"
    assert main(["diagnostics", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "diagnostics.csv")
    sections = {r["section"] for r in rows}
    assert sections == {"spectral_gap", "sector_constant", "prop1",
                        "resolvent", "multiscale"}
    gap = [r for r in rows if r["section"] == "spectral_gap"][0]
    assert float(gap["value"]) > 0.0
    sector = [r for r in rows if r["section"] == "sector_constant"][0]
    assert float(sector["value"]) == pytest.approx(1.0 / 3.0, rel=1e-8)


def test_arbitrate_sign_cli(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N=2, K=2,
                    arbitrate={"M": 1200, "seed": 11})
    out = tmp_path / "arb"
    assert main(["arbitrate-sign", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "arbitrate.csv")
    assert rows[0]["chosen_sign"] == "-1"
    assert float(rows[0]["D_minus"]) == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert float(rows[0]["D_plus"]) == pytest.approx(1.0, abs=1e-12)


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "broken.yaml"
    bad.write_text("kernel: [unbalanced\n")
    assert main(["exact", "--config", str(bad), "--out",
                 str(tmp_path / "o1")]) == 2
    assert main(["exact", "--config", str(tmp_path / "missing.yaml"),
                 "--out", str(tmp_path / "o2")]) == 2
    # missing kernel block
    cfg = write_cfg(tmp_path, "nok.yaml", N=3, K=3)
    assert main(["exact", "--config", cfg, "--out", str(tmp_path / "o3")]) == 2
    # both K and alpha
    cfg = write_cfg(tmp_path, "both.yaml", kernel=NN, N=3, K=3, alpha=0.5)
    assert main(["exact", "--config", cfg, "--out", str(tmp_path / "o4")]) == 2
    # neither K nor alpha
    cfg = write_cfg(tmp_path, "none.yaml", kernel=NN, N=3)
    assert main(["exact", "--config", cfg, "--out", str(tmp_path / "o5")]) == 2
    # direction has the wrong dimension
    cfg = write_cfg(tmp_path, "dir.yaml", kernel=NN, N=3, K=3,
                    direction=[1.0, 0.0])
    assert main(["exact", "--config", cfg, "--out", str(tmp_path / "o6")]) == 2
    # kernel does not sum to one
    badk = {"dimension": 1, "entries": [{"z": [1], "p": 0.7}]}
    cfg = write_cfg(tmp_path, "badk.yaml", kernel=badk, N=3, K=3)
    assert main(["exact", "--config", cfg, "--out", str(tmp_path / "o7")]) == 2
    # sweep needs alpha, not K
    cfg = write_cfg(tmp_path, "swk.yaml", kernel=NN, N_list=[2, 3], K=3)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o8")]) == 2
    # torus too small for the kernel range
    cfg = write_cfg(tmp_path, "small.yaml", kernel=MZ, N=2, K=2)
    assert main(["exact", "--config", cfg, "--out", str(tmp_path / "o9")]) == 2
    # mc without a horizon
    cfg = write_cfg(tmp_path, "noT.yaml", kernel=NN, N=2, K=2, mc={"M": 10})
    assert main(["mc", "--config", cfg, "--out", str(tmp_path / "oA")]) == 2


def test_size_cap_exit_4(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N=40, K=40)
    assert main(["exact", "--config", cfg, "--out",
                 str(tmp_path / "big")]) == 4


def test_numerical_failure_exit_3(tmp_path):
    # a lone walker makes sign arbitration structurally impossible
    cfg = write_cfg(tmp_path, kernel=NN, N=2, K=1,
                    arbitrate={"M": 50, "seed": 0})
    assert main(["arbitrate-sign", "--config", cfg, "--out",
                 str(tmp_path / "arb")]) == 3


def test_console_script_runs(tmp_path):
    cfg = write_cfg(tmp_path, kernel=NN, N=2, K=2)
    proc = subprocess.run(
        [sys.executable, "-m", "sepdiff.cli", "exact", "--config", cfg,
         "--out", str(tmp_path / "sub")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "sub" / "exact.csv").exists()
