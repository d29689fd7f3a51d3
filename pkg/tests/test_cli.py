"""Command-line workflow tests: config, exit codes, determinism, restart."""
from pathlib import Path

import numpy as np
import pytest

from fracmlmc import mlmc as ml
from fracmlmc.cli import (
    ConfigError,
    ResultsLog,
    load_config,
    main,
)

FAST_PDE = """
[physics]
T = 320

[time]
r0 = 10

[mesh]
max_level = 1

[qoi]
target_time = 64
kinds = point

[mlmc]
screen_levels = 1
screen_samples = 3
sampler = pde

[run]
seed = 7
"""

SIN_CFG = """
[mlmc]
screen_levels = 3
screen_samples = 48
l_max = 5
tol = 0.1
sampler = sin

[run]
seed = 11
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_config_defaults(tmp_path):
    cfg = load_config(None)
    assert cfg.constants.rho_brine == 1025.0
    assert cfg.model.recharge_base == 3.3e-6
    assert cfg.options.r0 == 188
    assert cfg.primary_qoi == "c_x1"
    assert len(cfg.qois) == 6


def test_load_config_overrides(tmp_path):
    path = write_cfg(tmp_path, """
[physics]
rho_1 = 1030
kozeny_denominator_exponent = 2

[solver]
preconditioner = ilu0
gravity_term = as_printed

[mlmc]
tol = 0.2 0.1

[run]
workers = 3
""")
    cfg = load_config(path)
    assert cfg.constants.rho_brine == 1030.0
    assert cfg.constants.kozeny_denominator_exponent == 2
    assert cfg.options.krylov.preconditioner == "ilu0"
    assert cfg.options.gravity_mode == "as_printed"
    assert cfg.tols == (0.2, 0.1)
    assert cfg.workers == 3


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.cfg"))
    bad = write_cfg(tmp_path, "[mesh]\nfile = /nonexistent/mesh.txt\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_main_exit_codes(tmp_path):
    bad = write_cfg(tmp_path, "[mesh]\nfile = /nonexistent/mesh.txt\n")
    assert main(["solve", "--config", bad]) == 2
    assert main(["report", str(tmp_path / "empty")]) == 2
    cfg = write_cfg(tmp_path, SIN_CFG)
    # mlmc before screen: usage error (no rates)
    assert main(["mlmc", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert main(["solve", "--config", cfg, "--xi", "2,0,0",
                 "--out", str(tmp_path / "o")]) == 2


def test_solve_writes_deterministic_outputs(tmp_path):
    cfg = write_cfg(tmp_path, FAST_PDE)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--level", "0",
                 "--out", str(out1)]) == 0
    assert main(["solve", "--config", cfg, "--level", "0",
                 "--out", str(out2)]) == 0
    s1 = (out1 / "qoi_series.csv").read_bytes()
    s2 = (out2 / "qoi_series.csv").read_bytes()
    assert s1 == s2
    vtks = sorted(out1.glob("fields_*.vtk"))
    assert vtks, "solve must write VTK snapshots"
    assert (out2 / vtks[0].name).read_bytes() == vtks[0].read_bytes()


def test_sin_pipeline_and_worker_determinism(tmp_path):
    cfg = write_cfg(tmp_path, SIN_CFG)
    out1 = tmp_path / "w1"
    out4 = tmp_path / "w4"
    assert main(["screen", "--config", cfg, "--out", str(out1)]) == 0
    assert (out1 / "rates.csv").exists()

    # re-screening with --resume reuses the log and reproduces the bytes
    rates_before = (out1 / "rates.csv").read_bytes()
    assert main(["screen", "--config", cfg, "--out", str(out1),
                 "--resume"]) == 0
    assert (out1 / "rates.csv").read_bytes() == rates_before

    assert main(["mlmc", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["mc", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["report", str(out1)]) == 0
    for name in ("mlmc_summary.csv", "mlmc_levels.csv", "mc_cost.csv",
                 "decay.csv", "cost_vs_tol.csv"):
        assert (out1 / name).exists()

    # identical summaries for 1 vs 4 workers (screening artifacts copied)
    out4.mkdir()
    for name in ("rates.csv", "screen_levels.csv"):
        (out4 / name).write_bytes((out1 / name).read_bytes())
    assert main(["mlmc", "--config", cfg, "--out", str(out4),
                 "--workers", "4"]) == 0
    assert (out4 / "mlmc_summary.csv").read_bytes() == \
        (out1 / "mlmc_summary.csv").read_bytes()
    assert (out4 / "mlmc_levels.csv").read_bytes() == \
        (out1 / "mlmc_levels.csv").read_bytes()


def test_mlmc_restart_matches_uninterrupted(tmp_path):
    cfg = write_cfg(tmp_path, SIN_CFG)
    full = tmp_path / "full"
    part = tmp_path / "part"
    assert main(["screen", "--config", cfg, "--out", str(full)]) == 0
    assert main(["mlmc", "--config", cfg, "--out", str(full)]) == 0

    # emulate an interrupted run: copy screening plus a truncated log
    part.mkdir()
    for name in ("rates.csv", "screen_levels.csv"):
        (part / name).write_bytes((full / name).read_bytes())
    log_lines = (full / "samples.csv").read_text().splitlines(keepends=True)
    mlmc_rows = [l for l in log_lines if l.startswith("mlmc:")]
    keep = len(log_lines) - len(mlmc_rows) + len(mlmc_rows) // 3
    (part / "samples.csv").write_text("".join(log_lines[:keep]))

    assert main(["mlmc", "--config", cfg, "--out", str(part),
                 "--resume"]) == 0
    assert (part / "mlmc_summary.csv").read_bytes() == \
        (full / "mlmc_summary.csv").read_bytes()


def test_results_log_round_trip(tmp_path):
    path = tmp_path / "samples.csv"
    log = ResultsLog(path)
    sample = ml.sample_for(1, 3, 1, 4)
    value = ml.CoupledValue(g_fine=0.25, g_coarse=0.22, work=64.0, wall=1.5)
    log.write_outcome("mlmc:q:tol=0.1", "q", 960.0, ml.SampleOutcome(
        level=1, index=4, attempt=0, sample=sample, value=value))
    log.write_outcome("mlmc:q:tol=0.1", "q", 960.0, ml.SampleOutcome(
        level=0, index=1, attempt=0, sample=sample, value=None,
        error="diverged"))
    log.close()
    done = ResultsLog.load_completed(path, "mlmc:q:tol=0.1", "q", 960.0)
    assert set(done) == {(1, 4)}
    got = done[(1, 4)]
    assert got.g_fine == 0.25
    assert got.g_coarse == 0.22
    assert got.work == 64.0
    # failed rows never resurrect
    assert (0, 1) not in done
