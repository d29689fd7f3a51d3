"""Command-line orchestration: solve, screen, mlmc, mc, report.

Configuration is a line-oriented ``key = value`` file with bracketed
section headers (INI).  All summary CSVs contain only deterministic
fields (values and work units), so identical (config, seed) pairs
reproduce byte-identical summaries for any worker count; wall-clock
seconds appear only in the append-only per-sample log.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import multiprocessing as mp
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from fracmlmc import mlmc as ml
from fracmlmc.discretization import SimulationOptions, Simulator
from fracmlmc.mesh import MeshHierarchy, load_coarse_mesh
from fracmlmc.params import PhysicalConstants, SamplePoint, StochasticModel
from fracmlmc.qoi import QoiSpec, default_box_qois, default_point_qois, \
    write_vtk_snapshot
from fracmlmc.solver import KrylovConfig, NewtonConfig

__all__ = ["RunConfig", "ResultsLog", "load_config", "main"]

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


def default_mesh_path() -> str:
    return str(resources.files("fracmlmc").joinpath("data/coarse_mesh.txt"))


@dataclass
class RunConfig:
    mesh_file: str = ""
    max_level: int = 2
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    model: StochasticModel = field(default_factory=StochasticModel)
    options: SimulationOptions = field(default_factory=SimulationOptions)
    target_time: float = 960.0
    qois: list = field(default_factory=list)
    primary_qoi: str = "c_x1"
    screen_levels: int = 2
    screen_samples: int = 8
    l_max: int = 2
    tols: tuple = (0.1, 0.05, 0.025)
    max_failures: int = 10
    sampler_kind: str = "pde"      # pde | sin | geometric (test hooks)
    seed: int = 2026
    workers: int = 1
    out_dir: str = "runs/out"
    snapshot_times: tuple = (448.0, 1216.0, 2560.0, 6016.0)

    def spec_for(self, name: str) -> QoiSpec:
        for q in self.qois:
            if q.name == name:
                return q
        raise KeyError(f"QoI {name!r} is not configured")


class ConfigError(ValueError):
    pass


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def load_config(path: str | None) -> RunConfig:
    """Parse the run configuration; missing file -> built-in defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path!r} does not exist")
        parser.read(path)

    pc = PhysicalConstants(
        diffusion=_get(parser, "physics", "D_mol", float, 18.8571e-6),
        gravity=_get(parser, "physics", "g", float, 9.8),
        viscosity=_get(parser, "physics", "mu", float, 1e-3),
        rho_fresh=_get(parser, "physics", "rho_0", float, 1000.0),
        rho_brine=_get(parser, "physics", "rho_1", float, 1025.0),
        porosity_fracture=_get(parser, "physics", "phi_f", float, 0.7),
        permeability_fracture=_get(parser, "physics", "K_f", float, 1.019368e-6),
        kozeny_scale=_get(parser, "physics", "kappa_KC", float, 1.5455e-8),
        kozeny_denominator_exponent=_get(
            parser, "physics", "kozeny_denominator_exponent", int, 1),
        total_time=_get(parser, "physics", "T", float, 6016.0),
    )
    model = StochasticModel(
        aperture_scale=_get(parser, "stochastic", "aperture_scale", float, 0.01),
        aperture_ratio=_get(parser, "stochastic", "aperture_ratio", float, 0.01),
        recharge_base=_get(parser, "stochastic", "recharge_base", float, 3.3e-6),
        recharge_amplitude=_get(parser, "stochastic", "recharge_amplitude",
                                float, 0.1),
        recharge_oscillation=_get(parser, "stochastic", "recharge_oscillation",
                                  float, 0.1),
        recharge_period=_get(parser, "stochastic", "recharge_period", float, 80.0),
        porosity_base=_get(parser, "stochastic", "porosity_base", float, 0.35),
        porosity_amplitude=_get(parser, "stochastic", "porosity_amplitude",
                                float, 0.02),
        time_dependent_recharge=_get(parser, "stochastic",
                                     "time_dependent_recharge", bool, True),
    )
    options = SimulationOptions(
        newton=NewtonConfig(
            abs_tol=_get(parser, "solver", "newton_abs_tol", float, 1e-10),
            rel_tol=_get(parser, "solver", "newton_rel_tol", float, 1e-8),
            max_iterations=_get(parser, "solver", "newton_max_iterations", int, 20),
            line_search_halvings=_get(parser, "solver", "line_search_halvings",
                                      int, 4)),
        krylov=KrylovConfig(
            rel_tol=_get(parser, "solver", "krylov_rel_tol", float, 1e-8),
            max_iterations=_get(parser, "solver", "krylov_max_iterations",
                                int, 200),
            preconditioner=_get(parser, "solver", "preconditioner", str, "gmg")),
        pre_smooth=_get(parser, "solver", "pre_smooth", int, 2),
        post_smooth=_get(parser, "solver", "post_smooth", int, 2),
        gravity_mode=_get(parser, "solver", "gravity_term", str, "matrix_side"),
        max_step_halvings=_get(parser, "solver", "max_step_halvings", int, 3),
        check_conservation=_get(parser, "solver", "check_conservation",
                                bool, False),
        r0=_get(parser, "time", "r0", int, 188),
        output_interval=_get(parser, "time", "output_interval", float, 64.0),
    )

    target_time = _get(parser, "qoi", "target_time", float, 960.0)
    kinds = _get(parser, "qoi", "kinds", str, "point").replace(",", " ").split()
    qois: list[QoiSpec] = []
    if "point" in kinds:
        qois += default_point_qois(times=(target_time,))
    if "box" in kinds:
        qois += default_box_qois(times=(target_time,))

    tol_raw = _get(parser, "mlmc", "tol", str, "0.1, 0.05, 0.025")
    tols = tuple(float(t) for t in tol_raw.replace(",", " ").split())

    cfg = RunConfig(
        mesh_file=_get(parser, "mesh", "file", str, default_mesh_path()),
        max_level=_get(parser, "mesh", "max_level", int, 2),
        constants=pc,
        model=model,
        options=options,
        target_time=target_time,
        qois=qois,
        primary_qoi=_get(parser, "qoi", "primary", str, "c_x1"),
        screen_levels=_get(parser, "mlmc", "screen_levels", int, 2),
        screen_samples=_get(parser, "mlmc", "screen_samples", int, 8),
        l_max=_get(parser, "mlmc", "l_max", int, 2),
        tols=tols,
        max_failures=_get(parser, "mlmc", "max_failures", int, 10),
        sampler_kind=_get(parser, "mlmc", "sampler", str, "pde"),
        seed=_get(parser, "run", "seed", int, 2026),
        workers=_get(parser, "run", "workers", int, 1),
        out_dir=_get(parser, "run", "out", str, "runs/out"),
    )
    if cfg.workers < 1:
        raise ConfigError("worker count must be >= 1")
    if any(t <= 0 for t in cfg.tols):
        raise ConfigError("tolerances must be positive")
    if not Path(cfg.mesh_file).exists():
        raise ConfigError(f"mesh file {cfg.mesh_file!r} does not exist")
    return cfg


# ---------------------------------------------------------------------------
# results log (append-only per-sample CSV)
# ---------------------------------------------------------------------------

class ResultsLog:
    """Append-only per-sample rows; keyed reload enables restart."""

    COLUMNS = ("command", "level", "sample_index", "xi1", "xi2", "xi3",
               "qoi", "time", "value", "wall_seconds", "status")

    def __init__(self, path: Path):
        self.path = Path(path)
        new = not self.path.exists()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", newline="")
        self._writer = csv.writer(self._fh)
        if new:
            self._writer.writerow(self.COLUMNS)
            self._fh.flush()

    def close(self):
        self._fh.close()

    def write_outcome(self, command: str, qoi: str, time: float,
                      out: ml.SampleOutcome):
        xi = out.sample.xi
        rows = []
        if out.ok:
            v = out.value
            rows.append([command, out.level, out.index, *xi, qoi, time,
                         _fmt(v.g_fine), _fmt(v.wall), "ok"])
            if v.g_coarse is not None:
                rows.append([command, out.level, out.index, *xi,
                             f"{qoi}[coarse]", time, _fmt(v.g_coarse),
                             _fmt(0.0), "ok"])
            rows.append([command, out.level, out.index, *xi, "work_units",
                         time, _fmt(v.work), _fmt(0.0), "ok"])
        else:
            rows.append([command, out.level, out.index, *xi, qoi, time,
                         "", _fmt(0.0), f"failed:{out.error[:80]}"])
        for row in rows:
            self._writer.writerow(row)
        self._fh.flush()

    @staticmethod
    def load_completed(path: Path, command: str, qoi: str, time: float):
        """(level, index) -> CoupledValue for successfully logged samples."""
        if not Path(path).exists():
            return {}
        fine: dict = {}
        coarse: dict = {}
        work: dict = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["command"] != command or row["status"] != "ok":
                    continue
                if abs(float(row["time"]) - time) > 1e-9:
                    continue
                key = (int(row["level"]), int(row["sample_index"]))
                if row["qoi"] == qoi:
                    fine[key] = float(row["value"])
                elif row["qoi"] == f"{qoi}[coarse]":
                    coarse[key] = float(row["value"])
                elif row["qoi"] == "work_units":
                    work[key] = float(row["value"])
        done = {}
        for key, g in fine.items():
            if key not in work:
                continue
            if key[0] > 0 and key not in coarse:
                continue
            done[key] = ml.CoupledValue(
                g_fine=g, g_coarse=coarse.get(key), work=work[key], wall=0.0)
        return done


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v
                             for v in row])


# ---------------------------------------------------------------------------
# samplers and the worker pool
# ---------------------------------------------------------------------------

def build_sampler(cfg: RunConfig, qoi_name: str):
    if cfg.sampler_kind == "sin":
        return ml.SinModelSampler()
    if cfg.sampler_kind == "geometric":
        return ml.GeometricSampler()
    hierarchy = MeshHierarchy(load_coarse_mesh(cfg.mesh_file), cfg.max_level)
    return ml.PdeSampler(hierarchy, cfg.spec_for(qoi_name),
                         target_time=cfg.target_time,
                         constants=cfg.constants, model=cfg.model,
                         options=cfg.options)


_WORKER_SAMPLER = None


def _worker_init(cfg: RunConfig, qoi_name: str):
    global _WORKER_SAMPLER
    _WORKER_SAMPLER = build_sampler(cfg, qoi_name)


def _worker_eval(task: ml.SampleOutcome) -> ml.SampleOutcome:
    return ml.evaluate_outcome(_WORKER_SAMPLER, task)


class SampleRunner:
    """Parallel map with a completed-sample cache and per-sample logging."""

    def __init__(self, cfg: RunConfig, qoi_name: str, command: str,
                 log: ResultsLog | None, cache: dict | None = None):
        self.cfg = cfg
        self.qoi_name = qoi_name
        self.command = command
        self.log = log
        self.cache = cache or {}
        self._pool = None
        self._local_sampler = None

    def __enter__(self):
        if self.cfg.workers > 1:
            self._pool = mp.Pool(self.cfg.workers, initializer=_worker_init,
                                 initargs=(self.cfg, self.qoi_name))
        else:
            self._local_sampler = build_sampler(self.cfg, self.qoi_name)
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.terminate()
            self._pool.join()

    @property
    def sampler(self):
        if self._local_sampler is None:
            self._local_sampler = build_sampler(self.cfg, self.qoi_name)
        return self._local_sampler

    def parallel_map(self, _sampler_unused, batch):
        batch = list(batch)
        done, to_run = [], []
        for task in batch:
            cached = self.cache.get((task.level, task.index))
            if cached is not None:
                done.append(ml.SampleOutcome(
                    level=task.level, index=task.index, attempt=task.attempt,
                    sample=task.sample, value=cached))
            else:
                to_run.append(task)
        if to_run:
            if self._pool is not None:
                fresh = self._pool.map(_worker_eval, to_run)
            else:
                fresh = [ml.evaluate_outcome(self.sampler, t) for t in to_run]
            for out in fresh:
                if self.log is not None:
                    self.log.write_outcome(self.command, self.qoi_name,
                                           self.cfg.target_time, out)
                if out.ok:
                    self.cache[(out.level, out.index)] = out.value
            done.extend(fresh)
        return done


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig, level: int, xi=(0.0, 0.0, 0.0)) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hierarchy = MeshHierarchy(load_coarse_mesh(cfg.mesh_file), cfg.max_level)
    sim = Simulator(hierarchy, cfg.constants, cfg.model, cfg.options)
    sample = SamplePoint(xi=tuple(xi))
    grid = sim.time_grid(level)
    field_times = [t for t in cfg.snapshot_times if t <= grid.t_end + 1e-9]
    if not field_times:
        field_times = [grid.output_times()[-1]]
    result = sim.run(level, sample, qois=cfg.qois, field_times=field_times)

    rows = []
    for name in sorted(result.qoi_series):
        series = result.qoi_series[name]
        for t, v in zip(series.times, series.values):
            rows.append([name, float(t), float(v)])
    _write_csv(out_dir / "qoi_series.csv", ("qoi", "time", "value"), rows)
    mesh = hierarchy.levels[level]
    dm = hierarchy.dofmaps[level]
    for t, state in sorted(result.snapshots.items()):
        write_vtk_snapshot(out_dir / f"fields_t{int(t):05d}.vtk", mesh, dm,
                           state, title=f"state at t={t:g}s level={level}")
    print(f"solve: level {level} xi={tuple(xi)} done; "
          f"c in [{result.c_min:.2e}, {result.c_max:.6f}]; "
          f"{result.cost.newton_iterations} Newton its, "
          f"work {result.cost.work_units:.3e}")
    if not (result.c_min >= -1e-6 and result.c_max <= 1.0 + 1e-6):
        print("warning: mass fraction left [0, 1] beyond tolerance")
        return EXIT_NUMERICAL
    return EXIT_OK


def _screen_qoi(cfg: RunConfig, qoi_name: str, resume: bool):
    out_dir = Path(cfg.out_dir)
    log_path = out_dir / "samples.csv"
    cache = ResultsLog.load_completed(log_path, f"screen:{qoi_name}",
                                      qoi_name, cfg.target_time) \
        if resume else {}
    log = ResultsLog(log_path)
    try:
        with SampleRunner(cfg, qoi_name, f"screen:{qoi_name}", log,
                          cache) as runner:
            screening = ml.run_screening(
                None, levels=cfg.screen_levels, samples=cfg.screen_samples,
                root_seed=cfg.seed, parallel_map=runner.parallel_map,
                max_failures=cfg.max_failures)
    finally:
        log.close()
    return screening


def cmd_screen(cfg: RunConfig, resume: bool = False) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rate_rows, level_rows = [], []
    failures = []
    names = [q.name for q in cfg.qois] if cfg.sampler_kind == "pde" \
        else [cfg.primary_qoi]
    for name in names:
        try:
            scr = _screen_qoi(cfg, name, resume)
        except (ml.FitError, ml.SamplingError) as exc:
            failures.append((name, str(exc)))
            print(f"screen: {name}: FAILED ({exc})")
            continue
        r = scr.rates
        rate_rows.append([name, r.alpha, r.c1, r.beta, r.c2, r.gamma, r.c3,
                          scr.e0, str(r.theorem_consistent)])
        for row in scr.level_table():
            level_rows.append([
                name, row["level"], row["m"], row["mean_delta"],
                row["var_delta"] if row["var_delta"] is not None else "",
                row["mean_fine"],
                row["var_fine"] if row["var_fine"] is not None else "",
                row["cv"] if row["cv"] is not None else "",
                row["mean_work"]])
        print(f"screen: {name}: alpha={r.alpha:.3f} c1={r.c1:.4g} "
              f"beta={r.beta:.3f} c2={r.c2:.4g} gamma={r.gamma:.3f} "
              f"E0={scr.e0:.4g}")
    _write_csv(out_dir / "rates.csv",
               ("qoi", "alpha", "c1", "beta", "c2", "gamma", "c3", "e0",
                "theorem_consistent"), rate_rows)
    _write_csv(out_dir / "screen_levels.csv",
               ("qoi", "level", "m", "mean_delta", "var_delta", "mean_g",
                "var_g", "cv", "mean_work"), level_rows)
    if failures and not rate_rows:
        return EXIT_NUMERICAL
    return EXIT_OK


def _load_screening(out_dir: Path, qoi_name: str) -> ml.ScreeningResult:
    rates_path = out_dir / "rates.csv"
    levels_path = out_dir / "screen_levels.csv"
    if not rates_path.exists() or not levels_path.exists():
        raise ConfigError(
            f"no screening results in {out_dir}; run 'screen' first")
    rates = None
    e0 = None
    with open(rates_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["qoi"] == qoi_name:
                rates = ml.RateFit(
                    alpha=float(row["alpha"]), c1=float(row["c1"]),
                    beta=float(row["beta"]), c2=float(row["c2"]),
                    gamma=float(row["gamma"]), c3=float(row["c3"]))
                e0 = float(row["e0"])
    if rates is None:
        raise ConfigError(f"QoI {qoi_name!r} not present in {rates_path}")
    estimates = []
    with open(levels_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["qoi"] != qoi_name:
                continue
            est = ml.LevelEstimate(level=int(float(row["level"])))
            m = int(float(row["m"]))
            mean_d = float(row["mean_delta"])
            var_d = float(row["var_delta"]) if row["var_delta"] else 0.0
            mean_g = float(row["mean_g"])
            var_g = float(row["var_g"]) if row["var_g"] else 0.0
            work = float(row["mean_work"])
            # reconstruct sufficient sums from the published moments
            est.m = m
            est.sum_delta = mean_d * m
            est.sum_delta_sq = var_d * (m - 1) + m * mean_d**2
            est.sum_fine = mean_g * m
            est.sum_fine_sq = var_g * (m - 1) + m * mean_g**2
            est.sum_work = work * m
            estimates.append(est)
    estimates.sort(key=lambda e: e.level)
    return ml.ScreeningResult(rates=rates, estimates=estimates, e0=e0)


def cmd_mlmc(cfg: RunConfig, tols, resume: bool = False) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    qoi_name = cfg.primary_qoi
    screening = _load_screening(out_dir, qoi_name)
    log_path = out_dir / "samples.csv"

    summary_rows, level_rows = [], []
    status = EXIT_OK
    for tol in tols:
        plan = ml.build_plan(screening, tol=tol, l_max=cfg.l_max)
        command = f"mlmc:{qoi_name}:tol={tol:g}"
        cache = ResultsLog.load_completed(log_path, command, qoi_name,
                                          cfg.target_time) if resume else {}
        log = ResultsLog(log_path)
        try:
            with SampleRunner(cfg, qoi_name, command, log, cache) as runner:
                result = ml.run_estimator(
                    None, plan, root_seed=cfg.seed,
                    parallel_map=runner.parallel_map,
                    max_failures=cfg.max_failures)
        except ml.SamplingError as exc:
            print(f"mlmc: tol={tol:g}: ABORTED ({exc})")
            status = EXIT_NUMERICAL
            continue
        finally:
            log.close()
        # MC comparison: variance of the plain QoI from the best-sampled
        # level (the telescoped variance is too noisy when m_L = 1)
        var_candidates = [e.var_fine for e in result.estimates
                          if e.var_fine is not None and e.m >= 2]
        var_for_mc = max(var_candidates) if var_candidates \
            else result.variance_of_qoi
        mc_cost = ml.mc_cost_estimate(var_for_mc, plan.costs[-1], tol, plan.e0)
        summary_rows.append([
            qoi_name, tol, plan.levels, "|".join(str(m) for m in plan.m),
            result.mean, result.variance_of_qoi, result.estimator_variance,
            result.standard_error, result.bias_estimate, plan.predicted_cost,
            result.realized_work, mc_cost, result.failures])
        for est in result.estimates:
            level_rows.append([
                qoi_name, tol, est.level, est.m, est.mean_delta,
                est.var_delta if est.var_delta is not None else "",
                est.mean_fine,
                est.coefficient_of_variation
                if est.coefficient_of_variation is not None else "",
                est.mean_work])
        print(f"mlmc: tol={tol:g}: L={plan.levels} m={plan.m} "
              f"mean={result.mean:.6g} se={result.standard_error:.3g} "
              f"work={result.realized_work:.4g} (mc est {mc_cost:.4g})")
    _write_csv(out_dir / "mlmc_summary.csv",
               ("qoi", "tol", "levels", "m_planned", "mean", "var_qoi",
                "estimator_variance", "standard_error", "bias",
                "predicted_work", "realized_work", "mc_cost_estimate",
                "failures"), summary_rows)
    _write_csv(out_dir / "mlmc_levels.csv",
               ("qoi", "tol", "level", "m", "mean_delta", "var_delta",
                "mean_g", "cv", "mean_work"), level_rows)
    return status


def cmd_mc(cfg: RunConfig, tols) -> int:
    out_dir = Path(cfg.out_dir)
    screening = _load_screening(out_dir, cfg.primary_qoi)
    rows = []
    for tol in tols:
        level = ml.choose_levels(tol, screening.e0, screening.rates.alpha,
                                 screening.rates.c1, cfg.l_max)
        est = screening.estimates[min(level, len(screening.estimates) - 1)]
        var_g = est.var_fine if est.var_fine else screening.rates.c2
        cost_l = est.mean_work if est.m else screening.rates.model_cost(level)
        cost = ml.mc_cost_estimate(var_g, cost_l, tol, screening.e0)
        rows.append([cfg.primary_qoi, tol, level, var_g, cost_l, cost])
        print(f"mc: tol={tol:g}: level {level}, estimated cost {cost:.4g}")
    _write_csv(out_dir / "mc_cost.csv",
               ("qoi", "tol", "level", "var_g", "cost_per_sample",
                "mc_cost_estimate"), rows)
    return EXIT_OK


def cmd_report(out_dir: Path) -> int:
    out_dir = Path(out_dir)
    rates_path = out_dir / "rates.csv"
    summary_path = out_dir / "mlmc_summary.csv"
    if not rates_path.exists():
        print(f"report: no rates.csv in {out_dir}", file=sys.stderr)
        return EXIT_USAGE

    with open(rates_path, newline="") as fh:
        rates = list(csv.DictReader(fh))
    decay_rows = []
    levels_path = out_dir / "screen_levels.csv"
    if levels_path.exists():
        with open(levels_path, newline="") as fh:
            for row in csv.DictReader(fh):
                mean_d = abs(float(row["mean_delta"]))
                var_d = float(row["var_delta"]) if row["var_delta"] else 0.0
                decay_rows.append([
                    row["qoi"], int(float(row["level"])),
                    np.log2(mean_d) if mean_d > 0 else "",
                    np.log2(var_d) if var_d > 0 else ""])
    _write_csv(out_dir / "decay.csv",
               ("qoi", "level", "log2_abs_mean_delta", "log2_var_delta"),
               decay_rows)

    cost_rows = []
    if summary_path.exists():
        with open(summary_path, newline="") as fh:
            summaries = list(csv.DictReader(fh))
        for row in summaries:
            fit = next((r for r in rates if r["qoi"] == row["qoi"]), None)
            theory = ml.theoretical_cost_curves(
                float(fit["alpha"]), float(fit["beta"]), float(fit["gamma"]),
                tols=(float(row["tol"]),)) if fit else None
            cost_rows.append([
                row["qoi"], float(row["tol"]), float(row["realized_work"]),
                float(row["predicted_work"]), float(row["mc_cost_estimate"]),
                theory.mlmc_exponent if theory else "",
                theory.mc_exponent if theory else ""])
    _write_csv(out_dir / "cost_vs_tol.csv",
               ("qoi", "tol", "mlmc_realized", "mlmc_predicted",
                "mc_estimate", "theory_mlmc_slope", "theory_mc_slope"),
               cost_rows)
    beats = [r for r in cost_rows if r[1] <= 0.05 and r[2] < r[4]]
    at_tols = [r for r in cost_rows if r[1] <= 0.05]
    print(f"report: wrote decay.csv and cost_vs_tol.csv "
          f"({len(cost_rows)} tolerance rows); "
          f"MLMC below MC estimate at {len(beats)}/{len(at_tols)} "
          f"tolerances <= 0.05")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fracmlmc",
        description="Multilevel Monte Carlo for density-driven flow in a "
                    "fractured aquifer")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="run-configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    p_solve = sub.add_parser("solve", help="one deterministic simulation")
    common(p_solve)
    p_solve.add_argument("--level", type=int, default=1)
    p_solve.add_argument("--xi", default="0,0,0",
                         help="comma-separated xi1,xi2,xi3")

    p_screen = sub.add_parser("screen", help="convergence-rate screening")
    common(p_screen)
    p_screen.add_argument("--resume", action="store_true")

    p_mlmc = sub.add_parser("mlmc", help="multilevel estimation")
    common(p_mlmc)
    p_mlmc.add_argument("--tol", type=float, default=None)
    p_mlmc.add_argument("--resume", action="store_true")

    p_mc = sub.add_parser("mc", help="single-level MC cost estimate")
    common(p_mc)
    p_mc.add_argument("--tol", type=float, default=None)

    p_rep = sub.add_parser("report", help="plot-ready cost/decay tables")
    p_rep.add_argument("results_dir", nargs="?", default=None)
    common(p_rep)
    return ap


def main(argv=None) -> int:
    args = _build_argparser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
        if cfg.workers < 1:
            print("config error: workers must be >= 1", file=sys.stderr)
            return EXIT_USAGE
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out

    try:
        if args.command == "solve":
            try:
                xi = tuple(float(x) for x in args.xi.split(","))
                if len(xi) != 3 or any(abs(x) > 1 for x in xi):
                    raise ValueError("xi needs three components in [-1, 1]")
            except ValueError as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            if not 0 <= args.level <= cfg.max_level:
                print(f"config error: level must lie in 0..{cfg.max_level}",
                      file=sys.stderr)
                return EXIT_USAGE
            return cmd_solve(cfg, args.level, xi)
        if args.command == "screen":
            return cmd_screen(cfg, resume=args.resume)
        if args.command == "mlmc":
            tols = (args.tol,) if args.tol is not None else cfg.tols
            return cmd_mlmc(cfg, tols, resume=args.resume)
        if args.command == "mc":
            tols = (args.tol,) if args.tol is not None else cfg.tols
            return cmd_mc(cfg, tols)
        if args.command == "report":
            target = args.results_dir or (args.out or cfg.out_dir)
            return cmd_report(Path(target))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyboardInterrupt, SystemExit):
        raise
    except Exception as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
