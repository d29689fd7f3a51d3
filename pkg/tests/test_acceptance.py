"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The PDE-backed
checks share session fixtures (a screening run over levels 0-2, three
reference simulations, small production estimations), so the whole
module takes tens of minutes.  Two checks measure known shortfalls and
fail by design: the steady-state settling threshold at the 6016 s
horizon (the buoyancy-driven circulation relaxes on a ~5600 s timescale,
so the per-step change is still ~1e-3 there) and the Krylov-growth bound
against the coarsest level (whose single-grid hierarchy degenerates to a
direct solve with a ~1-iteration floor).  Their printed measurements
document the behavior.
"""
import math
import time

import numpy as np
import pytest

from fracmlmc import mlmc as ml
from fracmlmc.cli import RunConfig, SampleRunner, main
from fracmlmc.discretization import (
    Assembler,
    LevelGeometry,
    SimulationOptions,
    Simulator,
    initial_state,
)
from fracmlmc.mesh import MeshHierarchy, load_coarse_mesh
from fracmlmc.params import (
    PhysicalConstants,
    SamplePoint,
    StochasticModel,
    build_scenario,
    density,
    fracture_width,
    permeability_from_porosity,
    porosity,
    recharge,
)
from fracmlmc.qoi import QoiSpec, default_point_qois

SEED = 20260810
TARGET_TIME = 960.0
QOI = QoiSpec("point", "c_x1", 1.1, -0.8, times=(TARGET_TIME,))


def criterion(num: int, name: str, ok: bool, detail: str = ""):
    print(f"\nACCEPTANCE {num:2d} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def shipped_hierarchy(max_level=2):
    from conftest import shipped_mesh_path
    return MeshHierarchy(load_coarse_mesh(shipped_mesh_path()), max_level)


# ---------------------------------------------------------------------------
# shared heavy fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def acc_screening():
    """Levels 0-2 screening of c_m(960 s, (1.1, -0.8)), 8 coupled samples."""
    from conftest import shipped_mesh_path
    cfg = RunConfig(mesh_file=str(shipped_mesh_path()), max_level=2,
                    workers=2, seed=SEED, screen_levels=2, screen_samples=8,
                    target_time=TARGET_TIME)
    cfg.qois = default_point_qois(times=(TARGET_TIME,))
    with SampleRunner(cfg, "c_x1", "acc-screen", None) as runner:
        return ml.run_screening(None, levels=2, samples=8, root_seed=SEED,
                                parallel_map=runner.parallel_map)


@pytest.fixture(scope="session")
def single_runs():
    """Reference simulations of the deterministic scenario per level."""
    hier = shipped_hierarchy(2)
    sim = Simulator(hier, options=SimulationOptions(check_conservation=True))
    return {lvl: sim.run(lvl, SamplePoint(xi=(0.0, 0.0, 0.0)),
                         qois=[QOI]) for lvl in range(3)}


@pytest.fixture(scope="session")
def steady_run():
    """Level-1 run with the recharge oscillation disabled."""
    hier = shipped_hierarchy(1)
    sim = Simulator(hier, model=StochasticModel(time_dependent_recharge=False))
    return sim.run(1, SamplePoint(xi=(0.0, 0.0, 0.0)))


@pytest.fixture(scope="session")
def mlmc_runs(acc_screening):
    """Production estimations at the desk tolerances."""
    from conftest import shipped_mesh_path
    cfg = RunConfig(mesh_file=str(shipped_mesh_path()), max_level=2,
                    workers=2, seed=SEED, target_time=TARGET_TIME)
    cfg.qois = default_point_qois(times=(TARGET_TIME,))
    out = {}
    for tol in (0.1, 0.05, 0.025):
        plan = ml.build_plan(acc_screening, tol=tol, l_max=2)
        with SampleRunner(cfg, "c_x1", f"acc-mlmc-{tol:g}", None) as runner:
            result = ml.run_estimator(None, plan, root_seed=SEED,
                                      parallel_map=runner.parallel_map)
        out[tol] = (plan, result)
    return out


@pytest.fixture(scope="session")
def field_stats():
    """Variance field at t = 2560 s from levels {0: 12, 1: 6}."""
    hier = shipped_hierarchy(1)
    pc = PhysicalConstants(total_time=2560.0)
    sampler = ml.PdeSampler(hier, QOI, target_time=TARGET_TIME, constants=pc,
                            options=SimulationOptions(r0=80))
    stats = ml.field_statistics(sampler, [(0, 12), (1, 6)], time=2560.0,
                                reference_level=1, root_seed=SEED)
    return hier, stats


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_parameter_laws_exact():
    checks = [
        (fracture_width(0.0), 5.05e-3),
        (fracture_width(1.0), 1.0e-2),
        (fracture_width(-1.0), 1.0e-4),
        (recharge(0.0, 0.0), 3.3e-6),
        (porosity(0.37, -0.21, 0.0), 0.35),
        (density(0.0), 1000.0),
        (density(1.0), 1025.0),
    ]
    worst = max(abs(got - want) / abs(want) for got, want in checks)
    criterion(1, "parameter laws exact", worst <= 1e-12,
              f"worst relative deviation {worst:.2e}")


def test_criterion_02_permeability_law():
    k1 = permeability_from_porosity(0.35)
    pc2 = PhysicalConstants(kozeny_denominator_exponent=2)
    k2 = permeability_from_porosity(0.35, pc2)
    e1 = abs(k1 - 1.019368e-9) / 1.019368e-9
    e2 = abs(k2 - 7.5514e-10) / 7.5514e-10
    criterion(2, "permeability law", e1 <= 1e-3 and e2 <= 1e-3,
              f"K(e=1)={k1:.6e} ({e1:.2e}), K(e=2)={k2:.6e} ({e2:.2e})")


def test_criterion_03_allocation_identity():
    m_real, _, _ = ml.allocate_samples(tol=0.1, e0=1.0,
                                       variances=(1.0, 0.25), costs=(1.0, 4.0))
    exact = abs(m_real[0] - 400.0) <= 1e-9 and abs(m_real[1] - 100.0) <= 1e-9
    resid = abs(float((np.array([1.0, 0.25]) / m_real).sum()) - 0.1**2 / 2.0)
    criterion(3, "allocation identity", exact and resid <= 1e-12,
              f"m={m_real.tolist()}, variance identity residual {resid:.2e}")


def test_criterion_04_level_count_formula():
    level = ml.choose_levels(tol=0.05, e0=1.0, alpha=1.0, c1=0.47, l_max=10)
    raw = -math.log2(0.05 / (math.sqrt(2.0) * 0.47))
    criterion(4, "level-count formula", level == 4,
              f"raw {raw:.3f} -> L={level}")


def test_criterion_05_synthetic_mlmc_oracle():
    t0 = time.perf_counter()
    sampler = ml.SinModelSampler(alpha=1.0, c1=1.0)
    tol, e0 = 0.02, 1.0
    level = ml.choose_levels(tol, e0, 1.0, 1.0, l_max=12)
    variances = [0.5 + 0.01 / 3.0] \
        + [0.01 / 3.0 * 4.0**-l for l in range(1, level + 1)]
    costs = [2.0**(3 * l) for l in range(level + 1)]
    _, m_int, predicted = ml.allocate_samples(tol, e0, variances, costs)
    rates = ml.RateFit(alpha=1.0, c1=1.0, beta=2.0, c2=0.01 / 3.0,
                       gamma=1.0, c3=1.0)
    plan = ml.MlmcPlan(tol=tol, e0=e0, levels=level,
                       m=[int(x) for x in m_int], predicted_cost=predicted,
                       variances=variances, costs=costs, rates=rates)
    truth = sampler.analytic_mean(level)
    hits = 0
    for rep in range(100):
        res = ml.run_estimator(sampler, plan, root_seed=1000 + rep)
        if abs(res.mean - truth) <= 3.0 * res.standard_error:
            hits += 1
    elapsed = time.perf_counter() - t0
    criterion(5, "synthetic estimator oracle",
              hits >= 95 and elapsed < 60.0,
              f"{hits}/100 within 3 SE of {truth:.5f} "
              f"(L={level}, {elapsed:.1f} s)")


def test_criterion_06_rate_fit_recovery():
    levels = [0, 1, 2, 3]
    fit = ml.fit_rates(levels,
                       [0.8 * 2.0**(-1.25 * l) for l in levels],
                       [0.2 * 2.0**(-2.5 * l) for l in levels],
                       [3.0 * 2.0**(3.0 * l) for l in levels])
    errs = (abs(fit.alpha - 1.25), abs(fit.c1 - 0.8),
            abs(fit.beta - 2.5), abs(fit.c2 - 0.2))
    criterion(6, "rate-fit recovery", max(errs) <= 1e-10,
              f"max abs error {max(errs):.2e}")


def test_criterion_07_pde_rates_at_desk_scale(acc_screening):
    r = acc_screening.rates
    ok = 0.7 <= r.alpha <= 1.4 and 1.4 <= r.beta <= 2.6
    criterion(7, "PDE weak/strong rates",
              ok, f"alpha={r.alpha:.3f} (band [0.7, 1.4]), "
                  f"beta={r.beta:.3f} (band [1.4, 2.6]), "
                  f"c1={r.c1:.4g}, c2={r.c2:.4g}, E0={acc_screening.e0:.4g}")


def test_criterion_08_bounds_and_conservation(single_runs):
    c_lo = min(r.c_min for r in single_runs.values())
    c_hi = max(r.c_max for r in single_runs.values())
    defect = max(r.max_balance_defect for r in single_runs.values())
    ok = c_lo >= -1e-6 and c_hi <= 1.0 + 1e-6 and defect <= 1e-8
    criterion(8, "bounds and conservation", ok,
              f"c in [{c_lo:.2e}, {c_hi:.8f}], "
              f"worst per-step balance defect {defect:.2e}")


def test_criterion_09_hydrostatic_exactness():
    hier = shipped_hierarchy(0)
    pc = PhysicalConstants()
    geom = LevelGeometry(hier.levels[0], hier.dofmaps[0], pc)
    asm = Assembler(geom, build_scenario(SamplePoint(xi=(0.0, 0.0, 0.0))))
    dm = hier.dofmaps[0]
    u = initial_state(hier.levels[0], dm, pc)
    c_value = 0.6
    rho = density(c_value)
    u[np.arange(dm.n) % 2 == 0] = c_value
    y = hier.levels[0].vertices[dm.dof_vertex(), 1]
    p_slots = np.arange(dm.n) % 2 == 1
    u[p_slots] = -rho * pc.gravity * y[p_slots]
    r_eq = asm.residual(u, u, 1.0 / 32.0, 32.0,
                        apply_dirichlet=False, apply_influx=False)
    u_bad = u.copy()
    u_bad[p_slots] = 0.0
    r_bad = asm.residual(u_bad, u_bad, 1.0 / 32.0, 32.0,
                         apply_dirichlet=False, apply_influx=False)
    rel = np.abs(r_eq).max() / np.abs(r_bad).max()
    criterion(9, "hydrostatic exactness", rel <= 1e-10,
              f"residual ratio vs disturbed state {rel:.2e}")


def test_criterion_10_steady_state(steady_run):
    # relative per-step change of c at the end of the horizon (c scale is 1)
    rel_change = steady_run.final_step_delta_c / max(1.0, steady_run.c_max)
    criterion(10, "steady state at horizon", rel_change < 1e-6,
              f"per-step change {rel_change:.3e} at t=6016 s "
              "(buoyant circulation still relaxing; threshold 1e-6)")


def test_criterion_11_cost_scaling(single_runs):
    w = [single_runs[l].cost.work_units for l in range(3)]
    ratios = [w[1] / w[0], w[2] / w[1]]
    k = [single_runs[l].cost.krylov_per_newton for l in range(3)]
    growth = k[2] / k[0]
    ok = all(6.0 <= r <= 12.0 for r in ratios) and growth < 2.0
    criterion(11, "cost scaling and solver growth", ok,
              f"work ratios {ratios[0]:.2f}, {ratios[1]:.2f} (band [6, 12]); "
              f"Krylov/Newton {k[0]:.2f} -> {k[1]:.2f} -> {k[2]:.2f}, "
              f"growth {growth:.2f} (bound 2.0)")


def test_criterion_12_mlmc_beats_mc(acc_screening, single_runs, mlmc_runs):
    lines = []
    ok = True
    for tol, (plan, result) in sorted(mlmc_runs.items(), reverse=True):
        level = plan.levels
        var_l = acc_screening.estimates[min(level, 2)].var_fine
        s_l = single_runs[min(level, 2)].cost.work_units
        mc = ml.mc_cost_estimate(var_l, s_l, tol, plan.e0)
        beats = result.realized_work < mc
        if tol <= 0.05:
            ok = ok and beats
        lines.append(f"tol={tol:g}: L={level} m={plan.m} "
                     f"mlmc={result.realized_work:.3e} mc={mc:.3e} "
                     f"{'<' if beats else '>='}")
    criterion(12, "MLMC beats MC", ok, "; ".join(lines))


def test_criterion_13_worker_determinism(tmp_path):
    from conftest import shipped_mesh_path
    cfg_text = f"""
[mesh]
file = {shipped_mesh_path()}
max_level = 2

[physics]
T = 320

[time]
r0 = 10

[qoi]
target_time = 64

[mlmc]
screen_levels = 2
screen_samples = 3
l_max = 1
tol = 0.5

[run]
seed = {SEED}
"""
    cfg_path = tmp_path / "det.cfg"
    cfg_path.write_text(cfg_text)
    out1 = tmp_path / "w1"
    out8 = tmp_path / "w8"
    assert main(["screen", "--config", str(cfg_path), "--out", str(out1),
                 "--workers", "1"]) == 0
    out8.mkdir()
    for name in ("rates.csv", "screen_levels.csv"):
        (out8 / name).write_bytes((out1 / name).read_bytes())
    assert main(["mlmc", "--config", str(cfg_path), "--out", str(out1),
                 "--workers", "1"]) == 0
    assert main(["mlmc", "--config", str(cfg_path), "--out", str(out8),
                 "--workers", "8"]) == 0
    same = all((out1 / n).read_bytes() == (out8 / n).read_bytes()
               for n in ("mlmc_summary.csv", "mlmc_levels.csv"))
    criterion(13, "worker-count determinism", same,
              "summary bytes identical for 1 vs 8 workers")


def test_criterion_14_variance_field_location(field_stats):
    hier, stats = field_stats
    dm = hier.dofmaps[1]
    mesh = hier.levels[1]
    c_dofs = dm.bulk_c_dofs()
    var_c = stats.variance[c_dofs]
    vertex = dm.dof_vertex()[c_dofs[int(var_c.argmax())]]
    x, y = mesh.vertices[vertex]
    ok = 0.8 <= x <= 1.6 and -1.0 <= y <= -0.5
    criterion(14, "variance-field peak location", ok,
              f"max {var_c.max():.3e} at ({x:.3f}, {y:.3f}); "
              "expected region x in [0.8, 1.6], y in [-1, -0.5]")
