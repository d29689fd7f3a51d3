"""Multilevel Monte Carlo estimation.

Couples samples across the mesh/time hierarchy: level l draws the random
vector once and evaluates the quantity of interest on levels l and l-1,
so the telescoping corrections stay strongly correlated.  Screening fits
the weak/strong/cost rates, which then drive the level count and the
Lagrange-optimal sample allocation.

Costs carry two figures: measured wall seconds (machine dependent,
diagnostics only) and deterministic work units (dofs times weighted
solver iterations).  Allocation and all reported summaries use the work
units so identical runs reproduce byte-identical outputs regardless of
worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fracmlmc.params import SamplePoint

__all__ = [
    "sample_for",
    "CoupledValue",
    "SampleOutcome",
    "LevelConfig",
    "LevelEstimate",
    "RateFit",
    "ScreeningResult",
    "MlmcPlan",
    "MlmcResult",
    "FitError",
    "SamplingError",
    "fit_rates",
    "run_screening",
    "choose_levels",
    "allocate_samples",
    "build_plan",
    "run_estimator",
    "mc_cost_estimate",
    "theoretical_cost_curves",
    "field_statistics",
    "FieldStatistics",
    "GeometricSampler",
    "SinModelSampler",
    "ConstantSampler",
]

D_HAT = 3  # cost exponent base: d + 1 with d = 2 space dimensions

COMMAND_TAGS = {"solve": 1, "screen": 2, "mlmc": 3, "mc": 4, "report": 5,
                "field": 6, "test": 7}


class FitError(RuntimeError):
    pass


class SamplingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# deterministic seeding: counter-based mix of (root, tag, level, index, ...)
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix(*values: int) -> int:
    h = 0x243F6A8885A308D3
    for v in values:
        h = _splitmix64((h ^ (v & _MASK)) & _MASK)
    return h


def sample_for(root_seed: int, tag: int, level: int, index: int,
               attempt: int = 0) -> SamplePoint:
    """The random draw for one (level, index) pair; independent of order.

    Results depend only on the arguments, so any scheduling of workers
    reproduces the same streams; retries bump ``attempt``.
    """
    h = _mix(root_seed, tag, level, index, attempt)
    xi = []
    for _ in range(3):
        h = _splitmix64(h)
        xi.append(2.0 * ((h >> 11) / float(1 << 53)) - 1.0)
    return SamplePoint(xi=tuple(xi), level=level, index=index,
                       root_seed=root_seed)


# ---------------------------------------------------------------------------
# sample records and per-level accumulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoupledValue:
    """One coupled evaluation: QoI on the level and (for l > 0) below it."""
    g_fine: float
    g_coarse: float | None
    work: float
    wall: float = 0.0
    payload: tuple | None = None   # e.g. lifted field snapshots


@dataclass(frozen=True)
class SampleOutcome:
    level: int
    index: int
    attempt: int
    sample: SamplePoint
    value: CoupledValue | None      # None marks a failed simulation
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class LevelConfig:
    level: int
    n_dofs: int
    r_steps: int
    tau: float

    @property
    def cost_weight(self) -> float:
        """Predicted cost 2^((d+1) l) relative to the coarsest level."""
        return float(2 ** (D_HAT * self.level))


@dataclass
class LevelEstimate:
    """Running sums for one telescoping level (delta = g_l - g_{l-1})."""

    level: int
    m: int = 0
    sum_delta: float = 0.0
    sum_delta_sq: float = 0.0
    sum_fine: float = 0.0
    sum_fine_sq: float = 0.0
    sum_second_delta: float = 0.0   # sum of g_l^2 - g_{l-1}^2
    sum_work: float = 0.0
    sum_wall: float = 0.0
    failures: int = 0

    def add(self, value: CoupledValue):
        g = value.g_fine
        gc = 0.0 if value.g_coarse is None else value.g_coarse
        d = g - gc
        self.m += 1
        self.sum_delta += d
        self.sum_delta_sq += d * d
        self.sum_fine += g
        self.sum_fine_sq += g * g
        self.sum_second_delta += g * g - gc * gc
        self.sum_work += value.work
        self.sum_wall += value.wall

    @property
    def mean_delta(self) -> float:
        return self.sum_delta / self.m

    @property
    def var_delta(self):
        """Unbiased sample variance of the correction; needs m >= 2."""
        if self.m < 2:
            return None
        num = self.sum_delta_sq - self.sum_delta**2 / self.m
        return max(num / (self.m - 1), 0.0)

    @property
    def mean_fine(self) -> float:
        return self.sum_fine / self.m

    @property
    def var_fine(self):
        if self.m < 2:
            return None
        num = self.sum_fine_sq - self.sum_fine**2 / self.m
        return max(num / (self.m - 1), 0.0)

    @property
    def mean_work(self) -> float:
        return self.sum_work / self.m

    @property
    def coefficient_of_variation(self):
        v = self.var_fine
        if v is None or self.mean_fine == 0.0:
            return None
        return math.sqrt(v) / abs(self.mean_fine)


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Log-linear decay/growth models over the level index.

    |E[g_l - g_{l-1}]| ~ c1 * 2^(-alpha l),  Var[g_l - g_{l-1}] ~ c2 *
    2^(-beta l), cost ~ c3 * 2^(d_hat gamma l).
    """

    alpha: float
    c1: float
    beta: float
    c2: float
    gamma: float
    c3: float
    d_hat: int = D_HAT
    weak_residuals: tuple = ()
    strong_residuals: tuple = ()
    cost_residuals: tuple = ()

    @property
    def theorem_consistent(self) -> bool:
        """alpha >= min(beta, gamma * d_hat) / 2, as the cost theorem needs."""
        return self.alpha >= 0.5 * min(self.beta, self.gamma * self.d_hat) - 1e-12

    def model_var(self, level: int) -> float:
        return self.c2 * 2.0 ** (-self.beta * level)

    def model_mean(self, level: int) -> float:
        return self.c1 * 2.0 ** (-self.alpha * level)

    def model_cost(self, level: int) -> float:
        return self.c3 * 2.0 ** (self.d_hat * self.gamma * level)


def _loglinear_fit(levels, values, sign):
    ls = np.asarray(levels, dtype=float)
    vals = np.asarray(values, dtype=float)
    usable = np.isfinite(vals) & (vals > 0.0)
    if usable.sum() < 2:
        raise FitError("need at least two usable levels for a rate fit")
    ls, vals = ls[usable], vals[usable]
    logs = np.log2(vals)
    design = np.column_stack([ls, np.ones_like(ls)])
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    slope, intercept = coef
    residuals = logs - design @ coef
    return sign * slope, 2.0**intercept, tuple(residuals)


def fit_rates(levels, mean_deltas, var_deltas, costs, d_hat: int = D_HAT) -> RateFit:
    """Least-squares rates from screening tables.

    Mean/variance fits use levels >= 1 (the l = 0 entry is the plain QoI,
    not a correction); the cost fit uses every level.
    """
    levels = list(levels)
    weak_l = [l for l in levels if l >= 1]
    weak_v = [abs(m) for l, m in zip(levels, mean_deltas) if l >= 1]
    strong_v = [v for l, v in zip(levels, var_deltas) if l >= 1]
    alpha, c1, weak_res = _loglinear_fit(weak_l, weak_v, sign=-1.0)
    beta, c2, strong_res = _loglinear_fit(weak_l, strong_v, sign=-1.0)
    rate_cost, c3, cost_res = _loglinear_fit(levels, costs, sign=+1.0)
    return RateFit(alpha=alpha, c1=c1, beta=beta, c2=c2,
                   gamma=rate_cost / d_hat, c3=c3, d_hat=d_hat,
                   weak_residuals=weak_res, strong_residuals=strong_res,
                   cost_residuals=cost_res)


@dataclass
class ScreeningResult:
    rates: RateFit
    estimates: list
    e0: float                     # |mean of the level-0 QoI|
    root_seed: int = 0

    def level_table(self):
        rows = []
        for est in self.estimates:
            rows.append(dict(level=est.level, m=est.m,
                             mean_delta=est.mean_delta,
                             var_delta=est.var_delta,
                             mean_fine=est.mean_fine,
                             var_fine=est.var_fine,
                             cv=est.coefficient_of_variation,
                             mean_work=est.mean_work))
        return rows


def _collect(sampler, tasks, parallel_map, max_failures, root_seed, tag):
    """Evaluate (level, index) tasks with retry-on-failure semantics."""
    outcomes: dict[tuple[int, int], SampleOutcome] = {}
    failures = 0
    pending = [(lvl, idx, 0) for lvl, idx in tasks]
    while pending:
        batch = [SampleOutcome(level=lvl, index=idx, attempt=att,
                               sample=sample_for(root_seed, tag, lvl, idx, att),
                               value=None)
                 for lvl, idx, att in pending]
        results = list(parallel_map(sampler, batch))
        pending = []
        for out in results:
            if out.ok:
                outcomes[(out.level, out.index)] = out
            else:
                failures += 1
                if failures > max_failures:
                    raise SamplingError(
                        f"failure budget exceeded ({failures} failed samples; "
                        f"last: {out.error})")
                pending.append((out.level, out.index, out.attempt + 1))
    return [outcomes[key] for key in sorted(outcomes)], failures


def _evaluate_serial(sampler, batch):
    return [evaluate_outcome(sampler, task) for task in batch]


def evaluate_outcome(sampler, task: SampleOutcome) -> SampleOutcome:
    """Run one coupled sample; converts solver failures into failed marks."""
    try:
        value = sampler.coupled(task.level, task.sample)
    except Exception as exc:  # deliberate: failures become data, not crashes
        return SampleOutcome(level=task.level, index=task.index,
                             attempt=task.attempt, sample=task.sample,
                             value=None, error=str(exc))
    return SampleOutcome(level=task.level, index=task.index,
                         attempt=task.attempt, sample=task.sample, value=value)


def run_screening(sampler, levels: int = 3, samples: int = 10,
                  root_seed: int = 0, parallel_map=None,
                  max_failures: int = 10) -> ScreeningResult:
    """Draw a fixed number of coupled samples per level and fit the rates."""
    if levels < 2:
        raise FitError("screening needs at least levels 0..2")
    if samples < 2:
        raise FitError("screening needs at least two samples per level")
    pm = parallel_map or _evaluate_serial
    tag = COMMAND_TAGS["screen"]
    tasks = [(lvl, idx) for lvl in range(levels + 1) for idx in range(samples)]
    outcomes, _ = _collect(sampler, tasks, pm, max_failures, root_seed, tag)

    estimates = [LevelEstimate(level=lvl) for lvl in range(levels + 1)]
    for out in outcomes:
        estimates[out.level].add(out.value)
    rates = fit_rates(
        [e.level for e in estimates],
        [e.mean_delta for e in estimates],
        [e.var_delta for e in estimates],
        [e.mean_work for e in estimates])
    e0 = abs(estimates[0].mean_fine)
    return ScreeningResult(rates=rates, estimates=estimates, e0=e0,
                           root_seed=root_seed)


# ---------------------------------------------------------------------------
# level count and sample allocation
# ---------------------------------------------------------------------------

def choose_levels(tol: float, e0: float, alpha: float, c1: float,
                  l_max: int) -> int:
    """Smallest L with squared bias below half the squared tolerance."""
    if min(tol, e0, alpha, c1) <= 0.0:
        raise ValueError("choose_levels needs positive inputs")
    raw = -math.log2(tol * e0 / (math.sqrt(2.0) * c1)) / alpha
    return int(min(max(math.ceil(raw), 0), l_max))


def allocate_samples(tol: float, e0: float, variances, costs):
    """Lagrange-optimal sample counts for a fixed estimator variance.

    Returns (real-valued counts, integer counts >= 1, predicted cost).
    The real-valued counts satisfy sum(V_l / m_l) = (tol * e0)^2 / 2
    exactly whenever some variance is positive.
    """
    v = np.asarray(variances, dtype=float)
    s = np.asarray(costs, dtype=float)
    if np.any(v < 0.0) or np.any(s <= 0.0):
        raise ValueError("variances must be >= 0 and costs > 0")
    scale = 2.0 / (tol * e0) ** 2
    root_vs = np.sqrt(v * s)
    if root_vs.sum() == 0.0:
        m_real = np.zeros_like(v)
    else:
        m_real = scale * np.sqrt(v / s) * root_vs.sum()
    m_int = np.maximum(1, np.ceil(m_real - 1e-12).astype(np.int64))
    predicted = scale * root_vs.sum() ** 2
    return m_real, m_int, float(predicted)


@dataclass
class MlmcPlan:
    tol: float
    e0: float
    levels: int                    # L: finest level index
    m: list                        # planned samples per level 0..L
    predicted_cost: float
    variances: list                # V_l used by the allocation
    costs: list                    # s_l used by the allocation
    rates: RateFit
    variance_from_model: list = field(default_factory=list)


def build_plan(screening: ScreeningResult, tol: float, l_max: int,
               trust_sample_variance_from: int = 10) -> MlmcPlan:
    """Combine screening estimates and fitted models into an (L, m_l) plan.

    Sample variances from small screening counts are guarded from below
    by the fitted decay model; levels beyond the screened range use the
    model alone.
    """
    rates = screening.rates
    level = choose_levels(tol, screening.e0, rates.alpha, rates.c1, l_max)
    variances, costs, from_model = [], [], []
    for l in range(level + 1):
        est = screening.estimates[l] if l < len(screening.estimates) else None
        model_v = rates.model_var(l)
        if est is not None and est.var_delta is not None:
            if est.m < trust_sample_variance_from:
                v = max(est.var_delta, model_v)
                from_model.append(v == model_v and est.var_delta < model_v)
            else:
                v = est.var_delta
                from_model.append(False)
        else:
            v = model_v
            from_model.append(True)
        s = est.mean_work if est is not None and est.m > 0 else rates.model_cost(l)
        variances.append(v)
        costs.append(s)
    _, m_int, predicted = allocate_samples(tol, screening.e0, variances, costs)
    return MlmcPlan(tol=tol, e0=screening.e0, levels=level,
                    m=[int(x) for x in m_int], predicted_cost=predicted,
                    variances=variances, costs=costs, rates=rates,
                    variance_from_model=from_model)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

@dataclass
class MlmcResult:
    plan: MlmcPlan
    mean: float
    variance_of_qoi: float
    estimator_variance: float
    bias_estimate: float
    realized_work: float
    realized_wall: float
    estimates: list
    failures: int
    model_variance_levels: list

    @property
    def standard_error(self) -> float:
        return math.sqrt(max(self.estimator_variance, 0.0))

    def cv_series(self):
        return [e.coefficient_of_variation for e in self.estimates]


def run_estimator(sampler, plan: MlmcPlan, root_seed: int = 0,
                  parallel_map=None, max_failures: int = 10,
                  tag: int = COMMAND_TAGS["mlmc"]) -> MlmcResult:
    """Execute the planned coupled samples and build the telescoping sums.

    Accumulation happens in (level, index) order after all samples have
    finished, so the result is independent of worker scheduling.
    """
    pm = parallel_map or _evaluate_serial
    tasks = [(lvl, idx) for lvl in range(plan.levels + 1)
             for idx in range(plan.m[lvl])]
    outcomes, failures = _collect(sampler, tasks, pm, max_failures,
                                  root_seed, tag)
    estimates = [LevelEstimate(level=lvl) for lvl in range(plan.levels + 1)]
    for out in outcomes:
        estimates[out.level].add(out.value)

    mean = sum(e.mean_delta for e in estimates)
    second = sum(e.sum_second_delta / e.m for e in estimates)
    var_qoi = max(second - mean * mean, 0.0)
    est_var = 0.0
    model_levels = []
    for e in estimates:
        v = e.var_delta
        if v is None:
            v = plan.rates.model_var(e.level)
            model_levels.append(e.level)
        est_var += v / e.m
    bias = abs(estimates[-1].mean_delta) / (2.0 ** plan.rates.alpha - 1.0) \
        if plan.levels >= 1 else plan.rates.model_mean(1)
    return MlmcResult(plan=plan, mean=mean, variance_of_qoi=var_qoi,
                      estimator_variance=est_var, bias_estimate=bias,
                      realized_work=sum(e.sum_work for e in estimates),
                      realized_wall=sum(e.sum_wall for e in estimates),
                      estimates=estimates, failures=failures,
                      model_variance_levels=model_levels)


def mc_cost_estimate(var_finest: float, cost_finest: float, tol: float,
                     e0: float) -> float:
    """Single-level MC cost meeting the same (relative) variance target."""
    if min(tol, e0) <= 0.0 or var_finest < 0.0 or cost_finest <= 0.0:
        raise ValueError("mc_cost_estimate needs positive inputs")
    return 2.0 * var_finest * cost_finest / (tol * e0) ** 2


@dataclass(frozen=True)
class CostCurve:
    mlmc_exponent: float
    mc_exponent: float
    log_factor: bool          # middle regime carries (log eps)^2
    tols: tuple
    mlmc_values: tuple        # up to a constant factor
    mc_values: tuple


def theoretical_cost_curves(alpha: float, beta: float, gamma: float,
                            d_hat: int = D_HAT, tols=(0.1, 0.05, 0.025, 0.01)):
    """Cost-vs-tolerance slopes from the three MLMC complexity regimes."""
    dg = d_hat * gamma
    log_factor = False
    if beta > dg + 1e-12:
        exponent = 2.0
    elif abs(beta - dg) <= 1e-12:
        exponent = 2.0
        log_factor = True
    else:
        exponent = 2.0 + (dg - beta) / alpha
    mc_exponent = 2.0 + dg / alpha
    tols = tuple(float(t) for t in tols)
    mlmc_vals = []
    for t in tols:
        v = t ** (-exponent)
        if log_factor:
            v *= math.log(t) ** 2
        mlmc_vals.append(v)
    mc_vals = tuple(t ** (-mc_exponent) for t in tols)
    return CostCurve(mlmc_exponent=-exponent, mc_exponent=-mc_exponent,
                     log_factor=log_factor, tols=tols,
                     mlmc_values=tuple(mlmc_vals), mc_values=mc_vals)


# ---------------------------------------------------------------------------
# nodewise field statistics
# ---------------------------------------------------------------------------

@dataclass
class FieldStatistics:
    reference_level: int
    time: float
    mean: np.ndarray
    variance: np.ndarray
    samples_per_level: list


def field_statistics(field_sampler, levels_and_counts, time: float,
                     reference_level: int, root_seed: int = 0,
                     parallel_map=None, max_failures: int = 10) -> FieldStatistics:
    """Telescoping mean/variance of the concentration field on a
    reference grid.

    ``field_sampler.coupled_field(level, sample, time, reference_level)``
    must return (fine field, coarse field or None, work) with both fields
    already lifted to the reference grid.
    """
    tag = COMMAND_TAGS["field"]
    pm = parallel_map or _evaluate_serial

    class _Adapter:
        def coupled(self, level, sample):
            fine, coarse, work = field_sampler.coupled_field(
                level, sample, time, reference_level)
            return CoupledValue(g_fine=0.0, g_coarse=None, work=work,
                                payload=(fine, coarse))

    tasks = [(lvl, idx) for lvl, m in levels_and_counts for idx in range(m)]
    outcomes, _ = _collect(_Adapter(), tasks, pm, max_failures,
                           root_seed, tag)
    level_m = dict(levels_and_counts)
    mean = None
    second = None
    for out in outcomes:
        fine, coarse = out.value.payload
        delta = fine if coarse is None else fine - coarse
        delta2 = fine**2 if coarse is None else fine**2 - coarse**2
        w = 1.0 / level_m[out.level]
        if mean is None:
            mean = np.zeros_like(fine)
            second = np.zeros_like(fine)
        mean += w * delta
        second += w * delta2
    variance = np.maximum(second - mean**2, 0.0)
    return FieldStatistics(reference_level=reference_level, time=time,
                           mean=mean, variance=variance,
                           samples_per_level=list(levels_and_counts))


# ---------------------------------------------------------------------------
# PDE sampler: couples two hierarchy levels through one scenario
# ---------------------------------------------------------------------------

class PdeSampler:
    """Coupled quantity-of-interest sampler backed by the flow solver.

    One random draw builds one scenario; level l evaluates it on meshes l
    and l-1 with the matching time steps, so the correction g_l - g_{l-1}
    carries only discretization differences.
    """

    def __init__(self, hierarchy, qoi_spec, target_time: float = 960.0,
                 constants=None, model=None, options=None):
        from fracmlmc.discretization import SimulationOptions, Simulator
        from fracmlmc.params import PhysicalConstants, StochasticModel

        self.simulator = Simulator(
            hierarchy,
            constants or PhysicalConstants(),
            model or StochasticModel(),
            options or SimulationOptions())
        self.spec = qoi_spec
        self.target_time = float(target_time)

    def _value(self, level, sample):
        res = self.simulator.run(level, sample, qois=[self.spec])
        series = res.qoi_series[self.spec.name]
        return series.at(self.target_time), res.cost

    def coupled(self, level: int, sample: SamplePoint) -> CoupledValue:
        g_fine, cost_f = self._value(level, sample)
        if level == 0:
            return CoupledValue(g_fine=g_fine, g_coarse=None,
                                work=cost_f.work_units,
                                wall=cost_f.wall_seconds)
        g_coarse, cost_c = self._value(level - 1, sample)
        return CoupledValue(g_fine=g_fine, g_coarse=g_coarse,
                            work=cost_f.work_units + cost_c.work_units,
                            wall=cost_f.wall_seconds + cost_c.wall_seconds)

    def coupled_field(self, level: int, sample: SamplePoint, time: float,
                      reference_level: int):
        """Concentration snapshots lifted to the reference grid."""
        hier = self.simulator.hierarchy
        res_f = self.simulator.run(level, sample, field_times=(time,))
        fine = hier.lift(res_f.snapshots[time], level, reference_level)
        work = res_f.cost.work_units
        coarse = None
        if level > 0:
            res_c = self.simulator.run(level - 1, sample, field_times=(time,))
            coarse = hier.lift(res_c.snapshots[time], level - 1, reference_level)
            work += res_c.cost.work_units
        return fine, coarse, work


# ---------------------------------------------------------------------------
# synthetic samplers (test hooks and demos)
# ---------------------------------------------------------------------------

class GeometricSampler:
    """Deterministic decays plus a controlled noise term.

    E[g_l - g_{l-1}] = c1 2^(-alpha l) and Var[g_l - g_{l-1}] =
    c2 2^(-beta l) hold exactly in distribution (xi2 uniform on [-1, 1]).
    """

    def __init__(self, alpha=1.0, c1=1.0, beta=2.0, c2=0.01, d_hat=D_HAT,
                 gamma=1.0):
        self.alpha, self.c1 = alpha, c1
        self.beta, self.c2 = beta, c2
        self.d_hat, self.gamma = d_hat, gamma

    def _delta(self, level, sample):
        spread = math.sqrt(3.0 * self.c2 * 2.0 ** (-self.beta * level))
        return self.c1 * 2.0 ** (-self.alpha * level) + spread * sample.xi[1]

    def coupled(self, level, sample: SamplePoint) -> CoupledValue:
        work = 2.0 ** (self.d_hat * self.gamma * level)
        g_fine = sum(self._delta(l, sample) for l in range(level + 1))
        g_coarse = None if level == 0 else g_fine - self._delta(level, sample)
        return CoupledValue(g_fine=g_fine, g_coarse=g_coarse, work=work)


class SinModelSampler:
    """g_l(xi) = sin(pi xi1) + c1 2^(-alpha l) (1 + 0.1 xi2).

    E[g] = 0 in the level limit; the level-L mean is c1 2^(-alpha L).
    """

    def __init__(self, alpha=1.0, c1=1.0, d_hat=D_HAT):
        self.alpha, self.c1, self.d_hat = alpha, c1, d_hat

    def level_value(self, level, sample):
        return math.sin(math.pi * sample.xi[0]) \
            + self.c1 * 2.0 ** (-self.alpha * level) * (1.0 + 0.1 * sample.xi[1])

    def analytic_mean(self, level) -> float:
        return self.c1 * 2.0 ** (-self.alpha * level)

    def coupled(self, level, sample: SamplePoint) -> CoupledValue:
        g_fine = self.level_value(level, sample)
        g_coarse = None if level == 0 else self.level_value(level - 1, sample)
        return CoupledValue(g_fine=g_fine, g_coarse=g_coarse,
                            work=2.0 ** (self.d_hat * level))


class ConstantSampler:
    """Level-independent values: all telescoping corrections vanish."""

    def __init__(self, offset=2.0, amplitude=1.0):
        self.offset = offset
        self.amplitude = amplitude

    def coupled(self, level, sample: SamplePoint) -> CoupledValue:
        g = self.offset + self.amplitude * sample.xi[0]
        g_coarse = None if level == 0 else g
        return CoupledValue(g_fine=g, g_coarse=g_coarse, work=1.0)
