"""Synthetic ground-truth scenes and end-to-end planner experiments.

Scenes are drawn from the same closed-form surface family the profiler
fits, so fitting error and solver error can be separated: an experiment
runs sampling -> noisy measurement -> fitting -> selection, then scores
every solver's plan on the *true* surfaces against the exact true-surface
optimum (the regret reference). All randomness flows through seeded
PCG64 streams (numpy's named, portable generator), so a (seed, scene,
budget) triple fully determines the outputs.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .core import (
    AllocationPlan,
    ConfigSpace,
    DeviceBudget,
    NerfplanError,
    SampleObservation,
    atomic_write_text,
    write_json,
)
from ._parallel import parallel_map
from .profiler import (
    ProfileModel,
    QualityModelParams,
    SizeModelParams,
    eval_quality,
    eval_size,
    fit_profile,
    sampling_plan,
)
from .selector import (
    Candidate,
    GloballyInfeasible,
    Infeasible,
    SOLVERS,
    TooLarge,
    capacity_units,
    feasibility_filter,
    quantize_groups,
    solve_dp,
)

RNG_ALGORITHM = "pcg64"

# 9 x 5 grid = 45 configs, mirroring the profiling error study; the
# "small" 5 x 5 grid keeps 5-object scenes inside the oracle guard.
DEFAULT_G_VALUES = (16, 24, 32, 48, 64, 80, 96, 128, 160)
DEFAULT_P_VALUES = (8, 10, 12, 14, 17)
SMALL_G_VALUES = (16, 32, 64, 96, 160)
SMALL_P_VALUES = (8, 10, 12, 14, 17)

DEFAULT_NOISE_SD_SIZE_MB = 1.0
DEFAULT_NOISE_SD_QUALITY = 0.005

COMPLEXITY_PROFILES = ("low", "high", "mixed", "random")

# Asymptotic-size draw ranges (MB) per complexity class.
_M_RANGES = {"low": (10.0, 30.0), "high": (50.0, 90.0), "random": (10.0, 90.0)}
# Quality ceiling draw ranges: complex objects have more quality headroom.
_QMAX_RANGES = {"low": (0.90, 0.98), "high": (0.80, 0.95), "random": (0.80, 0.98)}


class ConfigOutOfSpace(NerfplanError):
    pass


@dataclass(frozen=True)
class SyntheticObjectSpec:
    """Known-truth object: exact surfaces plus measurement noise levels."""

    object_id: str
    true_size: SizeModelParams
    true_quality: QualityModelParams
    noise_sd_size_mb: float
    noise_sd_quality: float
    space: ConfigSpace


@dataclass(frozen=True)
class SolverOutcome:
    solver: str
    feasible: bool
    total_true_quality: "float | None"
    total_true_size_mb: "float | None"
    regret_vs_oracle: "float | None"
    wall_time_ms: float
    plan: "AllocationPlan | None"


@dataclass(frozen=True)
class ExperimentResult:
    scene_id: str
    seed: int
    profile: str
    budget: DeviceBudget
    per_solver: tuple[SolverOutcome, ...]
    fit_errors: dict[str, tuple[float, float]]  # object_id -> (mae_size, mae_quality)
    true_optimum_quality: "float | None"


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), stream))))


def generate_scene(
    seed: int,
    n_objects: int = 5,
    complexity_profile: str = "random",
    g_values: tuple[int, ...] = DEFAULT_G_VALUES,
    p_values: tuple[int, ...] = DEFAULT_P_VALUES,
    noise_sd_size_mb: float = DEFAULT_NOISE_SD_SIZE_MB,
    noise_sd_quality: float = DEFAULT_NOISE_SD_QUALITY,
) -> list[SyntheticObjectSpec]:
    """Draw a deterministic scene of known-truth objects.

    The same seed consumes the same underlying uniform draws regardless
    of profile, so `low` and `high` scenes pair up object-for-object with
    the high object at least as large at every config.
    """
    if n_objects < 1:
        raise ValueError(f"n_objects must be >= 1, got {n_objects}")
    if complexity_profile not in COMPLEXITY_PROFILES:
        raise ValueError(
            f"unknown complexity profile {complexity_profile!r}; known: {COMPLEXITY_PROFILES}"
        )
    rng = _rng(seed, 0)
    g_lo, g_hi = min(g_values), max(g_values)
    p_lo, p_hi = min(p_values), max(p_values)

    objects = []
    for i in range(n_objects):
        if complexity_profile == "mixed":
            klass = "low" if i % 2 == 0 else "high"
        else:
            klass = complexity_profile
        m_lo, m_hi = _M_RANGES[klass]
        q_lo, q_hi = _QMAX_RANGES[klass]

        u_m = rng.random()
        a = rng.uniform(0.0, 8.0)
        b = rng.uniform(0.0, 4.0)
        fill = rng.uniform(0.15, 0.35)  # size at min config as a fraction of m
        a_q = rng.uniform(0.0, 8.0)
        b_q = rng.uniform(0.0, 4.0)
        u_q = rng.random()

        m = m_lo + (m_hi - m_lo) * u_m
        k = (1.0 - fill) * m * (g_lo + a) ** 3 * (p_lo + b) ** 2
        q_max = q_lo + (q_hi - q_lo) * u_q
        k_q = q_max / ((g_hi + a_q) ** 3 * (p_hi + b_q) ** 2)

        object_id = f"obj{i:02d}"
        objects.append(
            SyntheticObjectSpec(
                object_id=object_id,
                true_size=SizeModelParams(k=k, a=a, b=b, m=m),
                true_quality=QualityModelParams(k_q=k_q, a_q=a_q, b_q=b_q),
                noise_sd_size_mb=noise_sd_size_mb,
                noise_sd_quality=noise_sd_quality,
                space=ConfigSpace.product(object_id, g_values, p_values),
            )
        )
    return objects


def measure(spec: SyntheticObjectSpec, c, rng: np.random.Generator) -> SampleObservation:
    """Simulate training-and-baking one config: true surface plus noise."""
    if c not in spec.space.pairs:
        raise ConfigOutOfSpace(f"config ({c.g}, {c.p}) not in space of {spec.object_id!r}")
    size = eval_size(spec.true_size, c)
    quality = eval_quality(spec.true_quality, c)
    if spec.noise_sd_size_mb > 0:
        size += rng.normal(0.0, spec.noise_sd_size_mb)
    if spec.noise_sd_quality > 0:
        quality += rng.normal(0.0, spec.noise_sd_quality)
    return SampleObservation(
        config=c,
        size_mb=max(0.0, size),
        quality=min(1.0, max(0.0, quality)),
    )


def _true_candidates(scene: "list[SyntheticObjectSpec]") -> "list[tuple[str, list[Candidate]]]":
    named = []
    for spec in scene:
        cands = [
            Candidate(c, eval_size(spec.true_size, c), eval_quality(spec.true_quality, c))
            for c in spec.space.pairs
        ]
        named.append((spec.object_id, cands))
    return named


def run_experiment(
    scene: "list[SyntheticObjectSpec]",
    budget: DeviceBudget,
    solvers: "tuple[str, ...]" = ("dp", "fairness", "greedy"),
    seed: int = 0,
    scene_id: str = "scene",
    profile: str = "random",
    unit_mb: float = 1.0,
) -> ExperimentResult:
    """One end-to-end run: sample, measure, fit, plan, score on truth.

    Each solver plans on the fitted surfaces; its plan is then re-scored
    on the true surfaces and compared with the exact true-surface optimum
    (regret). A budget no scene fits under is recorded as infeasible rows
    rather than raised.
    """
    for name in solvers:
        if name not in SOLVERS:
            raise ValueError(f"unknown solver {name!r}; known: {sorted(SOLVERS)}")
    rng = _rng(seed, 1)

    fitted: list[tuple[ProfileModel, ConfigSpace]] = []
    fit_errors: dict[str, tuple[float, float]] = {}
    for spec in scene:
        plan = sampling_plan(spec.space)
        samples = [measure(spec, c, rng) for c in plan.points]
        model = fit_profile(spec.object_id, samples, spec.space)
        fitted.append((model, spec.space))
        err_s = [abs(eval_size(model.size, c) - eval_size(spec.true_size, c)) for c in spec.space.pairs]
        err_q = [
            abs(eval_quality(model.quality, c) - eval_quality(spec.true_quality, c))
            for c in spec.space.pairs
        ]
        fit_errors[spec.object_id] = (float(np.mean(err_s)), float(np.mean(err_q)))

    h = capacity_units(budget.capacity_mb, unit_mb)
    true_by_id = {spec.object_id: spec for spec in scene}

    # Exact optimum on the true surfaces: the regret reference.
    true_optimum = None
    try:
        true_groups, _ = feasibility_filter(quantize_groups(_true_candidates(scene), unit_mb), h)
        true_optimum = solve_dp(true_groups, h, budget_mb=budget.capacity_mb, unit_mb=unit_mb)
    except (GloballyInfeasible, Infeasible):
        pass

    fitted_candidates = [
        (model.object_id, [
            Candidate(c, eval_size(model.size, c), eval_quality(model.quality, c))
            for c in space.pairs
        ])
        for model, space in fitted
    ]

    outcomes = []
    for name in solvers:
        start = time.perf_counter()
        plan = None
        try:
            groups, _ = feasibility_filter(quantize_groups(fitted_candidates, unit_mb), h)
            plan = SOLVERS[name](groups, h, budget_mb=budget.capacity_mb, unit_mb=unit_mb)
        except (GloballyInfeasible, Infeasible, TooLarge):
            plan = None
        wall_ms = (time.perf_counter() - start) * 1000.0

        if plan is None:
            outcomes.append(
                SolverOutcome(name, False, None, None, None, wall_ms, None)
            )
            continue
        true_q = 0.0
        true_s = 0.0
        for entry in plan.entries:
            spec = true_by_id[entry.object_id]
            true_q += eval_quality(spec.true_quality, entry.config)
            true_s += eval_size(spec.true_size, entry.config)
        regret = None
        if true_optimum is not None:
            regret = true_optimum.total_quality - true_q
        outcomes.append(SolverOutcome(name, True, true_q, true_s, regret, wall_ms, plan))

    return ExperimentResult(
        scene_id=scene_id,
        seed=seed,
        profile=profile,
        budget=budget,
        per_solver=tuple(outcomes),
        fit_errors=fit_errors,
        true_optimum_quality=None if true_optimum is None else true_optimum.total_quality,
    )


def run_many(
    master_seed: int,
    n_scenes: int,
    budget: DeviceBudget,
    solvers: "tuple[str, ...]" = ("dp", "fairness", "greedy"),
    complexity_profile: str = "random",
    n_objects: int = 5,
    g_values: tuple[int, ...] = DEFAULT_G_VALUES,
    p_values: tuple[int, ...] = DEFAULT_P_VALUES,
    noise_sd_size_mb: float = DEFAULT_NOISE_SD_SIZE_MB,
    noise_sd_quality: float = DEFAULT_NOISE_SD_QUALITY,
    unit_mb: float = 1.0,
) -> list[ExperimentResult]:
    """Run n_scenes independent experiments on the worker pool.

    Scene i derives its own seed from (master_seed, i), so the result
    set is independent of the thread count and execution order.
    """
    seeds = [
        int(np.random.SeedSequence((int(master_seed), i)).generate_state(1)[0])
        for i in range(n_scenes)
    ]

    def one(i: int) -> ExperimentResult:
        scene = generate_scene(
            seeds[i],
            n_objects=n_objects,
            complexity_profile=complexity_profile,
            g_values=g_values,
            p_values=p_values,
            noise_sd_size_mb=noise_sd_size_mb,
            noise_sd_quality=noise_sd_quality,
        )
        return run_experiment(
            scene,
            budget,
            solvers=solvers,
            seed=seeds[i],
            scene_id=f"scene{i:03d}",
            profile=complexity_profile,
        )

    return parallel_map(one, range(n_scenes))


# ---------------------------------------------------------------------------
# results.csv
# ---------------------------------------------------------------------------

RESULTS_COLUMNS = (
    "scene_id",
    "seed",
    "profile",
    "solver",
    "feasible",
    "total_true_quality",
    "total_true_size_mb",
    "regret_vs_oracle",
    "wall_time_ms",
)

_SOLVER_ORDER = {name: i for i, name in enumerate(SOLVERS)}


def results_rows(results: "list[ExperimentResult]", include_timing: bool = False) -> list[list[str]]:
    """Flatten results to CSV rows, sorted canonically.

    Wall time is only emitted when include_timing is set; it is the one
    non-deterministic column, so the default keeps the file byte-stable.
    """
    rows = []
    for res in results:
        for out in res.per_solver:
            rows.append(
                [
                    res.scene_id,
                    str(res.seed),
                    res.profile,
                    out.solver,
                    "true" if out.feasible else "false",
                    "" if out.total_true_quality is None else repr(out.total_true_quality),
                    "" if out.total_true_size_mb is None else repr(out.total_true_size_mb),
                    "" if out.regret_vs_oracle is None else repr(out.regret_vs_oracle),
                    repr(out.wall_time_ms) if include_timing else "",
                ]
            )
    rows.sort(key=lambda r: (r[0], int(r[1]), _SOLVER_ORDER.get(r[3], 99)))
    return rows


def write_results_csv(path: str, results: "list[ExperimentResult]", include_timing: bool = False) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_COLUMNS)
    writer.writerows(results_rows(results, include_timing))
    atomic_write_text(path, buf.getvalue())
    write_json(
        path + ".meta.json",
        {
            "rng_algorithm": RNG_ALGORITHM,
            "columns": list(RESULTS_COLUMNS),
            "timing_recorded": include_timing,
        },
    )


def read_results_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def _aggregate(records: "list[tuple[str, str, bool, float | None, float | None]]") -> dict:
    """records: (solver, profile, feasible, regret, wall_time_ms) tuples."""
    if not records:
        raise ValueError("results must be nonempty")
    solver_names = []
    for solver, _, _, _, _ in records:
        if solver not in solver_names:
            solver_names.append(solver)

    def agg(rows) -> dict:
        regrets = [r for _, _, _, r, _ in rows if r is not None]
        times = [t for _, _, _, _, t in rows if t is not None]
        return {
            "n": len(rows),
            "infeasible_rate": sum(1 for _, _, ok, _, _ in rows if not ok) / len(rows),
            "mean_regret": float(np.mean(regrets)) if regrets else None,
            "max_regret": float(np.max(regrets)) if regrets else None,
            "mean_wall_time_ms": float(np.mean(times)) if times else None,
        }

    by_solver = {
        name: agg([r for r in records if r[0] == name]) for name in solver_names
    }
    by_profile: dict[str, dict] = {}
    for _, profile, _, _, _ in records:
        by_profile.setdefault(profile, {})
    for profile in by_profile:
        for name in solver_names:
            rows = [r for r in records if r[0] == name and r[1] == profile]
            if rows:
                by_profile[profile][name] = agg(rows)
    return {"by_solver": by_solver, "by_profile": by_profile}


def summarize(results: "list[ExperimentResult]") -> dict:
    """Aggregate regret/feasibility/timing per solver and per profile."""
    records = [
        (out.solver, res.profile, out.feasible, out.regret_vs_oracle, out.wall_time_ms)
        for res in results
        for out in res.per_solver
    ]
    return _aggregate(records)


def summarize_csv(rows: "list[dict]") -> dict:
    """Same aggregation as :func:`summarize`, from results.csv dict rows."""
    records = []
    for row in rows:
        records.append(
            (
                row["solver"],
                row["profile"],
                row["feasible"] == "true",
                float(row["regret_vs_oracle"]) if row["regret_vs_oracle"] else None,
                float(row["wall_time_ms"]) if row["wall_time_ms"] else None,
            )
        )
    return _aggregate(records)


SUMMARY_COLUMNS = (
    "profile",
    "solver",
    "n",
    "infeasible_rate",
    "mean_regret",
    "max_regret",
    "mean_wall_time_ms",
)


def summary_table(summary: dict) -> list[list[str]]:
    """Per-solver rows (profile '*') followed by per-profile breakdowns."""

    def fmt(value) -> str:
        return "" if value is None else repr(value)

    rows = []
    for scope, per_solver in [("*", summary["by_solver"])] + sorted(summary["by_profile"].items()):
        for solver, agg in per_solver.items():
            rows.append(
                [
                    scope,
                    solver,
                    str(agg["n"]),
                    repr(agg["infeasible_rate"]),
                    fmt(agg["mean_regret"]),
                    fmt(agg["max_regret"]),
                    fmt(agg["mean_wall_time_ms"]),
                ]
            )
    return rows
