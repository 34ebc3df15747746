"""Replicated trial experiments: fixed event-count design vs variance monitoring.

Each replicate simulates one trial and analyzes it under two rules sharing
the same data: the fixed design analyzes at the calendar time of the
``L``-th event, while the monitored design analyzes at the first time the
blinded variance crosses its target. Subjects stay under observation until
their analysis happens, so generation runs to the experiment horizon; the
planned accrual/follow-up durations enter only the design-stage numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .data import TrialDataset, snapshot
from .design import DesignSpec, ingel_events, plan, sample_size, target_variance
from .errors import ConvergenceError, DataFormatError, DegenerateDataError
from .estimate import fit_beta, wald_test
from .monitor import MonitorConfig, monitor_trajectory
from .simulate import ScenarioParams, simulate_trial

__all__ = [
    "Scenario",
    "ExperimentConfig",
    "ReplicateOutcome",
    "ScenarioSummary",
    "run_fixed",
    "run_proposed",
    "run_scenario",
    "run_experiment",
    "summarize",
]

DESIGN_CHOICES = ("fixed", "proposed", "both")


@dataclass(frozen=True)
class Scenario:
    """One cell of the experiment grid.

    ``*_true`` parameters drive data generation; ``*_assumed`` (defaulting to
    the true values) drive the design-stage numbers, so misspecification
    scenarios set them apart.
    """

    nu_true: float
    theta_true: float
    tau_a: float = 1.0
    tau_f: float = 2.0
    lambda_true: float = 1.0
    nu_assumed: Optional[float] = None
    theta_assumed: Optional[float] = None
    lambda_assumed: Optional[float] = None
    name: Optional[str] = None

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return (
            f"nu={self.nu_true}/{self.nu_eff} theta={self.theta_true}/{self.theta_eff} "
            f"tau=({self.tau_a},{self.tau_f})"
        )

    @property
    def nu_eff(self) -> float:
        return self.nu_true if self.nu_assumed is None else self.nu_assumed

    @property
    def theta_eff(self) -> float:
        return self.theta_true if self.theta_assumed is None else self.theta_assumed

    @property
    def lambda_eff(self) -> float:
        return self.lambda_true if self.lambda_assumed is None else self.lambda_assumed


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid, replication, and seeding for one experiment run."""

    scenarios: tuple[Scenario, ...]
    replicates: int = 500
    designs: str = "both"
    null_mode: bool = False
    alpha: float = 0.05
    power_target: float = 0.8
    beta0: float = math.log(0.8)
    pi: float = 0.5
    horizon: float = 15.0
    base_seed: int = 20240101
    start_min_elapsed: float = 1.0 / 12.0
    start_min_events: int = 20

    def __post_init__(self):
        if not self.scenarios:
            raise DataFormatError("experiment requires at least one scenario")
        if self.replicates < 1:
            raise DataFormatError("replicates must be >= 1")
        if self.designs not in DESIGN_CHOICES:
            raise DataFormatError(f"designs must be one of {DESIGN_CHOICES}")
        object.__setattr__(self, "scenarios", tuple(self.scenarios))


@dataclass(frozen=True)
class ReplicateOutcome:
    """Result of analyzing one replicate under one design."""

    scenario: str
    design: str
    replicate: int
    status: str  # analyzed | not_stopped | censored
    analysis_time: Optional[float] = None
    n_events: Optional[int] = None
    beta_hat: Optional[float] = None
    se_robust: Optional[float] = None
    reject: Optional[bool] = None


@dataclass(frozen=True)
class ScenarioSummary:
    """Operating characteristics of one design in one scenario."""

    scenario: str
    design: str
    n_subjects: int
    l_target: int
    v2_target: float
    n_replicates: int
    n_completed: int
    rejection_rate: float
    time_median: float
    time_q1: float
    time_q3: float
    events_median: float
    events_q1: float
    events_q3: float
    incomplete_fraction: float


def _design_numbers(scenario: Scenario, cfg: ExperimentConfig) -> tuple[int, int, float]:
    spec = DesignSpec(
        alpha=cfg.alpha,
        power_target=cfg.power_target,
        beta0=cfg.beta0,
        pi=cfg.pi,
        tau_a=scenario.tau_a,
        tau_f=scenario.tau_f,
        lambda_=scenario.lambda_eff,
        nu=scenario.nu_eff,
        theta=scenario.theta_eff,
    )
    l_target = ingel_events(spec)
    n = sample_size(spec, l_target)
    v2 = target_variance(cfg.beta0, cfg.alpha, cfg.power_target)
    return l_target, n, v2


def run_fixed(
    dataset: TrialDataset, l_target: int, alpha: float, horizon: float
) -> tuple[str, Optional[float], Optional[int], Optional[object]]:
    """Analyze at the calendar time of the ``l_target``-th event.

    Returns ``(status, analysis_time, events, fit)``; status is ``censored``
    when the dataset never accrues ``l_target`` events by the horizon.
    """
    ev_cal = dataset.event_calendar_times()
    if ev_cal.size < l_target or ev_cal[l_target - 1] > horizon:
        return "censored", None, None, None
    s = float(ev_cal[l_target - 1])
    fit = fit_beta(snapshot(dataset, s))
    return "analyzed", s, l_target, fit


def run_proposed(
    dataset: TrialDataset,
    v2_target: float,
    beta0: float,
    alpha: float,
    horizon: float,
    start_min_elapsed: float,
    start_min_events: int,
) -> tuple[str, Optional[float], Optional[int], Optional[object]]:
    """Analyze at the first blinded-variance crossing on the event-time grid."""
    grid = tuple(float(t) for t in dataset.event_calendar_times() if t <= horizon)
    if not grid:
        return "not_stopped", None, None, None
    cfg = MonitorConfig(
        v2_target=v2_target,
        schedule="custom",
        grid=grid,
        start_min_elapsed=start_min_elapsed,
        start_min_events=start_min_events,
        max_horizon=horizon,
    )
    result = monitor_trajectory(dataset, cfg, beta0=beta0, alpha=alpha)
    if result.decision is None:
        return "not_stopped", None, None, None
    s = result.decision.stop_time
    fit = fit_beta(snapshot(dataset, s))
    return "analyzed", s, result.decision.stop_events, fit


def _run_replicate(args) -> list[ReplicateOutcome]:
    scenario, cfg, r, l_target, n, v2_target = args
    params = ScenarioParams(
        lambda_=scenario.lambda_true,
        nu=scenario.nu_true,
        theta=scenario.theta_true,
        beta0=0.0 if cfg.null_mode else cfg.beta0,
        pi=cfg.pi,
        tau_a=scenario.tau_a,
        tau_f=cfg.horizon - scenario.tau_a,
        n=n,
        seed=cfg.base_seed + r,
    )
    dataset = simulate_trial(params)
    out: list[ReplicateOutcome] = []

    def _record(design: str, status, s, events, fit):
        if status != "analyzed":
            out.append(
                ReplicateOutcome(scenario=scenario.label, design=design, replicate=r, status=status)
            )
            return
        test = wald_test(fit, cfg.alpha)
        out.append(
            ReplicateOutcome(
                scenario=scenario.label,
                design=design,
                replicate=r,
                status="analyzed",
                analysis_time=s,
                n_events=events,
                beta_hat=fit.beta_hat,
                se_robust=fit.se_robust,
                reject=test.reject,
            )
        )

    if cfg.designs in ("fixed", "both"):
        _record("fixed", *run_fixed(dataset, l_target, cfg.alpha, cfg.horizon))
    if cfg.designs in ("proposed", "both"):
        _record(
            "proposed",
            *run_proposed(
                dataset,
                v2_target,
                cfg.beta0,
                cfg.alpha,
                cfg.horizon,
                cfg.start_min_elapsed,
                cfg.start_min_events,
            ),
        )
    return out


def run_scenario(
    scenario: Scenario,
    cfg: ExperimentConfig,
    workers: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> list[ReplicateOutcome]:
    """All replicate outcomes for one scenario (deterministic given the seed)."""
    l_target, n, v2_target = _design_numbers(scenario, cfg)
    if progress:
        progress(f"scenario {scenario.label}: n={n} L={l_target} v2_target={v2_target:.6g}")
    tasks = [(scenario, cfg, r, l_target, n, v2_target) for r in range(cfg.replicates)]
    records: list[ReplicateOutcome] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, chunk in enumerate(pool.map(_run_replicate, tasks, chunksize=8)):
                records.extend(chunk)
                if progress and (i + 1) % 100 == 0:
                    progress(f"  {i + 1}/{cfg.replicates} replicates")
    else:
        for i, task in enumerate(tasks):
            records.extend(_run_replicate(task))
            if progress and (i + 1) % 100 == 0:
                progress(f"  {i + 1}/{cfg.replicates} replicates")
    return records


def summarize(
    records: Sequence[ReplicateOutcome],
    design_numbers: Optional[dict[str, tuple[int, int, float]]] = None,
) -> list[ScenarioSummary]:
    """Aggregate outcomes per (scenario, design).

    Rejection rates and time/event quantiles cover completed (analyzed)
    replicates only; the fraction that never completed (never stopped, or
    censored at the horizon) is reported alongside. Quantiles use linear
    interpolation.
    """
    if not records:
        raise DataFormatError("no replicate records to summarize")
    keys = []
    for rec in records:
        key = (rec.scenario, rec.design)
        if key not in keys:
            keys.append(key)
    out = []
    for scenario, design in keys:
        group = [r for r in records if r.scenario == scenario and r.design == design]
        done = [r for r in group if r.status == "analyzed"]
        if not done:
            raise DegenerateDataError(f"no completed replicates for {scenario} / {design}")
        times = np.array([r.analysis_time for r in done])
        events = np.array([r.n_events for r in done], dtype=float)
        t_q1, t_med, t_q3 = np.quantile(times, [0.25, 0.5, 0.75])
        e_q1, e_med, e_q3 = np.quantile(events, [0.25, 0.5, 0.75])
        nums = (design_numbers or {}).get(scenario, (0, 0, float("nan")))
        out.append(
            ScenarioSummary(
                scenario=scenario,
                design=design,
                n_subjects=nums[1],
                l_target=nums[0],
                v2_target=nums[2],
                n_replicates=len(group),
                n_completed=len(done),
                rejection_rate=float(np.mean([r.reject for r in done])),
                time_median=float(t_med),
                time_q1=float(t_q1),
                time_q3=float(t_q3),
                events_median=float(e_med),
                events_q1=float(e_q1),
                events_q3=float(e_q3),
                incomplete_fraction=1.0 - len(done) / len(group),
            )
        )
    return out


@dataclass(frozen=True)
class ExperimentResult:
    summaries: tuple[ScenarioSummary, ...]
    records: tuple[ReplicateOutcome, ...]


def run_experiment(
    cfg: ExperimentConfig,
    workers: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> ExperimentResult:
    """Run every scenario in the grid and summarize.

    Output is identical for any ``workers`` count: replicate ``r`` of every
    scenario always uses seed ``base_seed + r``.
    """
    all_records: list[ReplicateOutcome] = []
    numbers: dict[str, tuple[int, int, float]] = {}
    for scenario in cfg.scenarios:
        numbers[scenario.label] = _design_numbers(scenario, cfg)
        all_records.extend(run_scenario(scenario, cfg, workers=workers, progress=progress))
    summaries = summarize(all_records, design_numbers=numbers)
    return ExperimentResult(summaries=tuple(summaries), records=tuple(all_records))
