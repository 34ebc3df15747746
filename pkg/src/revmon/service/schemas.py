"""Pydantic request/response models for the HTTP API.

These models are the published wire schema: config files consumed by the CLI
are validated against the request models (unknown keys are rejected), and
every response the service returns instantiates one of the response models.
"""

from __future__ import annotations

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from .. import data, harness, monitor
from ..estimate import FitResult, WaldTest


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


# ---------------------------------------------------------------------------
# datasets


class SubjectPayload(StrictModel):
    id: str
    enroll_time: float
    event_times: list[float] = Field(default_factory=list)
    arm: Optional[int] = None
    dropout_time: Optional[float] = None


class DatasetPayload(StrictModel):
    subjects: list[SubjectPayload]
    tau_a: Optional[float] = None
    tau_f: Optional[float] = None

    def to_dataset(self) -> data.TrialDataset:
        duration = None
        if self.tau_a is not None and self.tau_f is not None:
            duration = (self.tau_a, self.tau_f)
        return data.TrialDataset(
            subjects=tuple(
                data.SubjectRecord(
                    id=s.id,
                    enroll_time=s.enroll_time,
                    event_times=tuple(s.event_times),
                    arm=s.arm,
                    dropout_time=s.dropout_time,
                )
                for s in self.subjects
            ),
            design_duration=duration,
        )

    @classmethod
    def from_dataset(cls, ds: data.TrialDataset, blinded: bool = False) -> "DatasetPayload":
        tau_a, tau_f = ds.design_duration if ds.design_duration else (None, None)
        return cls(
            subjects=[
                SubjectPayload(
                    id=s.id,
                    enroll_time=s.enroll_time,
                    event_times=list(s.event_times),
                    arm=None if blinded else s.arm,
                    dropout_time=s.dropout_time,
                )
                for s in ds.subjects
            ],
            tau_a=tau_a,
            tau_f=tau_f,
        )


# ---------------------------------------------------------------------------
# design


class DesignRequest(StrictModel):
    schema_version: Literal[1] = 1
    alpha: float = 0.05
    power_target: float = 0.8
    beta0: float
    pi: float = 0.5
    tau_a: float
    tau_f: float
    lambda_: float = Field(alias="lambda")
    nu: float
    theta: float
    rounding: Literal["early", "late"] = "early"
    cushion: int = 0
    mu_bar: Optional[float] = None


class DesignResponse(StrictModel):
    l_base_raw: float
    l_base: int
    mu_bar: float
    inflation_factor: float
    l_events: int
    n_subjects: int
    v2_target: float


# ---------------------------------------------------------------------------
# simulation


class SimulateRequest(StrictModel):
    schema_version: Literal[1] = 1
    lambda_: float = Field(alias="lambda")
    nu: float
    theta: float
    beta0: float
    pi: float = 0.5
    tau_a: float
    tau_f: float
    n: int
    seed: int = 0
    blinded: bool = False


# ---------------------------------------------------------------------------
# fitting


class FitRequest(StrictModel):
    schema_version: Literal[1] = 1
    dataset: DatasetPayload
    at: Optional[float] = None
    alpha: float = 0.05
    tol: float = 1e-9
    max_iter: int = 50


class FitResponse(StrictModel):
    beta_hat: float
    se_robust: float
    se_naive: float
    rate_ratio: float
    rr_ci_low: float
    rr_ci_high: float
    z: float
    p_value: float
    reject: bool
    alpha: float
    iterations: int
    score_at_solution: float
    v2_robust: float
    v2_naive: float
    n_subjects: int
    n_events: int
    analysis_time: float

    @classmethod
    def from_fit(cls, fit: FitResult, test: WaldTest, alpha: float, at: float, zq: float) -> "FitResponse":
        half = zq * fit.se_robust
        return cls(
            beta_hat=fit.beta_hat,
            se_robust=fit.se_robust,
            se_naive=fit.se_naive,
            rate_ratio=math.exp(fit.beta_hat),
            rr_ci_low=math.exp(fit.beta_hat - half),
            rr_ci_high=math.exp(fit.beta_hat + half),
            z=test.z,
            p_value=test.p,
            reject=test.reject,
            alpha=alpha,
            iterations=fit.iterations,
            score_at_solution=fit.score_at_solution,
            v2_robust=fit.v2_robust,
            v2_naive=fit.v2_naive,
            n_subjects=fit.n_subjects,
            n_events=fit.n_events,
            analysis_time=at,
        )


# ---------------------------------------------------------------------------
# monitoring


class BootstrapSettings(StrictModel):
    replicates: int = 2000
    level: float = 0.95
    seed: int = 0


class MonitorRequest(StrictModel):
    schema_version: Literal[1] = 1
    dataset: DatasetPayload
    beta0: float
    alpha: float = 0.05
    pi: float = 0.5
    v2_target: Optional[float] = None
    power_target: Optional[float] = None
    schedule: Literal["continuous", "weekly", "monthly", "custom"] = "continuous"
    grid: Optional[list[float]] = None
    start_min_elapsed: float = 1.0 / 12.0
    start_min_events: int = 20
    max_horizon: float = 15.0
    full_trajectory: bool = False
    bootstrap: Optional[BootstrapSettings] = None


class MonitorPointPayload(StrictModel):
    s: float
    n_events: int
    n_enrolled: int
    v2_blind: Optional[float]
    power: Optional[float]
    crossed: bool
    v2_low: Optional[float] = None
    v2_high: Optional[float] = None
    power_low: Optional[float] = None
    power_high: Optional[float] = None

    @classmethod
    def from_point(cls, p: monitor.MonitorPoint) -> "MonitorPointPayload":
        return cls(
            s=p.s,
            n_events=p.n_events,
            n_enrolled=p.n_enrolled,
            v2_blind=p.v2_blind,
            power=p.power,
            crossed=p.crossed,
            v2_low=p.v2_ci[0] if p.v2_ci else None,
            v2_high=p.v2_ci[1] if p.v2_ci else None,
            power_low=p.power_ci[0] if p.power_ci else None,
            power_high=p.power_ci[1] if p.power_ci else None,
        )


class DecisionPayload(StrictModel):
    stopped: bool
    v2_target: float
    stop_time: Optional[float] = None
    stop_events: Optional[int] = None
    v2_at_stop: Optional[float] = None
    power_at_stop: Optional[float] = None


class MonitorResponse(StrictModel):
    points: list[MonitorPointPayload]
    decision: DecisionPayload


class BootstrapRequest(StrictModel):
    schema_version: Literal[1] = 1
    dataset: DatasetPayload
    beta0: float
    alpha: float = 0.05
    at: Optional[float] = None
    replicates: int = 2000
    level: float = 0.95
    seed: int = 0


class BootstrapResponse(StrictModel):
    at: float
    n_events: int
    n_enrolled: int
    v2_point: float
    power_point: float
    v2_low: float
    v2_high: float
    power_low: float
    power_high: float
    replicates: int
    level: float


# ---------------------------------------------------------------------------
# experiments


class ScenarioPayload(StrictModel):
    nu_true: float
    theta_true: float
    tau_a: float = 1.0
    tau_f: float = 2.0
    lambda_true: float = 1.0
    nu_assumed: Optional[float] = None
    theta_assumed: Optional[float] = None
    lambda_assumed: Optional[float] = None
    name: Optional[str] = None

    def to_scenario(self) -> harness.Scenario:
        return harness.Scenario(**self.model_dump())


class ExperimentRequest(StrictModel):
    schema_version: Literal[1] = 1
    scenarios: list[ScenarioPayload]
    replicates: int = 500
    designs: Literal["fixed", "proposed", "both"] = "both"
    null_mode: bool = False
    alpha: float = 0.05
    power_target: float = 0.8
    beta0: float = math.log(0.8)
    pi: float = 0.5
    horizon: float = 15.0
    base_seed: int = 20240101
    start_min_elapsed: float = 1.0 / 12.0
    start_min_events: int = 20
    workers: int = 1
    include_replicates: bool = False

    def to_config(self) -> harness.ExperimentConfig:
        return harness.ExperimentConfig(
            scenarios=tuple(s.to_scenario() for s in self.scenarios),
            replicates=self.replicates,
            designs=self.designs,
            null_mode=self.null_mode,
            alpha=self.alpha,
            power_target=self.power_target,
            beta0=self.beta0,
            pi=self.pi,
            horizon=self.horizon,
            base_seed=self.base_seed,
            start_min_elapsed=self.start_min_elapsed,
            start_min_events=self.start_min_events,
        )


class SummaryPayload(StrictModel):
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


class ReplicatePayload(StrictModel):
    scenario: str
    design: str
    replicate: int
    status: str
    analysis_time: Optional[float] = None
    n_events: Optional[int] = None
    beta_hat: Optional[float] = None
    se_robust: Optional[float] = None
    reject: Optional[bool] = None


class ExperimentResponse(StrictModel):
    summaries: list[SummaryPayload]
    replicates: Optional[list[ReplicatePayload]] = None


class HealthResponse(StrictModel):
    status: str
    version: str


class ErrorDetail(StrictModel):
    type: Literal["validation", "runtime"]
    message: str
