"""FastAPI application exposing the pipeline over HTTP.

Domain validation failures map to 400 with ``{"detail": {"type":
"validation", ...}}``; convergence and other data-dependent runtime failures
map to 409 with ``type = "runtime"``. The CLI relies on this contract for
its exit codes.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from scipy.special import ndtri

from .. import __version__, data, design, harness, monitor, simulate
from ..errors import ConvergenceError, DataFormatError, DegenerateDataError
from ..estimate import fit_beta, wald_test
from . import schemas


def _analysis_time(ds: data.TrialDataset, at: float | None) -> float:
    if at is not None:
        return at
    # Default: the end of recorded follow-up, so every subject contributes
    # their full observation window.
    caps = [s.enroll_time + ds.max_followup(s) for s in ds.subjects]
    if any(c == float("inf") for c in caps):
        raise DataFormatError("dataset has unbounded follow-up; supply an analysis time")
    return max(caps)


def create_app() -> FastAPI:
    app = FastAPI(
        title="revmon",
        version=__version__,
        description="Event-driven design and blinded variance monitoring for recurrent-event trials",
    )

    @app.exception_handler(DataFormatError)
    @app.exception_handler(DegenerateDataError)
    async def _validation_handler(request: Request, exc: Exception):
        return JSONResponse(
            status_code=400,
            content={"detail": {"type": "validation", "message": str(exc)}},
        )

    @app.exception_handler(ConvergenceError)
    async def _runtime_handler(request: Request, exc: Exception):
        return JSONResponse(
            status_code=409,
            content={"detail": {"type": "runtime", "message": str(exc)}},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/design", response_model=schemas.DesignResponse)
    def design_endpoint(req: schemas.DesignRequest) -> schemas.DesignResponse:
        spec = design.DesignSpec(
            alpha=req.alpha,
            power_target=req.power_target,
            beta0=req.beta0,
            pi=req.pi,
            tau_a=req.tau_a,
            tau_f=req.tau_f,
            lambda_=req.lambda_,
            nu=req.nu,
            theta=req.theta,
        )
        out = design.plan(spec, mu_bar=req.mu_bar, rounding=req.rounding, cushion=req.cushion)
        return schemas.DesignResponse(
            l_base_raw=out.l_base_raw,
            l_base=out.l_base,
            mu_bar=out.mu_bar,
            inflation_factor=out.inflation,
            l_events=out.l_events,
            n_subjects=out.n_subjects,
            v2_target=out.v2_target,
        )

    @app.post("/simulate", response_model=schemas.DatasetPayload)
    def simulate_endpoint(req: schemas.SimulateRequest) -> schemas.DatasetPayload:
        params = simulate.ScenarioParams(
            lambda_=req.lambda_,
            nu=req.nu,
            theta=req.theta,
            beta0=req.beta0,
            pi=req.pi,
            tau_a=req.tau_a,
            tau_f=req.tau_f,
            n=req.n,
            seed=req.seed,
        )
        ds = simulate.simulate_trial(params)
        return schemas.DatasetPayload.from_dataset(ds, blinded=req.blinded)

    @app.post("/fit", response_model=schemas.FitResponse)
    def fit_endpoint(req: schemas.FitRequest) -> schemas.FitResponse:
        ds = req.dataset.to_dataset()
        at = _analysis_time(ds, req.at)
        snap = data.snapshot(ds, at)
        fit = fit_beta(snap, tol=req.tol, max_iter=req.max_iter)
        test = wald_test(fit, req.alpha)
        zq = float(ndtri(1 - req.alpha / 2))
        return schemas.FitResponse.from_fit(fit, test, req.alpha, at, zq)

    @app.post("/monitor", response_model=schemas.MonitorResponse)
    def monitor_endpoint(req: schemas.MonitorRequest) -> schemas.MonitorResponse:
        ds = req.dataset.to_dataset()
        if req.v2_target is not None:
            v2_target = req.v2_target
        elif req.power_target is not None:
            v2_target = design.target_variance(req.beta0, req.alpha, req.power_target)
        else:
            raise DataFormatError("provide either v2_target or power_target")
        cfg = monitor.MonitorConfig(
            v2_target=v2_target,
            schedule=req.schedule,
            grid=tuple(req.grid) if req.grid else None,
            start_min_elapsed=req.start_min_elapsed,
            start_min_events=req.start_min_events,
            max_horizon=req.max_horizon,
            stop_at_crossing=not req.full_trajectory,
            bootstrap=(
                monitor.BootstrapConfig(
                    replicates=req.bootstrap.replicates,
                    level=req.bootstrap.level,
                    seed=req.bootstrap.seed,
                )
                if req.bootstrap
                else None
            ),
        )
        result = monitor.monitor_trajectory(ds, cfg, beta0=req.beta0, alpha=req.alpha, pi=req.pi)
        if result.decision is not None:
            d = result.decision
            decision = schemas.DecisionPayload(
                stopped=True,
                v2_target=v2_target,
                stop_time=d.stop_time,
                stop_events=d.stop_events,
                v2_at_stop=d.v2_at_stop,
                power_at_stop=d.power_at_stop,
            )
        else:
            decision = schemas.DecisionPayload(stopped=False, v2_target=v2_target)
        return schemas.MonitorResponse(
            points=[schemas.MonitorPointPayload.from_point(p) for p in result.points],
            decision=decision,
        )

    @app.post("/bootstrap", response_model=schemas.BootstrapResponse)
    def bootstrap_endpoint(req: schemas.BootstrapRequest) -> schemas.BootstrapResponse:
        ds = req.dataset.to_dataset()
        at = _analysis_time(ds, req.at)
        snap = data.snapshot(ds, at, blinded=True)
        ci = monitor.bootstrap_ci(
            snap,
            req.beta0,
            req.alpha,
            replicates=req.replicates,
            level=req.level,
            seed=req.seed,
        )
        return schemas.BootstrapResponse(
            at=at,
            n_events=snap.total_events,
            n_enrolled=snap.n_enrolled,
            v2_point=ci.v2_point,
            power_point=ci.power_point,
            v2_low=ci.v2_low,
            v2_high=ci.v2_high,
            power_low=ci.power_low,
            power_high=ci.power_high,
            replicates=req.replicates,
            level=req.level,
        )

    @app.post("/experiment", response_model=schemas.ExperimentResponse)
    def experiment_endpoint(req: schemas.ExperimentRequest) -> schemas.ExperimentResponse:
        cfg = req.to_config()
        result = harness.run_experiment(cfg, workers=req.workers)
        return schemas.ExperimentResponse(
            summaries=[schemas.SummaryPayload(**asdict(s)) for s in result.summaries],
            replicates=(
                [schemas.ReplicatePayload(**asdict(r)) for r in result.records]
                if req.include_replicates
                else None
            ),
        )

    return app


app = create_app()
