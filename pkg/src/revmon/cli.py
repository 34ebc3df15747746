"""Command-line client for the revmon service.

The CLI is a thin client: every computation goes through the HTTP API. By
default the ASGI app is run in-process (no server needed); ``--server URL``
targets a running instance instead. Exit codes: 0 success, 1 validation
error, 2 runtime/convergence error. Diagnostics go to stderr; results go to
stdout or ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import httpx

from . import __version__
from .data import DAYS_PER_YEAR, events_csv_text, load_dataset, write_events_csv
from .service import schemas

TRAJECTORY_HEADER = ["s", "L", "n", "v2_blind", "power", "ci_lo", "ci_hi", "crossed"]


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


class Client:
    """HTTP access to the service, in-process unless ``--server`` is given."""

    def __init__(self, server: Optional[str]):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(f"service unreachable: {exc}", 2) from exc
        if resp.status_code == 200:
            return resp.json()
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        if isinstance(detail, dict):
            kind = detail.get("type", "runtime")
            message = detail.get("message", str(detail))
        elif isinstance(detail, list):  # pydantic validation errors
            kind = "validation"
            message = "; ".join(
                f"{'.'.join(str(p) for p in e.get('loc', []))}: {e.get('msg')}" for e in detail
            )
        else:
            kind, message = "runtime", str(detail)
        code = 1 if resp.status_code in (400, 422) or kind == "validation" else 2
        raise CliError(message, code)


def _read_json_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            content = json.load(fh)
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {path}", 1) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}", 1) from exc
    if not isinstance(content, dict):
        raise CliError(f"config file {path} must hold a JSON object", 1)
    if "schema_version" not in content:
        raise CliError(f"config file {path} is missing schema_version", 1)
    return content


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(subcommand: str, config: dict, inputs: list[str], seed: Optional[int]) -> dict:
    return {
        "tool": "revmon",
        "version": __version__,
        "subcommand": subcommand,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": seed,
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in inputs],
        "config": config,
    }


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _emit_json(doc: dict, out: Optional[str]) -> None:
    _emit(json.dumps(doc, indent=2, allow_nan=True), out)


def _dataset_payload_from_csv(path: str, time_unit: str) -> dict:
    try:
        ds = load_dataset(path, time_unit=time_unit)
    except FileNotFoundError as exc:
        raise CliError(f"data file not found: {path}", 1) from exc
    return schemas.DatasetPayload.from_dataset(ds).model_dump()


def _years(value: Optional[float], time_unit: str) -> Optional[float]:
    if value is None:
        return None
    return value / DAYS_PER_YEAR if time_unit == "days" else value


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_design(args, client: Client) -> int:
    config = _read_json_config(args.spec)
    if args.rounding:
        config["rounding"] = args.rounding
    if args.cushion is not None:
        config["cushion"] = args.cushion
    if args.mu_bar is not None:
        config["mu_bar"] = args.mu_bar
    result = client.post("/design", config)
    manifest = _manifest("design", config, [args.spec], None)
    if args.format == "text":
        lines = [
            "trial design report",
            f"  base events (raw)     {result['l_base_raw']:.4f}",
            f"  base events           {result['l_base']}",
            f"  mean baseline events  {result['mu_bar']:.6f}",
            f"  inflation factor      {result['inflation_factor']:.6f}",
            f"  target events L       {result['l_events']}",
            f"  target subjects n     {result['n_subjects']}",
            f"  target variance v2    {result['v2_target']:.6f}",
        ]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit_json({"manifest": manifest, "design": result}, args.out)
    return 0


def _cmd_simulate(args, client: Client) -> int:
    config = _read_json_config(args.params)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.blinded:
        config["blinded"] = True
    result = client.post("/simulate", config)
    manifest = _manifest("simulate", config, [args.params], config.get("seed"))
    if args.format == "json":
        _emit_json({"manifest": manifest, "dataset": result}, args.out)
        return 0
    ds = schemas.DatasetPayload.model_validate(result).to_dataset()
    if args.out:
        write_events_csv(ds, args.out, blinded=bool(config.get("blinded")))
        Path(args.out + ".manifest.json").write_text(json.dumps(manifest, indent=2))
    else:
        sys.stdout.write(events_csv_text(ds, blinded=bool(config.get("blinded"))))
    return 0


def _cmd_fit(args, client: Client) -> int:
    payload = {
        "schema_version": 1,
        "dataset": _dataset_payload_from_csv(args.data, args.time_unit),
        "at": _years(args.at, args.time_unit),
        "alpha": args.alpha,
    }
    result = client.post("/fit", payload)
    manifest = _manifest("fit", {k: payload[k] for k in ("at", "alpha")}, [args.data], None)
    if args.format == "text":
        level = int(round((1 - args.alpha) * 100))
        lines = [
            "marginal rates model fit",
            f"  events / subjects      {result['n_events']} / {result['n_subjects']}",
            f"  log rate ratio (SE)    {result['beta_hat']:.3f} ({result['se_robust']:.3f})",
            f"  naive SE               {result['se_naive']:.3f}",
            f"  rate ratio ({level}% CI)   {result['rate_ratio']:.3f} "
            f"({result['rr_ci_low']:.3f}, {result['rr_ci_high']:.3f})",
            f"  p-value                {result['p_value']:.4g}",
        ]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit_json({"manifest": manifest, "fit": result}, args.out)
    return 0


def _monitor_payload(args) -> dict:
    payload: dict = {
        "schema_version": 1,
        "dataset": _dataset_payload_from_csv(args.data, args.time_unit),
        "schedule": args.schedule,
        "max_horizon": _years(args.horizon, args.time_unit),
        "start_min_elapsed": _years(args.start_elapsed, args.time_unit),
        "start_min_events": args.start_events,
        "full_trajectory": args.full_trajectory,
    }
    if args.grid:
        payload["grid"] = [_years(float(x), args.time_unit) for x in args.grid.split(",")]
    if args.design:
        config = _read_json_config(args.design)
        spec = schemas.DesignRequest.model_validate(config)
        payload.update({"beta0": spec.beta0, "alpha": spec.alpha, "pi": spec.pi})
        payload["power_target"] = spec.power_target
    if args.beta0 is not None:
        payload["beta0"] = args.beta0
    if args.alpha is not None:
        payload["alpha"] = args.alpha
    if args.target_v2 is not None:
        payload["v2_target"] = args.target_v2
        payload.pop("power_target", None)
    if "beta0" not in payload:
        raise CliError("monitor needs --design or --beta0 (with --target-v2)", 1)
    if args.bootstrap:
        payload["bootstrap"] = {
            "replicates": args.bootstrap,
            "level": args.level,
            "seed": args.seed if args.seed is not None else 0,
        }
    return payload


def _trajectory_csv(points: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(TRAJECTORY_HEADER)
    for p in points:
        writer.writerow(
            [
                repr(p["s"]),
                p["n_events"],
                p["n_enrolled"],
                "" if p["v2_blind"] is None else repr(p["v2_blind"]),
                "" if p["power"] is None else repr(p["power"]),
                "" if p["power_low"] is None else repr(p["power_low"]),
                "" if p["power_high"] is None else repr(p["power_high"]),
                int(p["crossed"]),
            ]
        )
    return buf.getvalue()


def _cmd_monitor(args, client: Client) -> int:
    payload = _monitor_payload(args)
    result = client.post("/monitor", payload)
    decision = dict(result["decision"])
    if args.time_unit == "days" and decision.get("stop_time") is not None:
        decision["stop_time_days"] = decision["stop_time"] * DAYS_PER_YEAR
    manifest = _manifest(
        "monitor",
        {k: v for k, v in payload.items() if k != "dataset"},
        [args.data] + ([args.design] if args.design else []),
        args.seed,
    )
    if args.format == "json":
        _emit_json(
            {"manifest": manifest, "decision": decision, "points": result["points"]}, args.out
        )
        return 0
    csv_text = _trajectory_csv(result["points"])
    decision_doc = json.dumps({"manifest": manifest, "decision": decision}, indent=2)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        Path(args.out + ".manifest.json").write_text(json.dumps(manifest, indent=2))
        sys.stdout.write(decision_doc + "\n")
    else:
        sys.stdout.write(csv_text)
        sys.stderr.write(decision_doc + "\n")
    return 0


def _cmd_bootstrap(args, client: Client) -> int:
    payload = {
        "schema_version": 1,
        "dataset": _dataset_payload_from_csv(args.data, args.time_unit),
        "beta0": args.beta0,
        "alpha": args.alpha,
        "at": _years(args.at, args.time_unit),
        "replicates": args.replicates,
        "level": args.level,
        "seed": args.seed if args.seed is not None else 0,
    }
    result = client.post("/bootstrap", payload)
    manifest = _manifest(
        "bootstrap", {k: v for k, v in payload.items() if k != "dataset"}, [args.data], payload["seed"]
    )
    _emit_json({"manifest": manifest, "bootstrap": result}, args.out)
    return 0


def _summary_csv(summaries: list[dict]) -> str:
    buf = io.StringIO()
    fields = list(schemas.SummaryPayload.model_fields)
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for row in summaries:
        writer.writerow(row)
    return buf.getvalue()


def _replicate_csv(replicates: list[dict]) -> str:
    buf = io.StringIO()
    fields = list(schemas.ReplicatePayload.model_fields)
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for row in replicates:
        writer.writerow(row)
    return buf.getvalue()


def _cmd_experiment(args, client: Client) -> int:
    config = _read_json_config(args.config)
    if args.seed is not None:
        config["base_seed"] = args.seed
    if args.workers is not None:
        config["workers"] = args.workers
    if args.replicate_log:
        config["include_replicates"] = True

    def log(msg: str) -> None:
        if args.progress:
            sys.stderr.write(f"[{time.strftime('%H:%M:%S')}] {msg}\n")

    scenarios = config.get("scenarios") or []
    summaries: list[dict] = []
    replicates: list[dict] = []
    if args.progress and len(scenarios) > 1:
        for i, scenario in enumerate(scenarios):
            log(f"scenario {i + 1}/{len(scenarios)} starting")
            single = dict(config, scenarios=[scenario])
            result = client.post("/experiment", single)
            summaries.extend(result["summaries"])
            replicates.extend(result.get("replicates") or [])
            log(f"scenario {i + 1}/{len(scenarios)} done")
    else:
        log("experiment starting")
        result = client.post("/experiment", config)
        summaries = result["summaries"]
        replicates = result.get("replicates") or []
        log("experiment done")

    manifest = _manifest("experiment", config, [args.config], config.get("base_seed"))
    if args.replicate_log:
        Path(args.replicate_log).write_text(_replicate_csv(replicates), encoding="utf-8")
    if args.format == "csv":
        _emit(_summary_csv(summaries), args.out)
        if args.out:
            Path(args.out + ".manifest.json").write_text(json.dumps(manifest, indent=2))
    else:
        _emit_json({"manifest": manifest, "summaries": summaries}, args.out)
    return 0


def _cmd_serve(args, _client) -> int:
    import uvicorn

    uvicorn.run("revmon.service.app:app", host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", help="URL of a running service (default: run in-process)")
    common.add_argument("--out", help="write the primary result to this path instead of stdout")
    common.add_argument("--seed", type=int, help="override the seed in config files")
    common.add_argument(
        "--time-unit",
        choices=("years", "days"),
        default="years",
        help="unit of time columns in data files and time-valued flags",
    )

    parser = argparse.ArgumentParser(
        prog="revmon",
        description="Event-driven design and blinded variance monitoring for recurrent-event trials",
    )
    parser.add_argument("--version", action="version", version=f"revmon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="design-stage event/subject counts")
    p.add_argument("--spec", required=True, help="design spec JSON file")
    p.add_argument("--rounding", choices=("early", "late"))
    p.add_argument("--cushion", type=int)
    p.add_argument("--mu-bar", type=float, dest="mu_bar")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(handler=_cmd_design)

    p = sub.add_parser("simulate", parents=[common], help="generate a trial dataset")
    p.add_argument("--params", required=True, help="scenario parameters JSON file")
    p.add_argument("--blinded", action="store_true", help="withhold the arm column")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit the marginal rates model")
    p.add_argument("--data", required=True, help="events CSV file")
    p.add_argument("--at", type=float, help="analysis calendar time (default: end of follow-up)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("monitor", parents=[common], help="blinded variance monitoring")
    p.add_argument("--data", required=True, help="events CSV file (arm column optional)")
    p.add_argument("--design", help="design spec JSON file (source of beta0/alpha/target)")
    p.add_argument("--target-v2", type=float, dest="target_v2")
    p.add_argument("--beta0", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--schedule", choices=("continuous", "weekly", "monthly", "custom"), default="continuous")
    p.add_argument("--grid", help="comma-separated times for --schedule custom")
    p.add_argument("--horizon", type=float, default=15.0)
    p.add_argument("--start-elapsed", type=float, default=1.0 / 12.0, dest="start_elapsed")
    p.add_argument("--start-events", type=int, default=20, dest="start_events")
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates for pointwise CIs")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--full-trajectory", action="store_true", dest="full_trajectory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(handler=_cmd_monitor)

    p = sub.add_parser("bootstrap", parents=[common], help="bootstrap CI for the blinded variance")
    p.add_argument("--data", required=True)
    p.add_argument("--beta0", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--at", type=float)
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(handler=_cmd_bootstrap)

    p = sub.add_parser("experiment", parents=[common], help="replicated design comparison")
    p.add_argument("--config", required=True, help="experiment config JSON file")
    p.add_argument("--workers", type=int)
    p.add_argument("--progress", action="store_true", help="log progress to stderr")
    p.add_argument("--replicate-log", dest="replicate_log", help="write per-replicate CSV here")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(handler=_cmd_experiment)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        client = None if args.command == "serve" else Client(args.server)
        return args.handler(args, client)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - defensive
        sys.stderr.write(f"unexpected error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
