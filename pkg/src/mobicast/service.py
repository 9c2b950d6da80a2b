"""Local HTTP/JSON service for the scenario-explorer UI.

All state (checkpoint, panel, derived attention profile) is loaded once at
startup and never mutated; request handlers are pure functions of it, each
forward pass running on its own computation tape, so concurrent requests
are safe.

Endpoints:
    GET  /regions    region ids, names, populations
    GET  /model      model config, normalization stats, attention profile
    POST /forecast   {"horizon": int} -> daily + epi-week predictions
    POST /scenario   {"transforms": [...], "horizon": int,
                      "eval_start"?: iso-date, "eval_end"?: iso-date,
                      "label"?: str} -> impact report

Malformed bodies return 400 with field-level messages; a horizon the
loaded state cannot serve returns 422.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import data as dt
from . import model as md
from . import policy as pl
from . import train as tr
from .errors import DomainError, ScenarioFormatError
from .features import NormalizationStats

MAX_HORIZON = 365


@dataclass(frozen=True)
class ServiceState:
    """Immutable after startup; requests never mutate it."""

    params: md.ModelParams
    stats: NormalizationStats
    panel: dt.PanelDataset
    attention_profile: np.ndarray  # (K, 2)

    @classmethod
    def build(
        cls, params: md.ModelParams, stats: NormalizationStats, panel: dt.PanelDataset
    ) -> "ServiceState":
        profile = tr.attention_profile(params, stats, panel)
        return cls(params=params, stats=stats, panel=panel, attention_profile=profile)


class ForecastRequest(BaseModel):
    horizon: int = Field(ge=1, description="days to forecast")


class TransformModel(BaseModel):
    kind: str
    factor: float | None = None
    region: str | None = None
    start: date | None = None
    end: date | None = None


class ScenarioRequest(BaseModel):
    transforms: list[TransformModel]
    horizon: int = Field(default=30, ge=1)
    eval_start: date | None = None
    eval_end: date | None = None
    label: str = ""


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="mobicast scenario service", version="1")
    panel = state.panel
    params = state.params
    stats = state.stats
    k = params.config.window

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        details = [
            {"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"error": "invalid request", "details": details})

    @app.get("/regions")
    def regions():
        return {
            "regions": [
                {
                    "id": rid,
                    "name": rid,
                    "population": float(panel.population[i]),
                }
                for i, rid in enumerate(panel.region_ids)
            ]
        }

    @app.get("/model")
    def model_info():
        return {
            "config": params.config.to_dict(),
            "normalization": stats.to_dict(),
            "attention": {
                "enabled": params.config.attention_enabled,
                "offsets": list(range(-k, 0)),
                "case_stream": [float(x) for x in state.attention_profile[:, 0]],
                "mobility_stream": [float(x) for x in state.attention_profile[:, 1]],
            },
            "panel": {
                "start": panel.dates[0].isoformat(),
                "end": panel.dates[-1].isoformat(),
                "days": panel.n_days,
            },
        }

    @app.post("/forecast")
    def forecast(req: ForecastRequest):
        if req.horizon > MAX_HORIZON:
            return JSONResponse(
                status_code=422,
                content={"error": f"horizon {req.horizon} exceeds maximum {MAX_HORIZON}"},
            )
        window = dt.window_input(panel, stats, panel.n_days - k, k)
        outs = md.rollout(params, window, req.horizon)
        daily = np.vstack([o.cases_next_raw for o in outs])
        weeks = dt.epiweek_aggregate(daily, [o.date for o in outs])
        return {
            "regions": panel.region_ids,
            "dates": [o.date.isoformat() for o in outs],
            "daily": [[float(x) for x in row] for row in daily],
            "weekly": {
                "week_starts": [w.start.isoformat() for w in weeks],
                "totals": [[float(x) for x in w.totals] for w in weeks],
                "complete": [w.complete for w in weeks],
            },
        }

    @app.post("/scenario")
    def scenario(req: ScenarioRequest):
        if req.horizon > MAX_HORIZON:
            return JSONResponse(
                status_code=422,
                content={"error": f"horizon {req.horizon} exceeds maximum {MAX_HORIZON}"},
            )
        try:
            scen = pl.scenario_from_dict(
                {
                    "label": req.label,
                    "transforms": [
                        {kk: vv for kk, vv in t.model_dump(mode="json").items() if vv is not None}
                        for t in req.transforms
                    ],
                }
            )
        except ScenarioFormatError as e:
            return JSONResponse(status_code=400, content={"error": str(e)})
        seed_d = panel.dates[-1]
        eval_start = req.eval_start or (seed_d + timedelta(days=1))
        eval_end = req.eval_end or (seed_d + timedelta(days=req.horizon))
        if eval_end <= seed_d or eval_start <= seed_d or eval_end < eval_start:
            return JSONResponse(
                status_code=422,
                content={"error": "evaluation window must lie after the last observed day"},
            )
        try:
            report = pl.run_scenario(params, stats, panel, scen, seed_d, eval_start, eval_end)
        except DomainError as e:
            return JSONResponse(status_code=400, content={"error": str(e)})
        return pl.impact_to_dict(report)

    return app
