"""HTTP/JSON API over the service core.

Endpoints (all under /v1): score, drift/latest, reviews, verdicts,
metrics, retrain, models, activate. Errors carry the domain error's class
name verbatim in the ``error`` field. Timestamps are ISO-8601 UTC on the
wire. When a built review UI exists it is served under /ui.
"""
from __future__ import annotations

import datetime
import os
from typing import List, Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .domain import ChangeRequest, Label
from .errors import (
    CrqRiskError,
    DuplicateVerdict,
    NoActiveModel,
    NoPendingItem,
    SchemaMismatch,
    UnknownVersion,
)
from .feedback import ReviewItem
from .service import RiskService

_STATUS = {
    NoActiveModel: 503,
    NoPendingItem: 409,
    DuplicateVerdict: 409,
    UnknownVersion: 404,
    SchemaMismatch: 400,
}


def _iso(ts: int) -> str:
    return datetime.datetime.fromtimestamp(ts, tz=datetime.timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


class ChangeRequestIn(BaseModel):
    id: str
    submitted_at: int
    summary: str = ""
    description: str = ""
    qa_answers: dict
    team_id: str
    declared_risk: str
    declared_importance: int


class ScoreRequest(BaseModel):
    requests: List[ChangeRequestIn]


class VerdictIn(BaseModel):
    expert_label: str = Field(pattern="^(normal|risky)$")
    reviewer_id: str = "anonymous"


class RetrainIn(BaseModel):
    reason: str = "manual"
    force: bool = False


def _review_item_out(item: ReviewItem) -> dict:
    d = item.to_dict()
    d["enqueued_at_iso"] = _iso(item.enqueued_at)
    return d


def create_app(service: RiskService, ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="crqrisk", version="0.1.0")

    def check_token(x_api_token: Optional[str] = Header(default=None)) -> None:
        expected = service.config.api_token
        if expected and x_api_token != expected:
            raise HTTPException(status_code=401, detail="invalid API token")

    @app.exception_handler(CrqRiskError)
    async def domain_error_handler(request: Request, exc: CrqRiskError):
        status = _STATUS.get(type(exc), 400)
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.post("/v1/score", dependencies=[Depends(check_token)])
    def score(body: ScoreRequest):
        records = [ChangeRequest.from_dict(r.model_dump()) for r in body.requests]
        scores = service.score_batch(records)
        return {
            "model_version": scores[0].model_version if scores else None,
            "scores": [s.to_dict() for s in scores],
        }

    @app.get("/v1/drift/latest", dependencies=[Depends(check_token)])
    def drift_latest():
        report = service.latest_drift()
        if report is None:
            return {"report": None}
        d = report.to_dict()
        d["computed_at_iso"] = _iso(report.computed_at)
        return {"report": d}

    @app.get("/v1/reviews", dependencies=[Depends(check_token)])
    def reviews(status: Optional[str] = Query(default=None)):
        items = service.queue.items(status)
        return {"reviews": [_review_item_out(it) for it in items]}

    @app.post("/v1/reviews/{change_id}/verdict", dependencies=[Depends(check_token)])
    def verdict(change_id: str, body: VerdictIn):
        v = service.record_verdict(
            change_id, Label(body.expert_label), body.reviewer_id
        )
        out = v.to_dict()
        out["decided_at_iso"] = _iso(v.decided_at)
        return {"verdict": out}

    @app.get("/v1/metrics", dependencies=[Depends(check_token)])
    def metrics():
        return service.metrics_snapshot()

    @app.post("/v1/retrain", dependencies=[Depends(check_token)])
    def retrain(body: RetrainIn):
        return service.trigger_retrain(reason=body.reason, force=body.force)

    @app.get("/v1/models", dependencies=[Depends(check_token)])
    def models():
        return {
            "active_version": service.registry.active_version(),
            "models": [
                dict(e.to_dict(), created_at_iso=_iso(e.created_at))
                for e in service.registry.entries()
            ],
        }

    @app.post("/v1/models/{version}/activate", dependencies=[Depends(check_token)])
    def activate(version: str):
        return service.activate(version)

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
