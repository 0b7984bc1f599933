"""HTTP surface for the annotation service.

All endpoints live under the /v1 prefix and require a bearer token.  The
front end consumes exactly this API; question wording is served from the
shared battery definitions, never duplicated client-side.
"""

from __future__ import annotations

from typing import Sequence

from fastapi import Depends, FastAPI, Header, HTTPException
from pydantic import BaseModel, Field

from ..pool import PairCandidate
from .battery import battery_payload
from .service import (
    AnnotationError,
    AnnotationService,
    AttentionItem,
    CampaignExhausted,
    IncompleteSubmission,
    QualificationItem,
)

API_PREFIX = "/v1"


class PairIn(BaseModel):
    s: str
    s_prime: str
    method: str = "external"
    source_group: str = ""
    target_group: str = ""


class AttentionIn(BaseModel):
    a: str
    b: str
    correct_option: int


class CampaignIn(BaseModel):
    pairs: list[PairIn]
    votes_per_pair: int = 9
    battery: str = "fairness_only"
    attention_items: list[AttentionIn]
    notices: dict[str, str] = Field(default_factory=dict)


class QualificationIn(BaseModel):
    worker_id: str
    answers: list[int]


class BlockRequestIn(BaseModel):
    worker_id: str


class ItemResponseIn(BaseModel):
    answers: dict[str, int]
    explanation: str | None = None


class BlockSubmissionIn(BaseModel):
    responses: list[ItemResponseIn]


class ReviewIn(BaseModel):
    approve: bool


def create_app(service: AnnotationService, *, token: str) -> FastAPI:
    app = FastAPI(title="fairpairs annotation service")

    def auth(authorization: str = Header(default="")) -> None:
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid bearer token")

    def translate(exc: AnnotationError) -> HTTPException:
        if isinstance(exc, CampaignExhausted):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, IncompleteSubmission):
            return HTTPException(status_code=422, detail=str(exc))
        return HTTPException(status_code=400, detail=str(exc))

    @app.get(f"{API_PREFIX}/battery/{{name}}", dependencies=[Depends(auth)])
    def get_battery_def(name: str):
        try:
            return battery_payload(name)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.post(f"{API_PREFIX}/campaigns", dependencies=[Depends(auth)])
    def create_campaign(body: CampaignIn):
        pairs = [
            PairCandidate(
                s=p.s,
                s_prime=p.s_prime,
                method=p.method,
                source_group=p.source_group,
                target_group=p.target_group,
                filter_passed=True,
            )
            for p in body.pairs
        ]
        try:
            campaign = service.create_campaign(
                pairs,
                votes_per_pair=body.votes_per_pair,
                battery=body.battery,
                attention_items=[AttentionItem(a=a.a, b=a.b, correct_option=a.correct_option) for a in body.attention_items],
                notices=body.notices,
            )
        except (AnnotationError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"campaign_id": campaign.id, "size": len(campaign.pairs), "battery": campaign.battery.name}

    @app.get(f"{API_PREFIX}/campaigns/{{campaign_id}}", dependencies=[Depends(auth)])
    def campaign_info(campaign_id: str):
        try:
            campaign = service.campaign(campaign_id)
        except AnnotationError as exc:
            raise translate(exc) from None
        return {
            "campaign_id": campaign.id,
            "battery": campaign.battery.name,
            "state": campaign.state,
            "votes_per_pair": campaign.votes_per_pair,
            "size": len(campaign.pairs),
            "notices": campaign.notices,
        }

    @app.get(f"{API_PREFIX}/qualification", dependencies=[Depends(auth)])
    def get_qualification():
        return {"items": service.qualification_view()}

    @app.post(f"{API_PREFIX}/qualification", dependencies=[Depends(auth)])
    def submit_qualification(body: QualificationIn):
        try:
            status = service.run_qualification(body.worker_id, body.answers)
        except AnnotationError as exc:
            raise translate(exc) from None
        return {"worker_id": body.worker_id, "qualification": status}

    @app.post(f"{API_PREFIX}/campaigns/{{campaign_id}}/blocks", dependencies=[Depends(auth)])
    def fetch_block(campaign_id: str, body: BlockRequestIn):
        try:
            block = service.next_block(campaign_id, body.worker_id)
        except AnnotationError as exc:
            raise translate(exc) from None
        return block.public_view()

    @app.post(f"{API_PREFIX}/blocks/{{block_id}}/submit", dependencies=[Depends(auth)])
    def submit_block(block_id: str, body: BlockSubmissionIn):
        try:
            status = service.submit_block(block_id, [r.model_dump() for r in body.responses])
        except AnnotationError as exc:
            raise translate(exc) from None
        return {"block_id": block_id, "status": status}

    @app.get(f"{API_PREFIX}/review", dependencies=[Depends(auth)])
    def review_queue():
        return {
            "blocks": [
                {"block_id": b.id, "campaign_id": b.campaign_id, "worker_id": b.worker_id}
                for b in service.review_queue()
            ]
        }

    @app.post(f"{API_PREFIX}/review/{{block_id}}", dependencies=[Depends(auth)])
    def review(block_id: str, body: ReviewIn):
        try:
            status = service.review(block_id, body.approve)
        except AnnotationError as exc:
            raise translate(exc) from None
        return {"block_id": block_id, "status": status}

    @app.post(f"{API_PREFIX}/campaigns/{{campaign_id}}/close", dependencies=[Depends(auth)])
    def close_campaign(campaign_id: str):
        try:
            service.close_campaign(campaign_id)
        except AnnotationError as exc:
            raise translate(exc) from None
        return {"campaign_id": campaign_id, "state": "closed"}

    @app.get(f"{API_PREFIX}/campaigns/{{campaign_id}}/aggregate", dependencies=[Depends(auth)])
    def aggregate(campaign_id: str):
        try:
            return service.aggregate_campaign(campaign_id)
        except AnnotationError as exc:
            raise translate(exc) from None

    @app.get(f"{API_PREFIX}/campaigns/{{campaign_id}}/export", dependencies=[Depends(auth)])
    def export(campaign_id: str):
        from fastapi.responses import PlainTextResponse

        try:
            return PlainTextResponse(service.export_jsonl(campaign_id), media_type="application/x-ndjson")
        except AnnotationError as exc:
            raise translate(exc) from None

    return app
