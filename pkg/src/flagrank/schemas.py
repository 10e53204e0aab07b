"""Request/response bodies for the oracle service."""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field


class StatusResponse(BaseModel):
    phase: Literal["training", "awaiting_labels", "done"]
    iteration: int
    labels_spent: int
    budget: int
    budget_left: int
    pending_count: int
    error: Optional[str] = None


class QueryItem(BaseModel):
    process_id: str
    score: float
    rank: int
    uncertainty: float
    top_attributes: List[str]


class QueriesResponse(BaseModel):
    iteration: int
    threshold: float
    items: List[QueryItem]


class LabelItem(BaseModel):
    process_id: str
    label: Literal["normal", "anomalous"]


class LabelsRequest(BaseModel):
    iteration: int
    labels: List[LabelItem] = Field(min_length=1)


class LabelsResponse(BaseModel):
    accepted: int
    outstanding: int


class RankingEntry(BaseModel):
    rank: int
    process_id: str
    score: float


class RankingResponse(BaseModel):
    iteration: int
    entries: List[RankingEntry]


class MetricsResponse(BaseModel):
    records: List[dict]


class ErrorDetail(BaseModel):
    detail: str
    offenders: Optional[List[str]] = None
