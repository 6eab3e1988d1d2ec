"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field


class TaxonomyBody(BaseModel):
    root: str
    edges: List[Tuple[str, str]] = Field(default_factory=list)


class DatasetRecordBody(BaseModel):
    name: str
    root: str
    entities: List[str]
    edges: List[Tuple[str, str]]
    split: Literal["train", "dev", "test"] = "test"


class DiagnosticBody(BaseModel):
    kind: str
    line_no: int
    message: str


class ParseRequest(BaseModel):
    text: str
    lenient: bool = True


class ParseResponse(BaseModel):
    taxonomy: TaxonomyBody
    diagnostics: List[DiagnosticBody]


class RenderRequest(BaseModel):
    taxonomy: TaxonomyBody


class RenderResponse(BaseModel):
    text: str


class EvaluateRequest(BaseModel):
    predicted: TaxonomyBody
    gold: TaxonomyBody


class EvaluateResponse(BaseModel):
    metrics: Dict


class SampleRequest(BaseModel):
    record: DatasetRecordBody
    sizes: List[int]
    repeats: int = 5
    seed: int = 0


class SampleBody(BaseModel):
    name: str
    size: int
    seed: int
    record: DatasetRecordBody


class SampleResponse(BaseModel):
    samples: List[SampleBody]


class ScriptRecordBody(BaseModel):
    reply: str
    digest: Optional[str] = None


class BackendBody(BaseModel):
    kind: Literal["scripted", "http"] = "scripted"
    endpoint_url: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout_seconds: float = 30.0
    retry_count: int = 3


class ScorerBody(BaseModel):
    kind: Literal["lexical", "remote"] = "lexical"
    base_url: Optional[str] = None


class SettingsBody(BaseModel):
    method: Literal["col", "hf"] = "col"
    shots: Literal["few", "zero"] = "few"
    filter_enabled: bool = False
    top_k: int = 10
    strict: Optional[bool] = None
    max_iterations: int = 10
    stall_limit: int = 2
    seed: int = 0
    model_name: str = "scripted"
    temperature: float = 0.0
    demo_temperature: float = 0.7
    workers: int = 4


class InduceRequest(BaseModel):
    record: DatasetRecordBody
    settings: SettingsBody = Field(default_factory=SettingsBody)
    backend: BackendBody = Field(default_factory=BackendBody)
    scorer: ScorerBody = Field(default_factory=ScorerBody)
    script: List[ScriptRecordBody] = Field(default_factory=list)
    demonstrations: List[DatasetRecordBody] = Field(default_factory=list)


class IterationBody(BaseModel):
    level: int
    committed: List[str]
    filtered: List[str]
    check_answer: Optional[str]
    diagnostics: List[str]


class InduceResponse(BaseModel):
    taxonomy: TaxonomyBody
    outline: str
    termination: str
    unplaced: List[str]
    dropped: List[str]
    iterations: List[IterationBody]
    metrics: Dict
    model_calls: int
    error_detail: Optional[str] = None


class DemoRequest(BaseModel):
    root: str
    count: int = 5
    backend: BackendBody = Field(default_factory=BackendBody)
    script: List[ScriptRecordBody] = Field(default_factory=list)
    model_name: str = "scripted"
    demo_temperature: float = 0.7


class DemoBody(BaseModel):
    record: DatasetRecordBody
    dialogue: List[Dict[str, str]]


class DemoResponse(BaseModel):
    demonstrations: List[DemoBody]


class RunRequest(BaseModel):
    records: List[DatasetRecordBody]
    settings: SettingsBody = Field(default_factory=SettingsBody)
    grid: Dict[str, List] = Field(default_factory=dict)
    backend: BackendBody = Field(default_factory=BackendBody)
    scorer: ScorerBody = Field(default_factory=ScorerBody)
    scripts: Dict[str, List[ScriptRecordBody]] = Field(default_factory=dict)


class RunResponse(BaseModel):
    manifest: Dict
    artifacts: Dict[str, str]


class ConvertRequest(BaseModel):
    text: str
    name: str
    split: Literal["train", "dev", "test"] = "test"


class ConvertResponse(BaseModel):
    record: DatasetRecordBody


class HealthResponse(BaseModel):
    status: str
    version: str
