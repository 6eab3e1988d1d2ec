"""HTTP facade over the induction engine, metrics, and harness.

Stateless: every request carries its own data (dataset records inline,
scripted replies inline), and responses carry every artifact back, so
the service never touches the filesystem.  Domain errors map to 422 with
the error type and message in the detail.
"""

from __future__ import annotations

from importlib import metadata
from typing import Dict, List

from fastapi import FastAPI, HTTPException

from .. import datasets
from ..engine import (
    EngineError,
    InductionConfig,
    InductionReport,
    generate_zero_shot_demos,
)
from ..filtering import FilterError
from ..gateway import GatewayError, ScriptRecord, ScriptedBackend
from ..harness import (
    BackendSpec,
    HarnessError,
    RunSettings,
    run_experiment,
    run_grid,
)
from ..metrics import MetricsError, evaluate
from ..outline import OutlineError, parse_outline, outline_to_taxonomy, render_outline
from ..prompts import PromptError
from ..sampling import SamplingError, sample_subtaxonomy
from ..taxonomy import Entity, TaxonomyError, build_taxonomy
from . import schemas

_DOMAIN_ERRORS = (
    TaxonomyError,
    OutlineError,
    PromptError,
    GatewayError,
    FilterError,
    EngineError,
    MetricsError,
    SamplingError,
    datasets.DatasetError,
    HarnessError,
    ValueError,
)


def create_app() -> FastAPI:
    app = FastAPI(title="taxoduce", version=_version())

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=_version())

    @app.post("/parse", response_model=schemas.ParseResponse)
    def parse(request: schemas.ParseRequest) -> schemas.ParseResponse:
        with _domain_errors():
            outline, diagnostics = parse_outline(request.text)
            taxonomy = outline_to_taxonomy(
                outline, lenient=request.lenient, diagnostics=diagnostics
            )
        return schemas.ParseResponse(
            taxonomy=_taxonomy_body(taxonomy),
            diagnostics=[
                schemas.DiagnosticBody(
                    kind=diag.kind.value, line_no=diag.line_no, message=diag.message
                )
                for diag in diagnostics
            ],
        )

    @app.post("/render", response_model=schemas.RenderResponse)
    def render(request: schemas.RenderRequest) -> schemas.RenderResponse:
        with _domain_errors():
            taxonomy = _taxonomy_from_body(request.taxonomy)
            text = render_outline(taxonomy)
        return schemas.RenderResponse(text=text)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_pair(request: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
        with _domain_errors():
            predicted = _taxonomy_from_body(request.predicted)
            gold = _taxonomy_from_body(request.gold)
            report = evaluate(predicted, gold)
        return schemas.EvaluateResponse(metrics=report.as_dict())

    @app.post("/sample", response_model=schemas.SampleResponse)
    def sample(request: schemas.SampleRequest) -> schemas.SampleResponse:
        with _domain_errors():
            record = datasets.record_from_dict(
                request.record.model_dump(), where="request record"
            )
            samples = []
            for size in request.sizes:
                for repeat in range(request.repeats):
                    seed = request.seed + repeat
                    subtree = sample_subtaxonomy(record.gold, size, seed)
                    name = f"{record.name}_s{size}_r{repeat}"
                    samples.append(
                        schemas.SampleBody(
                            name=name,
                            size=size,
                            seed=seed,
                            record=_record_body(
                                datasets.DatasetRecord(
                                    name=name,
                                    root=subtree.root,
                                    entities=tuple(_ordered_nodes(subtree)),
                                    gold=subtree,
                                    split=record.split,
                                )
                            ),
                        )
                    )
        return schemas.SampleResponse(samples=samples)

    @app.post("/induce", response_model=schemas.InduceResponse)
    def induce(request: schemas.InduceRequest) -> schemas.InduceResponse:
        with _domain_errors():
            record = datasets.record_from_dict(
                request.record.model_dump(), where="request record"
            )
            scripts = {}
            if request.script:
                scripts[record.name] = [
                    ScriptRecord(reply=item.reply, digest=item.digest)
                    for item in request.script
                ]
            demo_records = [
                datasets.record_from_dict(body.model_dump(), where=f"demo {body.name}")
                for body in request.demonstrations
            ]
            records = demo_records + [record]
            settings = RunSettings(**request.settings.model_dump())
            result = run_experiment(
                records,
                settings,
                BackendSpec(**request.backend.model_dump()),
                scripts,
                scorer_spec=request.scorer.model_dump(exclude_none=True),
            )
            row = result.manifest["records"][0]
            if "error" in row:
                raise HarnessError(row["error"])
        return _induce_response(row)

    @app.post("/gen-demos", response_model=schemas.DemoResponse)
    def gen_demos(request: schemas.DemoRequest) -> schemas.DemoResponse:
        with _domain_errors():
            if request.backend.kind != "scripted":
                raise HarnessError("demo generation over http is driven by `run`")
            backend = ScriptedBackend(
                [
                    ScriptRecord(reply=item.reply, digest=item.digest)
                    for item in request.script
                ]
            )
            config = InductionConfig(
                model_name=request.model_name,
                demo_temperature=request.demo_temperature,
            )
            demos = generate_zero_shot_demos(
                Entity(request.root), request.count, config, backend
            )
        bodies = []
        for position, demo in enumerate(demos):
            nodes = _ordered_nodes(demo.taxonomy)
            record = datasets.DatasetRecord(
                name=f"demo_{position}",
                root=demo.taxonomy.root,
                entities=tuple(nodes),
                gold=demo.taxonomy,
                split="train",
            )
            bodies.append(
                schemas.DemoBody(
                    record=_record_body(record),
                    dialogue=[
                        {"role": message.role, "content": message.content}
                        for message in demo.dialogue
                    ],
                )
            )
        return schemas.DemoResponse(demonstrations=bodies)

    @app.post("/run", response_model=schemas.RunResponse)
    def run(request: schemas.RunRequest) -> schemas.RunResponse:
        with _domain_errors():
            records = [
                datasets.record_from_dict(body.model_dump(), where=f"record {body.name}")
                for body in request.records
            ]
            scripts = {
                key: [
                    ScriptRecord(reply=item.reply, digest=item.digest)
                    for item in items
                ]
                for key, items in request.scripts.items()
            }
            settings = RunSettings(**request.settings.model_dump())
            spec = BackendSpec(**request.backend.model_dump())
            scorer_spec = request.scorer.model_dump(exclude_none=True)
            if request.grid:
                result = run_grid(
                    records, settings, request.grid, spec, scripts, scorer_spec
                )
            else:
                result = run_experiment(
                    records, settings, spec, scripts, scorer_spec
                )
        return schemas.RunResponse(manifest=result.manifest, artifacts=result.artifacts)

    @app.post("/convert", response_model=schemas.ConvertResponse)
    def convert(request: schemas.ConvertRequest) -> schemas.ConvertResponse:
        with _domain_errors():
            record = datasets.record_from_edge_lines(
                request.text.splitlines(), name=request.name, split=request.split
            )
        return schemas.ConvertResponse(record=_record_body(record))

    return app


class _domain_errors:
    """Translate domain exceptions to 422 responses."""

    def __enter__(self) -> "_domain_errors":
        return self

    def __exit__(self, kind, error, traceback) -> bool:
        if kind is not None and issubclass(kind, _DOMAIN_ERRORS):
            raise HTTPException(
                status_code=422, detail=f"{kind.__name__}: {error}"
            ) from error
        return False


def _version() -> str:
    try:
        return metadata.version("taxoduce")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def _taxonomy_body(taxonomy) -> schemas.TaxonomyBody:
    return schemas.TaxonomyBody(
        root=taxonomy.root.surface,
        edges=[(parent.surface, child.surface) for parent, child in taxonomy.edges],
    )


def _taxonomy_from_body(body: schemas.TaxonomyBody):
    return build_taxonomy(
        Entity(body.root),
        tuple((Entity(parent), Entity(child)) for parent, child in body.edges),
    )


def _record_body(record) -> schemas.DatasetRecordBody:
    payload = datasets.record_to_dict(record)
    return schemas.DatasetRecordBody(**payload)


def _ordered_nodes(taxonomy) -> List:
    ordered = [taxonomy.root]
    for _, child in taxonomy.edges:
        ordered.append(child)
    return ordered


def _induce_response(row: Dict) -> schemas.InduceResponse:
    body = schemas.TaxonomyBody(
        root=row["predicted"]["root"],
        edges=[tuple(edge) for edge in row["predicted"]["edges"]],
    )
    return schemas.InduceResponse(
        taxonomy=body,
        outline=render_outline(_taxonomy_from_body(body)),
        termination=row["termination"],
        unplaced=row["unplaced"],
        dropped=row["dropped"],
        iterations=[schemas.IterationBody(**item) for item in row["iterations"]],
        metrics=row["metrics"],
        model_calls=row["model_calls"],
        error_detail=row["error_detail"],
    )


app = create_app()
