"""Benchmark runner: datasets in, manifests and artifacts out.

A run induces a taxonomy for every non-train record, scores it against
gold, and aggregates.  Results are packaged as a manifest dict plus a map
of artifact texts (manifest, per-record session transcripts, side-by-side
case studies) keyed by relative path, so callers decide where bytes land.
Everything in a manifest is deterministic: records are sorted, JSON is
dumped with sorted keys, and the run id is a digest of the full
configuration, so a rerun of the same config is byte-identical.

A grid expands list-valued settings (method, filter, ...) into cells and
emits one summary table row per cell with per-record F1 columns.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .datasets import DatasetRecord, record_to_dict
from .engine import (
    InductionConfig,
    InductionReport,
    Mode,
    generate_zero_shot_demos,
    induce_col,
    induce_hf,
)
from .filtering import LexicalScorer, RemoteScorer, ScorerBackend
from .gateway import (
    Backend,
    BackendConfig,
    HttpBackend,
    ScriptRecord,
    ScriptedBackend,
    SessionRecorder,
)
from .metrics import aggregate, evaluate
from .outline import render_outline
from .prompts import FREE_FORM_RULES, FULL_RULES, demonstration_from_taxonomy

DEMO_COUNT = 5


class HarnessError(Exception):
    pass


@dataclass(frozen=True)
class RunSettings:
    method: str = "col"  # "col" | "hf"
    shots: str = "few"  # "few" | "zero"
    filter_enabled: bool = False
    top_k: int = 10
    strict: Optional[bool] = None  # None: strict unless zero-shot
    max_iterations: int = 10
    stall_limit: int = 2
    seed: int = 0
    model_name: str = "scripted"
    temperature: float = 0.0
    demo_temperature: float = 0.7
    workers: int = 4

    def __post_init__(self) -> None:
        if self.method not in ("col", "hf"):
            raise HarnessError(f"unknown method {self.method!r}")
        if self.shots not in ("few", "zero"):
            raise HarnessError(f"unknown shots {self.shots!r}")

    @property
    def strict_effective(self) -> bool:
        return self.strict if self.strict is not None else self.shots == "few"


@dataclass(frozen=True)
class BackendSpec:
    """Serializable description of where replies come from.

    Scripted replies travel separately (see ``scripts``) because they are
    bulky; http settings ride here.
    """

    kind: str = "scripted"
    endpoint_url: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout_seconds: float = 30.0
    retry_count: int = 3

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "http"):
            raise HarnessError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint_url:
            raise HarnessError("http backend needs endpoint_url")


Scripts = Mapping[str, Sequence[ScriptRecord]]


@dataclass
class RunResult:
    manifest: Dict
    artifacts: Dict[str, str]


def make_scorer(spec: Mapping) -> ScorerBackend:
    kind = spec.get("kind", "lexical")
    if kind == "lexical":
        return LexicalScorer()
    if kind == "remote":
        base_url = spec.get("base_url")
        if not base_url:
            raise HarnessError("remote scorer needs base_url")
        return RemoteScorer(base_url=base_url)
    raise HarnessError(f"unknown scorer kind {kind!r}")


def run_experiment(
    records: Sequence[DatasetRecord],
    settings: RunSettings,
    backend_spec: BackendSpec,
    scripts: Scripts,
    scorer_spec: Optional[Mapping] = None,
    scorer: Optional[ScorerBackend] = None,
) -> RunResult:
    """Induce and score every non-train record under one configuration.

    Raises ``HarnessError`` only when every record fails; individual
    failures are recorded in the manifest and leave the rest running.
    """
    scorer_spec = dict(scorer_spec or {"kind": "lexical"})
    if scorer is None and settings.filter_enabled:
        scorer = make_scorer(scorer_spec)
    targets = [record for record in records if record.split != "train"]
    if not targets:
        raise HarnessError("no non-train records to run on")
    train = [record for record in records if record.split == "train"]
    demos = tuple(
        demonstration_from_taxonomy(record.gold, record.entities)
        for record in train[:DEMO_COUNT]
    )

    run_id = _run_id(records, settings, backend_spec, scripts, scorer_spec)

    def run_one(record: DatasetRecord) -> Dict:
        backend = SessionRecorder(
            _backend_for(record, settings, backend_spec, scripts)
        )
        config = _induction_config(settings, demos, record, backend)
        if settings.method == "col":
            report = induce_col(
                record.entities, record.root, config, backend, scorer=scorer
            )
        else:
            report = induce_hf(record.entities, record.root, config, backend)
        metrics = evaluate(report.taxonomy, record.gold)
        return {
            "record": record,
            "report": report,
            "metrics": metrics,
            "script": backend.records,
        }

    outcomes: Dict[str, Dict] = {}
    failures: Dict[str, str] = {}
    ordered = sorted(targets, key=lambda record: record.name)
    with ThreadPoolExecutor(max_workers=max(1, settings.workers)) as pool:
        futures = {record.name: pool.submit(run_one, record) for record in ordered}
    for name, future in futures.items():
        try:
            outcomes[name] = future.result()
        except Exception as error:  # recorded, not fatal
            failures[name] = f"{type(error).__name__}: {error}"
    if not outcomes:
        raise HarnessError(f"every record failed: {failures}")

    artifacts: Dict[str, str] = {}
    record_rows = []
    for record in ordered:
        if record.name in failures:
            record_rows.append(
                {"name": record.name, "split": record.split, "error": failures[record.name]}
            )
            continue
        outcome = outcomes[record.name]
        report: InductionReport = outcome["report"]
        record_rows.append(_record_row(record, outcome))
        artifacts[f"transcripts/{record.name}.ndjson"] = _script_ndjson(
            outcome["script"]
        )
        artifacts[f"case_studies/{record.name}.txt"] = _case_study(record, report)

    scored = [outcomes[name]["metrics"] for name in sorted(outcomes)]
    manifest = {
        "run_id": run_id,
        "settings": _settings_dict(settings),
        "backend": _backend_descriptor(backend_spec, scripts),
        "scorer": scorer_spec,
        "records": record_rows,
        "aggregate": aggregate(scored).as_dict(),
        "failed": sorted(failures),
    }
    artifacts["manifest.json"] = dump_json(manifest)
    return RunResult(manifest=manifest, artifacts=artifacts)


def run_grid(
    records: Sequence[DatasetRecord],
    settings: RunSettings,
    grid: Mapping[str, Sequence],
    backend_spec: BackendSpec,
    scripts: Scripts,
    scorer_spec: Optional[Mapping] = None,
) -> RunResult:
    """Run every cell of ``grid`` and summarize one row per cell.

    Grid keys are RunSettings field names with list values; cells expand
    in sorted-key order, so reruns enumerate identically.
    """
    if not grid:
        raise HarnessError("empty grid")
    keys = sorted(grid)
    unknown = [key for key in keys if not hasattr(settings, key)]
    if unknown:
        raise HarnessError(f"unknown grid keys: {unknown}")

    rows = []
    artifacts: Dict[str, str] = {}
    for values in product(*(list(grid[key]) for key in keys)):
        cell = dict(zip(keys, values))
        cell_settings = replace(settings, **cell)
        result = run_experiment(
            records, cell_settings, backend_spec, scripts, scorer_spec
        )
        per_record = {}
        for row in result.manifest["records"]:
            if "error" in row:
                per_record[row["name"]] = {"error": row["error"]}
            else:
                per_record[row["name"]] = {
                    "ancestor_f1": row["metrics"]["ancestor"]["f1"],
                    "edge_f1": row["metrics"]["edge"]["f1"],
                }
        rows.append(
            {
                "configuration": cell,
                "run_id": result.manifest["run_id"],
                "per_record": per_record,
                "aggregate": {
                    "ancestor_f1": result.manifest["aggregate"]["ancestor"]["f1"],
                    "edge_f1": result.manifest["aggregate"]["edge"]["f1"],
                },
            }
        )
        for path, text in result.artifacts.items():
            artifacts[f"runs/{result.manifest['run_id']}/{path}"] = text

    grid_manifest = {
        "grid_id": _digest_of(dump_json({"rows": rows}))[:12],
        "grid": {key: list(grid[key]) for key in keys},
        "rows": rows,
    }
    artifacts["grid.json"] = dump_json(grid_manifest)
    artifacts["grid.tsv"] = _grid_table(rows, keys)
    return RunResult(manifest=grid_manifest, artifacts=artifacts)


def persist_run(result: RunResult, out_dir: str) -> str:
    """Write artifacts under ``out_dir/<id>/``; returns the directory."""
    identifier = result.manifest.get("run_id") or result.manifest["grid_id"]
    base = Path(out_dir) / identifier
    for relative, text in result.artifacts.items():
        target = base / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    return str(base)


def load_run_config(path: str) -> Dict:
    """Read a run config file; TOML by default, JSON by extension."""
    raw = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return json.loads(raw)
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(raw)


def dump_json(payload: Dict) -> str:
    return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def _induction_config(
    settings: RunSettings,
    demos: Tuple,
    record: DatasetRecord,
    backend: Backend,
) -> InductionConfig:
    zero_col = settings.method == "col" and settings.shots == "zero"
    rules = FREE_FORM_RULES if zero_col else FULL_RULES
    if settings.shots == "zero" and settings.method == "col":
        demos = tuple(
            generate_zero_shot_demos(
                record.root,
                DEMO_COUNT,
                InductionConfig(
                    model_name=settings.model_name,
                    demo_temperature=settings.demo_temperature,
                ),
                backend,
            )
        )
    elif settings.shots == "zero":
        demos = ()
    return InductionConfig(
        mode=Mode.ITERATIVE if settings.method == "col" else Mode.ONE_SHOT,
        rules=rules,
        demonstrations=demos,
        filter_enabled=settings.filter_enabled,
        top_k=settings.top_k,
        strict_entity_set=settings.strict_effective,
        max_iterations=settings.max_iterations,
        stall_limit=settings.stall_limit,
        model_name=settings.model_name,
        temperature=settings.temperature,
        demo_temperature=settings.demo_temperature,
    )


def _backend_for(
    record: DatasetRecord,
    settings: RunSettings,
    spec: BackendSpec,
    scripts: Scripts,
) -> Backend:
    if spec.kind == "http":
        return HttpBackend(
            BackendConfig(
                kind="http",
                endpoint_url=spec.endpoint_url,
                api_key_env=spec.api_key_env,
                timeout_seconds=spec.timeout_seconds,
                retry_count=spec.retry_count,
            )
        )
    for key in (f"{record.name}.{settings.method}", record.name):
        if key in scripts:
            return ScriptedBackend(scripts[key])
    raise HarnessError(f"no script for record {record.name!r}")


def _record_row(record: DatasetRecord, outcome: Dict) -> Dict:
    report: InductionReport = outcome["report"]
    return {
        "name": record.name,
        "split": record.split,
        "predicted": {
            "root": report.taxonomy.root.surface,
            "edges": [
                [parent.surface, child.surface]
                for parent, child in report.taxonomy.edges
            ],
        },
        "metrics": outcome["metrics"].as_dict(),
        "termination": report.termination.value,
        "unplaced": sorted(entity.key for entity in report.unplaced),
        "dropped": sorted(entity.key for entity in report.dropped),
        "model_calls": report.model_calls,
        "error_detail": report.error,
        "iterations": [
            {
                "level": iteration.level,
                "committed": list(iteration.committed),
                "filtered": list(iteration.filtered),
                "check_answer": iteration.check_answer,
                "diagnostics": list(iteration.diagnostics),
            }
            for iteration in report.iterations
        ],
    }


def _script_ndjson(records: Sequence[ScriptRecord]) -> str:
    """The replayable script: one backend call per line, digests included."""
    lines = [
        json.dumps({"digest": record.digest, "reply": record.reply}, ensure_ascii=False)
        for record in records
    ]
    return "\n".join(lines) + "\n"


def _case_study(record: DatasetRecord, report: InductionReport) -> str:
    gold_lines = render_outline(record.gold).splitlines()
    predicted_lines = render_outline(report.taxonomy).splitlines()
    width = max((len(line) for line in gold_lines), default=0)
    width = max(width, len("gold"))
    rows = [f"{'gold'.ljust(width)} | predicted", f"{'-' * width}-+-{'-' * 9}"]
    for position in range(max(len(gold_lines), len(predicted_lines))):
        left = gold_lines[position] if position < len(gold_lines) else ""
        right = predicted_lines[position] if position < len(predicted_lines) else ""
        rows.append(f"{left.ljust(width)} | {right}")
    rows.append("")
    rows.append(f"termination: {report.termination.value}")
    rows.append(f"unplaced: {sorted(entity.key for entity in report.unplaced)}")
    rows.append(f"dropped: {sorted(entity.key for entity in report.dropped)}")
    return "\n".join(rows) + "\n"


def _grid_table(rows: Sequence[Dict], keys: Sequence[str]) -> str:
    record_names = sorted(
        {name for row in rows for name in row["per_record"]}
    )
    header = list(keys) + [
        f"{name}/{metric}"
        for name in record_names
        for metric in ("ancestor_f1", "edge_f1")
    ]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [str(row["configuration"][key]) for key in keys]
        for name in record_names:
            entry = row["per_record"].get(name, {})
            for metric in ("ancestor_f1", "edge_f1"):
                value = entry.get(metric)
                cells.append("-" if value is None else f"{value:.4f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def _settings_dict(settings: RunSettings) -> Dict:
    payload = asdict(settings)
    payload["strict"] = settings.strict_effective
    return payload


def _backend_descriptor(spec: BackendSpec, scripts: Scripts) -> Dict:
    descriptor: Dict = {"kind": spec.kind}
    if spec.kind == "http":
        descriptor["endpoint_url"] = spec.endpoint_url
        descriptor["timeout_seconds"] = spec.timeout_seconds
        descriptor["retry_count"] = spec.retry_count
    else:
        descriptor["scripts"] = {
            key: _digest_of(
                "\n".join(f"{record.digest}:{record.reply}" for record in replies)
            )[:16]
            for key, replies in sorted(scripts.items())
        }
    return descriptor


def _run_id(
    records: Sequence[DatasetRecord],
    settings: RunSettings,
    backend_spec: BackendSpec,
    scripts: Scripts,
    scorer_spec: Mapping,
) -> str:
    descriptor = {
        "records": [record_to_dict(record) for record in records],
        "settings": _settings_dict(settings),
        "backend": _backend_descriptor(backend_spec, scripts),
        "scorer": dict(scorer_spec),
    }
    return _digest_of(dump_json(descriptor))[:12]


def _digest_of(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
