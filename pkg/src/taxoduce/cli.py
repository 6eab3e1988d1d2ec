"""Command-line client for the taxonomy service.

Every subcommand except ``serve`` talks HTTP to the service: by default
an in-process instance (no socket, nothing to start), or a remote one
via ``--server URL``.  File handling stays on this side; requests carry
data inline and responses carry artifacts back.

Exit codes: 0 success, 1 execution failure (including partly failed
runs), 2 invalid input or usage.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import httpx


class ClientError(Exception):
    """Invalid input discovered client-side; exits 2."""


class _AsgiBridge(httpx.BaseTransport):
    """Drive an ASGI app from a synchronous client.

    httpx ships ASGITransport for async clients only; this adapter runs
    each exchange on a private event loop so the in-process default
    stays socket-free.
    """

    def __init__(self, app) -> None:
        self._transport = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        content = request.read()

        async def roundtrip() -> httpx.Response:
            inner = httpx.Request(
                method=request.method,
                url=request.url,
                headers=request.headers,
                content=content,
            )
            response = await self._transport.handle_async_request(inner)
            body = await response.aread()
            await response.aclose()
            return httpx.Response(
                status_code=response.status_code,
                headers=response.headers,
                content=body,
            )

        return asyncio.run(roundtrip())


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ClientError as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    except httpx.HTTPStatusError as error:
        detail = _detail(error.response)
        print(f"error: service returned {error.response.status_code}: {detail}",
              file=sys.stderr)
        return 2 if error.response.status_code < 500 else 1
    except httpx.HTTPError as error:
        print(f"error: cannot reach the service: {error}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taxoduce",
        description="Induce taxonomies from entity lists and score them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    induce = sub.add_parser("induce", help="induce one record and print the result")
    _common_flags(induce)
    _induction_flags(induce)
    induce.add_argument("--out", help="also write the response JSON here")
    induce.set_defaults(handler=_cmd_induce)

    evaluate = sub.add_parser("evaluate", help="score a predicted tree against gold")
    evaluate.add_argument("predicted", help="taxonomy JSON (root + edges)")
    evaluate.add_argument("gold", help="taxonomy JSON (root + edges)")
    evaluate.add_argument("--server")
    evaluate.set_defaults(handler=_cmd_evaluate)

    sample = sub.add_parser("sample", help="draw seeded sub-taxonomies")
    _common_flags(sample)
    sample.add_argument("--sizes", required=True, help="comma-separated node counts")
    sample.add_argument("--repeats", type=int, default=5)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out-dir", required=True)
    sample.set_defaults(handler=_cmd_sample)

    demos = sub.add_parser("gen-demos", help="bootstrap demonstrations from a model")
    demos.add_argument("--root", required=True)
    demos.add_argument("--count", type=int, default=5)
    demos.add_argument("--backend", required=True, help="scripted:PATH")
    demos.add_argument("--model", default="scripted")
    demos.add_argument("--demo-temperature", type=float, default=0.7)
    demos.add_argument("--out", required=True)
    demos.add_argument("--server")
    demos.set_defaults(handler=_cmd_gen_demos)

    run = sub.add_parser("run", help="run a config file over datasets")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", help="overrides the config's out_dir")
    run.add_argument("--server")
    run.set_defaults(handler=_cmd_run)

    case = sub.add_parser("case-study", help="print gold vs predicted side by side")
    _common_flags(case)
    _induction_flags(case)
    case.set_defaults(handler=_cmd_case_study)

    convert = sub.add_parser("convert", help="edge-list TSV to a dataset record")
    convert.add_argument("edges", help="parent<TAB>child per line")
    convert.add_argument("--name", required=True)
    convert.add_argument("--split", default="test", choices=["train", "dev", "test"])
    convert.add_argument("--out", required=True)
    convert.add_argument("--server")
    convert.set_defaults(handler=_cmd_convert)

    serve = sub.add_parser("serve", help="start the service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=_cmd_serve)

    return parser


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="dataset JSON file")
    parser.add_argument("--record", help="record name (default: the only non-train one)")
    parser.add_argument("--server", help="service URL; default runs in-process")


def _induction_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", default="col", choices=["col", "hf"])
    parser.add_argument("--shots", default="few", choices=["few", "zero"])
    parser.add_argument("--backend", required=True,
                        help="scripted:PATH or http:URL")
    parser.add_argument("--scorer", default="lexical",
                        help="lexical or remote:URL")
    filter_group = parser.add_mutually_exclusive_group()
    filter_group.add_argument("--filter", dest="filter_enabled", action="store_true")
    filter_group.add_argument("--no-filter", dest="filter_enabled",
                              action="store_false")
    parser.set_defaults(filter_enabled=False)
    strict_group = parser.add_mutually_exclusive_group()
    strict_group.add_argument("--strict-entities", dest="strict",
                              action="store_true", default=None)
    strict_group.add_argument("--lenient-entities", dest="strict",
                              action="store_false")
    parser.add_argument("--top-k", type=int, default=10)
    parser.add_argument("--max-iterations", type=int, default=10)
    parser.add_argument("--stall-limit", type=int, default=2)
    parser.add_argument("--model", default="scripted")
    parser.add_argument("--seed", type=int, default=0)


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=300.0)
    from .service import app  # deferred so remote use never imports FastAPI stack

    return httpx.Client(
        transport=_AsgiBridge(app),
        base_url="http://service.local",
        timeout=300.0,
    )


def _post(server: Optional[str], path: str, payload: Dict) -> Dict:
    with _client(server) as client:
        response = client.post(path, json=payload)
        response.raise_for_status()
        return response.json()


def _cmd_induce(args: argparse.Namespace) -> int:
    payload = _induce_payload(args)
    body = _post(args.server, "/induce", payload)
    print(body["outline"])
    print()
    print(f"termination: {body['termination']}")
    if body["unplaced"]:
        print(f"unplaced: {', '.join(body['unplaced'])}")
    if body["dropped"]:
        print(f"dropped: {', '.join(body['dropped'])}")
    _print_metrics(body["metrics"])
    if args.out:
        Path(args.out).write_text(
            json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    payload = {
        "predicted": _taxonomy_file(args.predicted),
        "gold": _taxonomy_file(args.gold),
    }
    body = _post(args.server, "/evaluate", payload)
    _print_metrics(body["metrics"])
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    record = _pick_record(_load_json(args.dataset), args.record)
    try:
        sizes = [int(part) for part in args.sizes.split(",") if part]
    except ValueError as error:
        raise ClientError(f"bad --sizes: {error}") from error
    if not sizes:
        raise ClientError("bad --sizes: empty")
    body = _post(
        args.server,
        "/sample",
        {"record": record, "sizes": sizes, "repeats": args.repeats, "seed": args.seed},
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for sample in body["samples"]:
        target = out_dir / f"{sample['name']}.json"
        target.write_text(
            json.dumps(sample["record"], indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(target)
    return 0


def _cmd_gen_demos(args: argparse.Namespace) -> int:
    kind, script = _parse_backend(args.backend)
    if kind != "scripted":
        raise ClientError("gen-demos needs a scripted: backend here; use `run` for http")
    body = _post(
        args.server,
        "/gen-demos",
        {
            "root": args.root,
            "count": args.count,
            "script": script,
            "model_name": args.model,
            "demo_temperature": args.demo_temperature,
        },
    )
    Path(args.out).write_text(
        json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(body['demonstrations'])} demonstrations to {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    payload, out_dir = _run_payload_from_config(args.config)
    if args.out_dir:
        out_dir = args.out_dir
    body = _post(args.server, "/run", payload)
    base = Path(out_dir) / (body["manifest"].get("run_id") or body["manifest"]["grid_id"])
    for relative, text in body["artifacts"].items():
        target = base / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    print(f"run written to {base}")
    failed = body["manifest"].get("failed", [])
    if "rows" in body["manifest"]:
        for row in body["manifest"]["rows"]:
            print(f"  cell {row['configuration']}: "
                  f"edge-F1 {row['aggregate']['edge_f1']:.4f}")
    elif "aggregate" in body["manifest"]:
        _print_metrics(body["manifest"]["aggregate"])
    if failed:
        print(f"failed records: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_case_study(args: argparse.Namespace) -> int:
    payload = _induce_payload(args)
    record_name = payload["record"]["name"]
    run_payload = {
        "records": [payload["record"]] + payload.pop("demonstrations"),
        "settings": payload["settings"],
        "backend": payload["backend"],
        "scorer": payload["scorer"],
        "scripts": {record_name: payload["script"]} if payload["script"] else {},
    }
    body = _post(args.server, "/run", run_payload)
    text = body["artifacts"].get(f"case_studies/{record_name}.txt")
    if text is None:
        print(f"record {record_name!r} produced no case study", file=sys.stderr)
        return 1
    print(text, end="")
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    try:
        text = Path(args.edges).read_text(encoding="utf-8")
    except OSError as error:
        raise ClientError(str(error)) from error
    body = _post(
        args.server,
        "/convert",
        {"text": text, "name": args.name, "split": args.split},
    )
    Path(args.out).write_text(
        json.dumps(body["record"], indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("taxoduce.service.app:app", host=args.host, port=args.port)
    return 0


def _induce_payload(args: argparse.Namespace) -> Dict:
    records = _dataset_records(_load_json(args.dataset))
    record = _pick_record(records, args.record)
    kind, script_or_url = _parse_backend(args.backend)
    backend: Dict = {"kind": kind}
    script: List[Dict] = []
    if kind == "scripted":
        script = script_or_url
    else:
        backend["endpoint_url"] = script_or_url
    scorer: Dict = {"kind": "lexical"}
    if args.scorer != "lexical":
        if not args.scorer.startswith("remote:"):
            raise ClientError(f"bad --scorer {args.scorer!r}")
        scorer = {"kind": "remote", "base_url": args.scorer[len("remote:"):]}
    demonstrations = [
        item for item in records
        if item.get("split") == "train" and item["name"] != record["name"]
    ]
    return {
        "record": record,
        "settings": {
            "method": args.method,
            "shots": args.shots,
            "filter_enabled": args.filter_enabled,
            "top_k": args.top_k,
            "strict": args.strict,
            "max_iterations": args.max_iterations,
            "stall_limit": args.stall_limit,
            "seed": args.seed,
            "model_name": args.model,
        },
        "backend": backend,
        "scorer": scorer,
        "script": script,
        "demonstrations": demonstrations,
    }


def _run_payload_from_config(path: str) -> Tuple[Dict, str]:
    config = _load_config(path)
    run = dict(config.get("run", {}))
    base = Path(path).parent
    datasets = run.pop("datasets", None)
    if not datasets:
        raise ClientError(f"{path}: [run] needs datasets")
    records: List[Dict] = []
    for dataset_path in datasets:
        records.extend(_dataset_records(_load_json(str(_resolve(base, dataset_path)))))
    out_dir = str(_resolve(base, run.pop("out_dir", "runs")))

    settings = {
        "method": run.pop("method", "col"),
        "shots": run.pop("shots", "few"),
        "filter_enabled": run.pop("filter", False),
        "top_k": run.pop("top_k", 10),
        "strict": run.pop("strict", None),
        "max_iterations": run.pop("max_iterations", 10),
        "stall_limit": run.pop("stall_limit", 2),
        "seed": run.pop("seed", 0),
        "model_name": run.pop("model", "scripted"),
        "temperature": run.pop("temperature", 0.0),
        "demo_temperature": run.pop("demo_temperature", 0.7),
        "workers": run.pop("workers", 4),
    }
    settings = {key: value for key, value in settings.items() if value is not None}
    if run:
        raise ClientError(f"{path}: unknown [run] keys: {sorted(run)}")

    grid = {
        {"filter": "filter_enabled"}.get(key, key): list(values)
        for key, values in dict(config.get("grid", {})).items()
    }

    backend_config = dict(config.get("backend", {"kind": "scripted"}))
    scripts: Dict[str, List[Dict]] = {}
    if backend_config.get("kind", "scripted") == "scripted":
        methods = grid.get("method", [settings["method"]])
        scripts = _collect_scripts(base, backend_config, records, methods)
        backend = {"kind": "scripted"}
    else:
        backend = {
            "kind": "http",
            "endpoint_url": backend_config.get("endpoint_url"),
            "api_key_env": backend_config.get("api_key_env"),
            "timeout_seconds": backend_config.get("timeout_seconds", 30.0),
            "retry_count": backend_config.get("retry_count", 3),
        }

    scorer = dict(config.get("scorer", {"kind": "lexical"}))
    payload = {
        "records": records,
        "settings": settings,
        "grid": grid,
        "backend": backend,
        "scorer": scorer,
        "scripts": scripts,
    }
    return payload, out_dir


def _collect_scripts(
    base: Path,
    backend_config: Dict,
    records: List[Dict],
    methods: List[str],
) -> Dict[str, List[Dict]]:
    scripts: Dict[str, List[Dict]] = {}
    single = backend_config.get("transcript")
    directory = backend_config.get("transcript_dir")
    if single:
        targets = [record for record in records if record.get("split") != "train"]
        if len(targets) != 1:
            raise ClientError("a single transcript file needs a single target record")
        scripts[targets[0]["name"]] = _load_script_file(_resolve(base, single))
        return scripts
    if not directory:
        raise ClientError("[backend] needs transcript or transcript_dir")
    directory = _resolve(base, directory)
    for record in records:
        if record.get("split") == "train":
            continue
        name = record["name"]
        for key in [f"{name}.{method}" for method in methods] + [name]:
            candidate = Path(directory) / f"{key}.ndjson"
            if candidate.exists():
                scripts[key] = _load_script_file(candidate)
    if not scripts:
        raise ClientError(f"no transcripts found under {directory}")
    return scripts


def _load_script_file(path: Path) -> List[Dict]:
    items: List[Dict] = []
    try:
        for line_no, line in enumerate(
            path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            payload = json.loads(line)
            if "reply" not in payload:
                raise ClientError(f"{path}:{line_no}: missing 'reply'")
            items.append({"reply": payload["reply"], "digest": payload.get("digest")})
    except OSError as error:
        raise ClientError(str(error)) from error
    except json.JSONDecodeError as error:
        raise ClientError(f"{path}: {error}") from error
    return items


def _load_config(path: str) -> Dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as error:
        raise ClientError(str(error)) from error
    if path.endswith(".json"):
        try:
            return json.loads(raw)
        except json.JSONDecodeError as error:
            raise ClientError(f"{path}: {error}") from error
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw)
    except tomllib.TOMLDecodeError as error:
        raise ClientError(f"{path}: {error}") from error


def _load_json(path: str) -> Dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as error:
        raise ClientError(str(error)) from error
    except json.JSONDecodeError as error:
        raise ClientError(f"{path}: {error}") from error


def _dataset_records(payload: object) -> List[Dict]:
    if isinstance(payload, dict) and "records" in payload:
        return list(payload["records"])
    if isinstance(payload, dict):
        return [payload]
    if isinstance(payload, list):
        return payload
    raise ClientError("dataset file must hold an object or a list")


def _pick_record(payload: object, name: Optional[str]) -> Dict:
    records = payload if isinstance(payload, list) else _dataset_records(payload)
    if name:
        for record in records:
            if record.get("name") == name:
                return record
        raise ClientError(f"no record named {name!r}")
    candidates = [record for record in records if record.get("split") != "train"]
    if len(candidates) != 1:
        raise ClientError("ambiguous dataset; pick one with --record")
    return candidates[0]


def _taxonomy_file(path: str) -> Dict:
    payload = _load_json(path)
    if isinstance(payload, dict) and "records" in payload:
        if len(payload["records"]) != 1:
            raise ClientError(f"{path}: holds several records")
        payload = payload["records"][0]
    if not isinstance(payload, dict) or "root" not in payload or "edges" not in payload:
        raise ClientError(f"{path}: expected an object with root and edges")
    return {"root": payload["root"], "edges": payload["edges"]}


def _parse_backend(value: str) -> Tuple[str, object]:
    if value.startswith("scripted:"):
        return "scripted", _load_script_file(Path(value[len("scripted:"):]))
    if value.startswith("http:"):
        url = value[len("http:"):]
        if not url:
            raise ClientError("http: backend needs a URL")
        return "http", url
    raise ClientError(f"bad --backend {value!r}; use scripted:PATH or http:URL")


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def _print_metrics(metrics: Dict) -> None:
    for view in ("ancestor", "edge", "node"):
        numbers = metrics[view]
        print(
            f"{view:>8}: P {numbers['precision']:.4f}  "
            f"R {numbers['recall']:.4f}  F1 {numbers['f1']:.4f}"
        )


def _detail(response: httpx.Response) -> str:
    try:
        return str(response.json().get("detail", response.text))
    except json.JSONDecodeError:
        return response.text


if __name__ == "__main__":
    sys.exit(main())
