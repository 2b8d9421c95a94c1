"""Command-line interface.

Subcommands: validate (schema structure), evaluate (one attempt),
run (execute a manifest against providers), score (aggregate a run
directory), analyze (complexity analytics).  Exit codes: 0 success,
1 usage error, 2 data error, 3 external-service failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from .complexity import compression_stats, profile_instance, profile_schema
from .config import RunConfig, config_from_dict
from .engine import evaluate_document, serialize_report
from .errors import (
    BadConfig,
    JudgeUnavailable,
    RateLimited,
    TransportFailure,
    XBError,
)
from .harness import HttpProvider, MockProvider, load_manifest, run_manifest
from .judge import make_judge
from .reporting import FORMATS, aggregate_run, emit_report, score_run
from .schema import enumerate_field_positions, parse_schema

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SERVICE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits the process on bad flags; surface a code-1 return instead
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xb", description="Schema-driven extraction evaluation")
    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", help="parse a schema and list its field positions")
    validate.add_argument("schema", help="path to the schema JSON file")

    evaluate = commands.add_parser("evaluate", help="score one raw model output against gold")
    evaluate.add_argument("--schema", required=True, help="path to the schema JSON file")
    evaluate.add_argument("--gold", required=True, help="path to the gold instance JSON file")
    evaluate.add_argument("--pred", required=True, help="path to the raw model output text")
    evaluate.add_argument("--config", help="path to a run config JSON file")

    run = commands.add_parser("run", help="execute manifest rows against providers")
    run.add_argument("--manifest", required=True, help="path to the manifest JSON file")
    run.add_argument("--out", required=True, help="directory for outcome records")
    run.add_argument("--config", help="run config JSON; its providers section wires providers")
    run.add_argument("--providers", help="separate provider config JSON (overrides --config)")
    run.add_argument("--mode", choices=("prompt", "structured"), help="override the mode column")
    run.add_argument("--provider", help="only execute rows for this provider id")
    run.add_argument("--parallelism", type=int, default=1, help="concurrent attempts")

    score = commands.add_parser("score", help="score a run directory and emit a report")
    score.add_argument("--run", required=True, dest="run_dir", help="directory of outcome records")
    score.add_argument("--manifest", help="manifest to cross-check the records against")
    score.add_argument("--config", help="path to a run config JSON file")
    score.add_argument("--format", choices=FORMATS, help="default: from --out extension, else markdown")
    score.add_argument("--out", help="write the report here instead of stdout")

    analyze = commands.add_parser("analyze", help="schema and instance complexity analytics")
    analyze.add_argument("--schema", required=True, help="path to the schema JSON file")
    analyze.add_argument("--gold", help="gold instance to profile against the schema")
    analyze.add_argument("--tokens", help="CSV (Input/Output columns) or JSON pairs of token counts")

    return parser


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_run_config(path: str | None) -> RunConfig:
    if not path:
        return RunConfig()
    raw = json.loads(_read(path))
    if isinstance(raw, dict):
        raw = {k: v for k, v in raw.items() if k != "providers"}
    return config_from_dict(raw)


def _providers_section(config_path: str | None) -> dict[str, Any] | None:
    if not config_path:
        return None
    raw = json.loads(_read(config_path))
    if isinstance(raw, dict) and isinstance(raw.get("providers"), dict):
        return raw["providers"]
    return None


def _build_providers(raw: dict[str, Any]) -> dict[str, Any]:
    if not isinstance(raw, dict):
        raise BadConfig("provider config must be a JSON object keyed by provider id")
    providers: dict[str, Any] = {}
    for provider_id, entry in raw.items():
        if not isinstance(entry, dict):
            raise BadConfig(f"provider {provider_id!r} config must be an object")
        kind = entry.get("kind", "mock")
        if kind == "mock":
            providers[provider_id] = MockProvider(
                provider_id=provider_id,
                responses=entry.get("responses"),
                fixtures_dir=entry.get("fixtures_dir"),
                reject=entry.get("reject"),
                max_schema_bytes=entry.get("max_schema_bytes"),
            )
        elif kind == "http":
            endpoint = entry.get("endpoint")
            if not endpoint:
                raise BadConfig(f"provider {provider_id!r} needs an endpoint")
            providers[provider_id] = HttpProvider(
                provider_id=provider_id,
                endpoint=endpoint,
                timeout=entry.get("timeout", 120.0),
                api_key_env=entry.get("api_key_env", "XB_PROVIDER_API_KEY"),
            )
        else:
            raise BadConfig(f"provider {provider_id!r} has unknown kind {kind!r}")
    return providers


def _cmd_validate(args: argparse.Namespace) -> int:
    ast = parse_schema(_read(args.schema))
    positions = enumerate_field_positions(ast)
    out = {
        "positions": [
            {
                "path": position.dotted,
                "kind": position.node.kind,
                "metric": position.node.metric_spec.metric_id if position.node.metric_spec else None,
            }
            for position in positions
        ],
        "profile": profile_schema(ast).to_dict(),
    }
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_run_config(args.config)
    schema = parse_schema(_read(args.schema))
    gold = json.loads(_read(args.gold))
    report = evaluate_document(
        schema, gold, _read(args.pred), config=config,
        document=Path(args.pred).stem,
    )
    print(serialize_report(report))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    rows = load_manifest(args.manifest)
    if args.providers:
        providers_raw = json.loads(_read(args.providers))
    else:
        providers_raw = _providers_section(args.config)
    if providers_raw is None:
        raise BadConfig("no providers configured; pass --providers or a config with a providers section")
    providers = _build_providers(providers_raw)
    written = run_manifest(
        rows,
        args.out,
        providers,
        parallelism=args.parallelism,
        mode_override=args.mode,
        provider_filter=args.provider,
    )
    print(f"{len(written)} outcome records in {args.out}")
    return EXIT_OK


_SUFFIX_FORMATS = {".json": "json", ".csv": "csv", ".md": "markdown", ".markdown": "markdown"}


def _cmd_score(args: argparse.Namespace) -> int:
    config = _load_run_config(args.config)
    manifest = load_manifest(args.manifest) if args.manifest else None
    judge = make_judge(config.judge)
    attempts = score_run(args.run_dir, config=config, judge=judge, manifest=manifest)
    summary = aggregate_run(attempts)
    fmt = args.format
    if fmt is None:
        fmt = _SUFFIX_FORMATS.get(Path(args.out).suffix.lower(), "markdown") if args.out else "markdown"
    rendered = emit_report(summary, fmt)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(rendered, end="")
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    ast = parse_schema(_read(args.schema))
    out: dict[str, Any] = {"schema_profile": profile_schema(ast).to_dict()}
    if args.gold:
        gold = json.loads(_read(args.gold))
        out["instance_profile"] = profile_instance(ast, gold).to_dict()
    if args.tokens:
        out["compression"] = compression_stats(_read_token_pairs(args.tokens)).to_dict()
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return EXIT_OK


def _read_token_pairs(path: str) -> list[tuple[int, int]]:
    """Token pairs from a JSON array of [input, output] or a CSV with
    Input/Output columns (extra columns like Document/Pages are fine)."""
    text = _read(path)
    if Path(path).suffix.lower() == ".json":
        pairs = []
        for row in json.loads(text):
            if isinstance(row, dict):
                lowered = {str(k).strip().lower(): v for k, v in row.items()}
                row = (lowered.get("input"), lowered.get("output"))
            try:
                pairs.append((int(str(row[0]).replace(",", "")), int(str(row[1]).replace(",", ""))))
            except (IndexError, TypeError, ValueError) as exc:
                raise BadConfig(f"bad token row {row!r}: {exc}") from exc
        return pairs
    import csv
    import io

    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        raise BadConfig(f"{path} holds no token rows")
    header = [cell.strip().lower() for cell in rows[0]]
    if "input" in header and "output" in header:
        input_col, output_col = header.index("input"), header.index("output")
        data = rows[1:]
    else:
        input_col, output_col = 0, 1
        data = rows
    pairs = []
    for row in data:
        try:
            pairs.append((int(row[input_col].replace(",", "")), int(row[output_col].replace(",", ""))))
        except (IndexError, ValueError) as exc:
            raise BadConfig(f"bad token row {row!r}: {exc}") from exc
    return pairs


_COMMANDS = {
    "validate": _cmd_validate,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
    "score": _cmd_score,
    "analyze": _cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"xb: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (TransportFailure, RateLimited, JudgeUnavailable) as exc:
        print(f"xb: external service failure: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except XBError as exc:
        print(f"xb: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"xb: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
