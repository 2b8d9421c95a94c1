"""Run-level aggregation and report emission.

A run folds per-document reports into a model x domain grid plus
per-model validity, overall pass rate, accuracy on valid documents,
and a failure-mode histogram.  Cells render as "passed/positions
(percent)" with one decimal, and the JSON form round-trips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .config import RunConfig
from .engine import DocumentReport, evaluate_document, invalid_document_report
from .errors import ManifestMismatch, UnknownFormat, XBError
from .harness import ExtractionOutcome, ManifestRow, classify_failure
from .judge import make_judge
from .schema import parse_schema

FORMATS = ("json", "csv", "markdown")


@dataclass(frozen=True)
class ScoredAttempt:
    """One manifest row joined with its evaluated report."""

    document: str
    model: str
    mode: str
    domain: str
    report: DocumentReport
    failure_mode: str | None = None


@dataclass
class CellStats:
    documents: int = 0
    valid_documents: int = 0
    positions: int = 0
    passed: int = 0
    valid_positions: int = 0
    valid_passed: int = 0

    def absorb(self, report: DocumentReport) -> None:
        self.documents += 1
        scoreable = report.counts["positions"] - report.counts["skipped"]
        achieved = report.counts["passed"] + report.counts["auto_passed"]
        self.positions += scoreable
        self.passed += achieved
        if report.valid:
            self.valid_documents += 1
            self.valid_positions += scoreable
            self.valid_passed += achieved

    def to_dict(self) -> dict[str, int]:
        return {
            "documents": self.documents,
            "valid_documents": self.valid_documents,
            "positions": self.positions,
            "passed": self.passed,
            "valid_positions": self.valid_positions,
            "valid_passed": self.valid_passed,
        }

    @staticmethod
    def from_dict(raw: dict[str, int]) -> "CellStats":
        return CellStats(**raw)


@dataclass
class RunSummary:
    models: list[str] = field(default_factory=list)
    domains: list[str] = field(default_factory=list)
    cells: dict[tuple[str, str], CellStats] = field(default_factory=dict)
    failures: dict[str, dict[str, int]] = field(default_factory=dict)

    def cell(self, model: str, domain: str) -> CellStats:
        key = (model, domain)
        if key not in self.cells:
            self.cells[key] = CellStats()
        return self.cells[key]

    def model_total(self, model: str) -> CellStats:
        total = CellStats()
        for (m, _), cell in self.cells.items():
            if m == model:
                total.documents += cell.documents
                total.valid_documents += cell.valid_documents
                total.positions += cell.positions
                total.passed += cell.passed
                total.valid_positions += cell.valid_positions
                total.valid_passed += cell.valid_passed
        return total

    def to_dict(self) -> dict[str, Any]:
        return {
            "models": list(self.models),
            "domains": list(self.domains),
            "cells": {
                model: {
                    domain: self.cells[(model, domain)].to_dict()
                    for domain in self.domains
                    if (model, domain) in self.cells
                }
                for model in self.models
            },
            "failures": {model: dict(sorted(histogram.items()))
                         for model, histogram in sorted(self.failures.items())},
        }

    @staticmethod
    def from_dict(raw: dict[str, Any]) -> "RunSummary":
        summary = RunSummary(models=list(raw["models"]), domains=list(raw["domains"]))
        for model, row in raw["cells"].items():
            for domain, cell in row.items():
                summary.cells[(model, domain)] = CellStats.from_dict(cell)
        summary.failures = {model: dict(hist) for model, hist in raw.get("failures", {}).items()}
        return summary


def percent(numerator: int, denominator: int) -> str:
    if denominator <= 0:
        return "0.0%"
    return f"{100.0 * numerator / denominator:.1f}%"


def cell_text(passed: int, positions: int) -> str:
    return f"{passed}/{positions} ({percent(passed, positions)})"


def aggregate_run(attempts: list[ScoredAttempt]) -> RunSummary:
    """Fold scored attempts into the run grid.

    Models and domains appear in first-seen order; every invalid
    attempt lands in exactly one failure-mode bucket.
    """
    summary = RunSummary()
    for attempt in attempts:
        if attempt.model not in summary.models:
            summary.models.append(attempt.model)
        if attempt.domain not in summary.domains:
            summary.domains.append(attempt.domain)
        summary.cell(attempt.model, attempt.domain).absorb(attempt.report)
        if not attempt.report.valid:
            mode = attempt.failure_mode or attempt.report.failure_mode or "Other"
            histogram = summary.failures.setdefault(attempt.model, {})
            histogram[mode] = histogram.get(mode, 0) + 1
    return summary


def score_run(
    run_dir: str | Path,
    config: RunConfig | None = None,
    judge: Any = None,
    manifest: list[ManifestRow] | None = None,
) -> list[ScoredAttempt]:
    """Evaluate every outcome record in a run directory.

    Records embed their schema and gold paths, so a run directory is
    self-describing; a manifest, when given, must agree with the
    records (extra or unknown attempts are a mismatch).
    """
    config = config or RunConfig()
    if judge is None:
        judge = make_judge(config.judge)
    run_dir = Path(run_dir)
    record_paths = sorted(run_dir.glob("*.json"))
    if manifest is not None:
        expected = {(row.document_name, row.model, row.mode) for row in manifest}
        seen = set()
    attempts: list[ScoredAttempt] = []
    for record_path in record_paths:
        raw = json.loads(record_path.read_text(encoding="utf-8"))
        outcome = ExtractionOutcome.from_dict(raw)
        schema_path = raw.get("schema_path")
        gold_path = raw.get("gold_path")
        if not schema_path or not gold_path:
            raise XBError(f"run record {record_path.name} lacks schema_path/gold_path")
        key = (outcome.document, outcome.model_id, outcome.mode)
        if manifest is not None:
            if key not in expected:
                raise ManifestMismatch(
                    f"run record {record_path.name} has no matching manifest row"
                )
            seen.add(key)
        schema = parse_schema(Path(schema_path).read_text(encoding="utf-8"))
        gold = json.loads(Path(gold_path).read_text(encoding="utf-8"))
        failure = classify_failure(outcome)
        if outcome.rejection is not None:
            report = invalid_document_report(
                schema, failure, document=outcome.document,
                model=outcome.model_id, mode=outcome.mode,
            )
        else:
            report = evaluate_document(
                schema, gold, outcome.candidate_json(), config=config, judge=judge,
                document=outcome.document, model=outcome.model_id, mode=outcome.mode,
            )
        attempts.append(ScoredAttempt(
            document=outcome.document,
            model=outcome.model_id,
            mode=outcome.mode,
            domain=raw.get("domain", Path(schema_path).stem),
            report=report,
            failure_mode=failure if not report.valid else None,
        ))
    if manifest is not None and seen != expected:
        unattempted = sorted(expected - seen)
        raise ManifestMismatch(f"manifest rows without run records: {unattempted[:5]}")
    return attempts


def emit_report(summary: RunSummary, fmt: str = "markdown") -> str:
    """Render a RunSummary as canonical JSON, CSV, or a markdown grid."""
    if fmt == "json":
        return json.dumps(summary.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    if fmt == "csv":
        return _emit_csv(summary)
    if fmt == "markdown":
        return _emit_markdown(summary)
    raise UnknownFormat(f"unknown report format {fmt!r} (expected one of {FORMATS})")


def parse_report(text: str) -> RunSummary:
    """Inverse of emit_report(fmt="json")."""
    return RunSummary.from_dict(json.loads(text))


def _emit_csv(summary: RunSummary) -> str:
    header = ["Model", "Valid JSON"] + list(summary.domains) + ["Overall", "Acc (Valid)"]
    lines = [",".join(header)]
    for model in summary.models:
        total = summary.model_total(model)
        row = [model, f"{total.valid_documents}/{total.documents}"]
        for domain in summary.domains:
            cell = summary.cells.get((model, domain))
            row.append(cell_text(cell.passed, cell.positions) if cell else "")
        row.append(cell_text(total.passed, total.positions))
        row.append(percent(total.valid_passed, total.valid_positions))
        lines.append(",".join(f'"{v}"' if "," in v else v for v in row))
    return "\n".join(lines) + "\n"


def _best_in_domain(summary: RunSummary, domain: str) -> float:
    best = -1.0
    for model in summary.models:
        cell = summary.cells.get((model, domain))
        if cell and cell.positions > 0:
            best = max(best, cell.passed / cell.positions)
    return best


def _emit_markdown(summary: RunSummary) -> str:
    header = "| Model | Valid JSON | " + " | ".join(summary.domains) + " | Overall | Acc (Valid) |"
    rule = "|" + "---|" * (len(summary.domains) + 4)
    lines = [header, rule]
    best = {domain: _best_in_domain(summary, domain) for domain in summary.domains}
    for model in summary.models:
        total = summary.model_total(model)
        row = [model, f"{total.valid_documents}/{total.documents}"]
        for domain in summary.domains:
            cell = summary.cells.get((model, domain))
            if cell is None:
                row.append("")
                continue
            text = cell_text(cell.passed, cell.positions)
            rate = cell.passed / cell.positions if cell.positions else -1.0
            if cell.positions > 0 and rate == best[domain]:
                text = f"**{text}**"
            row.append(text)
        row.append(cell_text(total.passed, total.positions))
        row.append(percent(total.valid_passed, total.valid_positions))
        lines.append("| " + " | ".join(row) + " |")
    if summary.failures:
        lines.append("")
        lines.append("| Model | Failure mode | Count |")
        lines.append("|---|---|---|")
        for model in sorted(summary.failures):
            for mode in sorted(summary.failures[model]):
                lines.append(f"| {model} | {mode} | {summary.failures[model][mode]} |")
    return "\n".join(lines) + "\n"
