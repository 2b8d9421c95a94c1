"""Extraction attempt execution and the failure taxonomy.

The harness builds prompts, calls providers, records raw outcomes, and
classifies every failed attempt into a small stable taxonomy.  Provider
message patterns live in a data file (data/provider_patterns.json), not
in code, so new provider phrasings are a data update.

Failure precedence: a transport-level rejection outranks anything in
the body; an empty body outranks syntactic analysis; among syntactic
failures, trailing commas are checked before truncation.
"""

from __future__ import annotations

import json
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Protocol

from .errors import EmptyInput, ProviderRejected, TransportFailure, XBError

EMPTY_RESPONSE = "EmptyResponse"
TRAILING_COMMA = "TrailingComma"
TRUNCATED_JSON = "TruncatedJson"
PDF_PAGE_LIMIT = "PdfPageLimit"
CONTEXT_LENGTH = "ContextLength"
SCHEMA_REJECTED = "SchemaRejected"
OTHER = "Other"

FAILURE_MODES = (
    EMPTY_RESPONSE,
    TRAILING_COMMA,
    TRUNCATED_JSON,
    PDF_PAGE_LIMIT,
    CONTEXT_LENGTH,
    SCHEMA_REJECTED,
    OTHER,
)

MODES = ("prompt", "structured")

PROMPT_TEMPLATE = (
    "Using the JSON template as a guideline, extract all the required "
    "information from {document_name} document.\n"
    "\n"
    "JSON Template:\n"
    "{schema_str}\n"
    "\n"
    "Please return ONLY valid JSON that conforms to this schema. "
    "Do not include any explanatory text before or after the JSON."
)

_FENCE = re.compile(r"```(?:[A-Za-z0-9_+-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)


def build_prompt(schema_text: str, document_name: str) -> str:
    """The extraction prompt sent in prompt mode.  Byte-stable for
    identical inputs; empty inputs are an error."""
    if not schema_text.strip():
        raise EmptyInput("schema text is empty")
    if not document_name.strip():
        raise EmptyInput("document name is empty")
    return PROMPT_TEMPLATE.format(document_name=document_name, schema_str=schema_text)


def extract_candidate(raw_output: str) -> tuple[str, str]:
    """The JSON candidate inside a raw response.

    The first fenced code block wins when present; otherwise the full
    text.  Returns (candidate, source) with source "fenced" or "full".
    """
    match = _FENCE.search(raw_output)
    if match:
        return match.group(1).strip(), "fenced"
    return raw_output, "full"


# --- syntactic failure analysis ----------------------------------------------

def find_trailing_commas(text: str) -> list[int]:
    """Offsets of commas directly preceding a closing bracket, outside
    string literals."""
    offsets: list[int] = []
    in_string = False
    escaped = False
    pending_comma = -1
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
            pending_comma = -1
        elif ch == ",":
            pending_comma = i
        elif ch in "}]":
            if pending_comma != -1:
                offsets.append(pending_comma)
            pending_comma = -1
        elif not ch.isspace():
            pending_comma = -1
    return offsets


def strip_trailing_commas(text: str) -> tuple[str, int]:
    """Remove every flagged trailing comma; returns (text, removed count)."""
    offsets = set(find_trailing_commas(text))
    if not offsets:
        return text, 0
    return "".join(ch for i, ch in enumerate(text) if i not in offsets), len(offsets)


def _looks_truncated(text: str) -> bool:
    """EOF inside an unterminated string or with unbalanced brackets."""
    depth = 0
    in_string = False
    escaped = False
    for ch in text:
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
    return in_string or depth > 0


def classify_json_text(text: str) -> str | None:
    """Classify raw output text by syntax alone.

    None when the text parses as JSON.  A TrailingComma verdict is only
    issued when removing the flagged commas makes the text parse.
    """
    if not text.strip():
        return EMPTY_RESPONSE
    try:
        json.loads(text)
        return None
    except ValueError:
        pass
    stripped, removed = strip_trailing_commas(text)
    if removed:
        try:
            json.loads(stripped)
            return TRAILING_COMMA
        except ValueError:
            pass
    if _looks_truncated(text):
        return TRUNCATED_JSON
    return OTHER


# --- provider message patterns ------------------------------------------------

def load_patterns(path: str | Path | None = None) -> dict[str, list[re.Pattern]]:
    """Provider message patterns, compiled case-insensitive.  The
    bundled table ships as package data; pass a path to override."""
    if path is None:
        text = resources.files("xbench").joinpath("data/provider_patterns.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    patterns: dict[str, list[re.Pattern]] = {}
    for mode in (PDF_PAGE_LIMIT, CONTEXT_LENGTH, SCHEMA_REJECTED):
        patterns[mode] = [re.compile(p, re.IGNORECASE) for p in raw.get(mode, [])]
    return patterns


_default_patterns: dict[str, list[re.Pattern]] | None = None
_patterns_lock = threading.Lock()


def _patterns() -> dict[str, list[re.Pattern]]:
    global _default_patterns
    with _patterns_lock:
        if _default_patterns is None:
            _default_patterns = load_patterns()
        return _default_patterns


# --- outcomes -----------------------------------------------------------------

@dataclass(frozen=True)
class ExtractionOutcome:
    """Raw record of one extraction attempt, before any scoring."""

    provider_id: str
    model_id: str
    mode: str
    document: str
    raw_output: str = ""
    rejection: str | None = None  # provider/transport message, when the call failed
    candidate_source: str = "full"
    duration_s: float | None = None
    token_usage: dict[str, int] | None = None

    def candidate_json(self) -> str:
        return extract_candidate(self.raw_output)[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "provider_id": self.provider_id,
            "model_id": self.model_id,
            "mode": self.mode,
            "document": self.document,
            "raw_output": self.raw_output,
            "rejection": self.rejection,
            "candidate_source": self.candidate_source,
            "duration_s": self.duration_s,
            "token_usage": self.token_usage,
        }

    @staticmethod
    def from_dict(raw: dict[str, Any]) -> "ExtractionOutcome":
        return ExtractionOutcome(
            provider_id=raw["provider_id"],
            model_id=raw["model_id"],
            mode=raw["mode"],
            document=raw["document"],
            raw_output=raw.get("raw_output", ""),
            rejection=raw.get("rejection"),
            candidate_source=raw.get("candidate_source", "full"),
            duration_s=raw.get("duration_s"),
            token_usage=raw.get("token_usage"),
        )


def classify_failure(
    outcome: ExtractionOutcome,
    patterns: dict[str, list[re.Pattern]] | None = None,
) -> str | None:
    """Failure mode for one outcome; None when the candidate JSON parses.

    Transport/provider rejections are classified from their message via
    the pattern table; everything else is syntactic analysis of the
    candidate (the fenced block when present, else the raw output).
    """
    if outcome.rejection is not None:
        table = patterns or _patterns()
        for mode in (PDF_PAGE_LIMIT, CONTEXT_LENGTH, SCHEMA_REJECTED):
            if any(p.search(outcome.rejection) for p in table[mode]):
                return mode
        return OTHER
    return classify_json_text(outcome.candidate_json())


# --- providers ----------------------------------------------------------------

@dataclass(frozen=True)
class ExtractionRequest:
    mode: str
    model: str
    document_name: str
    schema_text: str
    prompt: str | None = None
    pdf_bytes: bytes | None = None


class Provider(Protocol):
    provider_id: str

    def extract(self, request: ExtractionRequest) -> str: ...


class MockProvider:
    """Canned-response provider for hermetic runs.

    Responses come from an inline mapping or a fixtures directory of
    <document name>.json / .txt files.  reject maps document names to
    provider-style rejection messages; max_schema_bytes simulates
    structured-mode schema size limits.
    """

    def __init__(
        self,
        provider_id: str = "mock",
        responses: dict[str, str] | None = None,
        fixtures_dir: str | Path | None = None,
        reject: dict[str, str] | None = None,
        max_schema_bytes: int | None = None,
    ) -> None:
        self.provider_id = provider_id
        self._responses = dict(responses or {})
        self._fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self._reject = dict(reject or {})
        self._max_schema_bytes = max_schema_bytes

    def extract(self, request: ExtractionRequest) -> str:
        if request.document_name in self._reject:
            raise ProviderRejected(self._reject[request.document_name])
        if (
            request.mode == "structured"
            and self._max_schema_bytes is not None
            and len(request.schema_text.encode("utf-8")) > self._max_schema_bytes
        ):
            raise ProviderRejected(
                f"schema exceeds the structured output limit of {self._max_schema_bytes} bytes"
            )
        if request.document_name in self._responses:
            return self._responses[request.document_name]
        if self._fixtures_dir is not None:
            for suffix in (".json", ".txt"):
                path = self._fixtures_dir / f"{request.document_name}{suffix}"
                if path.exists():
                    return path.read_text(encoding="utf-8")
        raise ProviderRejected(f"no canned response for document {request.document_name!r}")


class HttpProvider:
    """Small JSON-over-HTTP provider client."""

    def __init__(
        self,
        provider_id: str,
        endpoint: str,
        timeout: float = 120.0,
        api_key_env: str = "XB_PROVIDER_API_KEY",
    ) -> None:
        import os

        self.provider_id = provider_id
        self._endpoint = endpoint
        self._timeout = timeout
        self._api_key = os.environ.get(api_key_env, "")

    def extract(self, request: ExtractionRequest) -> str:
        import base64

        import requests

        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        body: dict[str, Any] = {
            "model": request.model,
            "mode": request.mode,
            "document_name": request.document_name,
        }
        if request.mode == "prompt":
            body["prompt"] = request.prompt
        else:
            body["schema"] = request.schema_text
        if request.pdf_bytes is not None:
            body["pdf_base64"] = base64.b64encode(request.pdf_bytes).decode("ascii")
        try:
            response = requests.post(self._endpoint, json=body, headers=headers, timeout=self._timeout)
        except requests.RequestException as exc:
            raise TransportFailure(f"provider request failed: {exc}") from exc
        if response.status_code == 422:
            raise ProviderRejected(response.text)
        if response.status_code >= 400:
            raise TransportFailure(f"provider returned HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError:
            return response.text
        if isinstance(payload, dict) and "output" in payload:
            return str(payload["output"])
        return response.text


def run_extraction(
    provider: Provider,
    mode: str,
    pdf_path: str | Path,
    schema_text: str,
    model: str,
    document_name: str | None = None,
) -> ExtractionOutcome:
    """One attempt: build the request, call the provider, record the
    outcome.  Provider rejections and transport failures become part of
    the record rather than propagating."""
    if mode not in MODES:
        raise EmptyInput(f"unknown extraction mode {mode!r}")
    pdf_path = Path(pdf_path)
    name = document_name or pdf_path.stem
    prompt = build_prompt(schema_text, name) if mode == "prompt" else None
    pdf_bytes = pdf_path.read_bytes() if pdf_path.exists() else None
    request = ExtractionRequest(
        mode=mode,
        model=model,
        document_name=name,
        schema_text=schema_text,
        prompt=prompt,
        pdf_bytes=pdf_bytes,
    )
    started = time.monotonic()
    rejection = None
    raw_output = ""
    try:
        raw_output = provider.extract(request)
    except (ProviderRejected, TransportFailure) as exc:
        rejection = str(exc)
    duration = time.monotonic() - started
    source = extract_candidate(raw_output)[1] if raw_output else "full"
    return ExtractionOutcome(
        provider_id=provider.provider_id,
        model_id=model,
        mode=mode,
        document=name,
        raw_output=raw_output,
        rejection=rejection,
        candidate_source=source,
        duration_s=duration,
    )


# --- manifest-driven runs -------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    document: str
    schema: str
    gold: str
    provider: str
    model: str
    mode: str = "prompt"
    domain: str = ""

    @property
    def document_name(self) -> str:
        return Path(self.document).stem

    @property
    def effective_domain(self) -> str:
        return self.domain or Path(self.schema).stem


def load_manifest(path: str | Path) -> list[ManifestRow]:
    """Manifest: a JSON array of rows naming document, schema, gold,
    provider, model, and mode.  Unknown keys are rejected."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except ValueError as exc:
        raise XBError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise XBError("manifest must be a JSON array of rows")
    rows = []
    allowed = {"document", "schema", "gold", "provider", "model", "mode", "domain"}
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise XBError(f"manifest row {i} is not an object")
        unknown = set(entry) - allowed
        if unknown:
            raise XBError(f"manifest row {i} has unknown keys: {sorted(unknown)}")
        missing = {"document", "schema", "gold", "provider", "model"} - set(entry)
        if missing:
            raise XBError(f"manifest row {i} lacks required keys: {sorted(missing)}")
        mode = entry.get("mode", "prompt")
        if mode not in MODES:
            raise XBError(f"manifest row {i} has unknown mode {mode!r}")
        rows.append(ManifestRow(
            document=entry["document"],
            schema=entry["schema"],
            gold=entry["gold"],
            provider=entry["provider"],
            model=entry["model"],
            mode=mode,
            domain=entry.get("domain", ""),
        ))
    return rows


def outcome_filename(document_name: str, model: str, mode: str) -> str:
    safe_model = re.sub(r"[^A-Za-z0-9._-]+", "-", model)
    return f"{document_name}__{safe_model}__{mode}.json"


def run_manifest(
    rows: list[ManifestRow],
    out_dir: str | Path,
    providers: dict[str, Provider],
    parallelism: int = 1,
    mode_override: str | None = None,
    provider_filter: str | None = None,
) -> list[Path]:
    """Execute manifest rows and persist one outcome record per attempt.

    Records are append-only: an attempt whose record file already
    exists is skipped, so interrupted runs resume without rework.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    selected = [row for row in rows if provider_filter is None or row.provider == provider_filter]
    for row in selected:
        if row.provider not in providers:
            raise XBError(f"manifest names provider {row.provider!r} but no such provider is configured")

    def attempt(row: ManifestRow) -> Path:
        mode = mode_override or row.mode
        path = out_dir / outcome_filename(row.document_name, row.model, mode)
        if path.exists():
            return path
        schema_text = Path(row.schema).read_text(encoding="utf-8")
        outcome = run_extraction(
            providers[row.provider], mode, row.document, schema_text, row.model,
            document_name=row.document_name,
        )
        record = outcome.to_dict()
        record["schema_path"] = row.schema
        record["gold_path"] = row.gold
        record["domain"] = row.effective_domain
        path.write_text(
            json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return path

    if parallelism > 1 and len(selected) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(attempt, selected))
    return [attempt(row) for row in selected]
