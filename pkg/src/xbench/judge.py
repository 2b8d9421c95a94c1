"""Gateway to the LLM judge, with a deterministic in-process mock.

All judge traffic flows through one JudgeGateway: requests are
canonical JSON (sorted keys), responses must follow a strict grammar (a
single JSON object carrying "score" or "mapping" plus a "rationale"),
verdicts are memoized per run, and every exchange lands in an audit
log.  Responses that fail the grammar are re-asked up to the retry
budget before JudgeProtocol is raised.

The mock judge makes the whole pipeline hermetic.  Its verdict rules
are a stable, documented contract:

- equivalence: 1.0 when the casefolded strings are equal, or when both
  split into the same number of whitespace tokens and each shorter
  token is a prefix of its casefolded counterpart ("ABC Corp" vs
  "ABC Corporation"); otherwise 0.0.
- alignment: exactly the deterministic similarity matcher.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable

from .config import JudgeConfig
from .errors import JudgeProtocol, RateLimited, TransportFailure

EQUIVALENCE_GUIDE = (
    "You are scoring whether two extracted values are semantically equivalent. "
    "Score 1.0 for clear equivalence, 0.0 for clear disagreement, and values "
    "between for partial matches. Respond with a single JSON object: "
    '{"score": <number between 0 and 1>, "rationale": "<short explanation>"}. '
    "No other text."
)

ALIGNMENT_GUIDE = (
    "You are matching predicted array items to gold array items. Each gold item "
    "may match at most one predicted item and vice versa. Respond with a single "
    'JSON object: {"mapping": {"<gold index>": <predicted index>, ...}, '
    '"rationale": "<short explanation>"}. Leave unmatched items out. No other text.'
)


@dataclass(frozen=True)
class JudgeRequest:
    """One unit of judge work.  kind is "equivalence" or "alignment"."""

    kind: str
    payload: dict[str, Any]
    instructions: str | None = None

    def canonical(self) -> str:
        """Canonical JSON body; byte-stable for identical requests."""
        body = {
            "kind": self.kind,
            "payload": self.payload,
            "instructions": self.instructions,
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def prompt(self) -> str:
        guide = EQUIVALENCE_GUIDE if self.kind == "equivalence" else ALIGNMENT_GUIDE
        parts = [guide]
        if self.instructions:
            parts.append(f"Additional instructions: {self.instructions}")
        parts.append(json.dumps(self.payload, sort_keys=True, ensure_ascii=False))
        return "\n\n".join(parts)


@dataclass(frozen=True)
class JudgeVerdict:
    """Parsed judge response: score for equivalence, mapping for alignment."""

    score: float | None = None
    mapping: dict[int, int] | None = None
    rationale: str = ""

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"rationale": self.rationale}
        if self.score is not None:
            out["score"] = self.score
        if self.mapping is not None:
            out["mapping"] = {str(k): v for k, v in sorted(self.mapping.items())}
        return out


def extract_json_object(text: str) -> dict[str, Any]:
    """Pull the outermost JSON object out of possibly chatty text."""
    try:
        value = json.loads(text)
    except ValueError:
        start = text.find("{")
        end = text.rfind("}")
        if start == -1 or end <= start:
            raise JudgeProtocol("response contains no JSON object") from None
        try:
            value = json.loads(text[start : end + 1])
        except ValueError as exc:
            raise JudgeProtocol(f"response JSON does not parse: {exc}") from None
    if not isinstance(value, dict):
        raise JudgeProtocol("response must be a single JSON object")
    return value


def parse_verdict(text: str, kind: str) -> JudgeVerdict:
    """Validate a raw response against the grammar for its request kind."""
    obj = extract_json_object(text)
    rationale = obj.get("rationale", "")
    if not isinstance(rationale, str):
        raise JudgeProtocol("rationale must be a string")
    if kind == "equivalence":
        score = obj.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise JudgeProtocol("equivalence verdict requires a numeric score")
        if not 0.0 <= score <= 1.0:
            raise JudgeProtocol(f"score {score!r} is outside [0, 1]")
        return JudgeVerdict(score=float(score), rationale=rationale)
    if kind == "alignment":
        mapping_raw = obj.get("mapping")
        if not isinstance(mapping_raw, dict):
            raise JudgeProtocol("alignment verdict requires a mapping object")
        mapping: dict[int, int] = {}
        for key, value in mapping_raw.items():
            try:
                gold_index = int(key)
            except (TypeError, ValueError):
                raise JudgeProtocol(f"mapping key {key!r} is not an integer") from None
            if not isinstance(value, int) or isinstance(value, bool):
                raise JudgeProtocol(f"mapping value {value!r} is not an integer")
            mapping[gold_index] = value
        return JudgeVerdict(mapping=mapping, rationale=rationale)
    raise JudgeProtocol(f"unknown request kind {kind!r}")


# --- transports ---------------------------------------------------------------

def mock_transport(request: JudgeRequest) -> str:
    """Deterministic in-process judge; see the module docstring for rules."""
    if request.kind == "equivalence":
        gold = request.payload.get("gold", "")
        predicted = request.payload.get("predicted", "")
        score = 1.0 if _mock_equivalent(str(gold), str(predicted)) else 0.0
        verdict = {"score": score, "rationale": "mock verdict (casefold/token-prefix rule)"}
        return json.dumps(verdict)
    if request.kind == "alignment":
        from .alignment import deterministic_match  # runtime import to avoid a cycle
        from .schema import parse_schema

        item_schema = parse_schema(json.dumps(request.payload["item_schema"]))
        mapping = deterministic_match(
            item_schema,
            request.payload["gold_items"],
            request.payload["pred_items"],
        )
        verdict = {
            "mapping": {str(k): v for k, v in sorted(mapping.items())},
            "rationale": "mock verdict (deterministic similarity alignment)",
        }
        return json.dumps(verdict)
    raise JudgeProtocol(f"unknown request kind {request.kind!r}")


def _mock_equivalent(gold: str, predicted: str) -> bool:
    a, b = gold.casefold(), predicted.casefold()
    if a == b:
        return True
    ta, tb = a.split(), b.split()
    if len(ta) != len(tb) or not ta:
        return False
    for x, y in zip(ta, tb):
        shorter, longer = (x, y) if len(x) <= len(y) else (y, x)
        if not longer.startswith(shorter):
            return False
    return True


class HttpTransport:
    """Minimal chat-completions client for a real judge endpoint."""

    def __init__(self, config: JudgeConfig) -> None:
        self._config = config

    def __call__(self, request: JudgeRequest) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self._config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self._config.model,
            "messages": [{"role": "user", "content": request.prompt()}],
        }
        try:
            response = requests.post(
                self._config.endpoint,
                json=body,
                headers=headers,
                timeout=self._config.timeout,
            )
        except requests.RequestException as exc:
            raise TransportFailure(f"judge request failed: {exc}") from exc
        if response.status_code == 429:
            raise _Backoff()
        if response.status_code >= 400:
            raise TransportFailure(f"judge endpoint returned HTTP {response.status_code}")
        try:
            body = response.json()
        except ValueError:
            return response.text
        if isinstance(body, dict) and "choices" in body:
            try:
                return body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise JudgeProtocol(f"unexpected completion shape: {exc}") from exc
        return response.text


class _Backoff(Exception):
    """Internal marker: the endpoint asked us to slow down."""


def judge_call(
    request: JudgeRequest,
    config: JudgeConfig | None = None,
    transport: Callable[[JudgeRequest], str] | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeVerdict:
    """One judged request with grammar retries and rate-limit backoff.

    Grammar failures are re-asked up to config.max_retries times, then
    JudgeProtocol propagates.  HTTP 429 backs off exponentially within
    the same budget, then RateLimited propagates.  Transport failures
    propagate immediately.
    """
    config = config or JudgeConfig()
    if transport is None:
        transport = mock_transport if config.kind == "mock" else HttpTransport(config)
    last_protocol: JudgeProtocol | None = None
    for attempt in range(config.max_retries + 1):
        try:
            text = transport(request)
        except _Backoff:
            if attempt == config.max_retries:
                raise RateLimited("judge rate limit persisted past the backoff budget") from None
            sleep(config.backoff_base * (2 ** attempt))
            continue
        try:
            return parse_verdict(text, request.kind)
        except JudgeProtocol as exc:
            last_protocol = exc
    assert last_protocol is not None
    raise last_protocol


class JudgeGateway:
    """Single point of contact with the judge.

    Verdicts are memoized on the canonical request bytes, concurrent
    calls are bounded by the configured in-flight limit, and every
    exchange (including cache hits) is appended to the audit log.
    """

    def __init__(
        self,
        config: JudgeConfig | None = None,
        transport: Callable[[JudgeRequest], str] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config or JudgeConfig()
        self._transport = transport
        self._sleep = sleep
        self._cache: dict[str, JudgeVerdict] = {}
        self._lock = threading.Lock()
        self._slots = threading.Semaphore(self.config.in_flight)
        self.audit_log: list[dict[str, Any]] = []

    def call(self, request: JudgeRequest, refresh: bool = False) -> JudgeVerdict:
        key = request.canonical()
        if not refresh:
            with self._lock:
                if key in self._cache:
                    verdict = self._cache[key]
                    self.audit_log.append(self._entry(request, verdict, cached=True))
                    return verdict
        try:
            with self._slots:
                verdict = judge_call(request, self.config, self._transport, self._sleep)
        except Exception as exc:
            with self._lock:
                self.audit_log.append(
                    {"kind": request.kind, "request": key, "cached": False,
                     "ok": False, "error": f"{type(exc).__name__}: {exc}"}
                )
            raise
        with self._lock:
            self._cache[key] = verdict
            self.audit_log.append(self._entry(request, verdict, cached=False))
        return verdict

    def _entry(self, request: JudgeRequest, verdict: JudgeVerdict, cached: bool) -> dict[str, Any]:
        return {
            "kind": request.kind,
            "request": request.canonical(),
            "cached": cached,
            "ok": True,
            "verdict": verdict.to_dict(),
        }

    # Convenience wrappers used by the metric and alignment layers.

    def equivalence(self, gold: str, predicted: str, instructions: str | None = None) -> tuple[float, str]:
        request = JudgeRequest("equivalence", {"gold": gold, "predicted": predicted}, instructions)
        verdict = self.call(request)
        assert verdict.score is not None
        return verdict.score, verdict.rationale

    def alignment(
        self,
        item_schema_raw: dict[str, Any],
        gold_items: list[Any],
        pred_items: list[Any],
        criteria: list[dict[str, Any]],
        instructions: str | None = None,
        refresh: bool = False,
    ) -> tuple[dict[int, int], str]:
        request = JudgeRequest(
            "alignment",
            {
                "item_schema": item_schema_raw,
                "gold_items": gold_items,
                "pred_items": pred_items,
                "criteria": criteria,
            },
            instructions,
        )
        verdict = self.call(request, refresh=refresh)
        assert verdict.mapping is not None
        return dict(verdict.mapping), verdict.rationale


def make_judge(config: JudgeConfig | None = None) -> JudgeGateway:
    """Gateway for the configured judge kind (mock by default)."""
    return JudgeGateway(config)
