"""Exception taxonomy for the evaluation engine.

Every error raised by this package derives from XBError so callers can
catch broadly.  The CLI maps subfamilies to exit codes: usage problems
exit 1, data problems (bad schemas, bad gold, mismatched manifests)
exit 2, and external-service failures (judge or provider transport)
exit 3.
"""

from __future__ import annotations


class XBError(Exception):
    """Base class for all errors raised by this package."""


# --- schema parsing ---------------------------------------------------------

class MalformedJson(XBError):
    """Input text is not parseable JSON."""


class UnsupportedConstruct(XBError):
    """Schema uses a keyword or shape outside the supported subset."""

    def __init__(self, message: str, pointer: str = "#") -> None:
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


class CyclicReference(XBError):
    """A $ref chain revisits a definition already on the resolution stack."""


class BadConfig(XBError):
    """An evaluation_config annotation or run config value is invalid."""


# --- metrics and judge ------------------------------------------------------

class UnknownMetric(XBError):
    """A metric id has no registered implementation."""


class NonFinite(XBError):
    """A numeric comparison received NaN or an infinity."""


class JudgeUnavailable(XBError):
    """A judge-backed metric was invoked without a judge handle."""


class JudgeProtocol(XBError):
    """The judge response did not follow the response grammar."""


class MatcherProtocol(XBError):
    """An array matcher returned a non-injective or out-of-range mapping."""


class TransportFailure(XBError):
    """Network or authentication failure talking to an external service."""


class RateLimited(TransportFailure):
    """The external service kept refusing after the backoff budget."""


class ProviderRejected(XBError):
    """The extraction provider refused the request (carries its message)."""


# --- evaluation and reporting ----------------------------------------------

class GoldInvalid(XBError):
    """A gold instance does not conform to its schema."""


class ManifestMismatch(XBError):
    """Run records and the manifest disagree about what was attempted."""


class UnknownFormat(XBError):
    """An unrecognized report output format was requested."""


class ZeroOutput(XBError):
    """A compression ratio was requested against a zero-token output."""


class UnknownTokenizer(XBError):
    """A tokenizer name has no registered implementation."""


class EmptyInput(XBError):
    """A required text input (schema, document name) was empty."""
