"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RefAuditError(Exception):
    """Base class for all errors raised by refaudit."""


class MalformedDoi(RefAuditError, ValueError):
    pass


class UnrecognizedReportFormat(RefAuditError):
    pass


class NotRegistered(RefAuditError):
    def __init__(self, doi: str):
        super().__init__(f"DOI not registered: {doi}")
        self.doi = doi


class TransportError(RefAuditError):
    """Network failure that survived the retry budget."""


class ParseError(RefAuditError):
    """Payload could not be parsed; ``body`` keeps the raw bytes for forensics."""

    def __init__(self, message: str, body: bytes | None = None, path: str | None = None):
        super().__init__(message)
        self.body = body
        self.path = path


class CacheMiss(RefAuditError):
    pass


class ExtractionFailed(RefAuditError):
    pass


class HeaderMismatch(RefAuditError):
    pass


class RowParseError(RefAuditError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EncodingError(RefAuditError):
    def __init__(self, offset: int, message: str = "invalid UTF-8"):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class SourceUnavailable(RefAuditError):
    pass


class MixedComparators(RefAuditError, ValueError):
    pass


class DivisionByZeroCorpus(RefAuditError, ZeroDivisionError):
    pass
