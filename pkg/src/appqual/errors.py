"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class AppQualError(Exception):
    """Base class for all errors raised by appqual."""


# gateway

class GatewayError(AppQualError):
    pass


class TimeoutExceeded(GatewayError):
    def __init__(self, elapsed_s: float, timeout_s: float) -> None:
        super().__init__(f"request took {elapsed_s:.3f}s, timeout is {timeout_s:.3f}s")
        self.elapsed_s = elapsed_s
        self.timeout_s = timeout_s


class ProviderRejected(GatewayError):
    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class RetriesExhausted(ProviderRejected):
    def __init__(self, attempts: int, last_error: Exception | None) -> None:
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class TransportError(GatewayError):
    """Transient failure before any response body arrived; safe to retry."""


class EmptyInput(GatewayError, ValueError):
    pass


class DimensionMismatch(GatewayError, ValueError):
    pass


class ZeroVector(GatewayError, ValueError):
    pass


# taxonomy

class TaxonomyError(AppQualError):
    pass


class ParseError(AppQualError, ValueError):
    pass


class OrphanNode(TaxonomyError):
    pass


class DuplicateKeyword(TaxonomyError):
    pass


class EmptyLabel(TaxonomyError, ValueError):
    pass


# generation (labeler / synthesis / judge)

class GenerationFailed(AppQualError):
    pass


class LengthRuleUnsatisfiable(GenerationFailed):
    pass


class ParseFailure(AppQualError):
    def __init__(self, message: str, attempts: int = 0, raw: str = "") -> None:
        super().__init__(message)
        self.attempts = attempts
        self.raw = raw


class SuiteIncomplete(AppQualError):
    """Raised when some metric could not collect enough accepted tasks.

    ``suite`` holds whatever was accepted so callers can proceed with a
    flagged partial suite.
    """

    def __init__(self, shortfall: dict[str, int], suite=None) -> None:
        detail = ", ".join(f"{k}: {v}" for k, v in shortfall.items())
        super().__init__(f"suite incomplete ({detail})")
        self.shortfall = shortfall
        self.suite = suite


# screening

class NegativeAge(AppQualError, ValueError):
    pass


class InvalidBeta(AppQualError, ValueError):
    pass


class MissingCategoryThresholds(AppQualError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


# judge / scoring

class AppUnreachable(AppQualError):
    pass


class ZeroElapsed(AppQualError, ValueError):
    pass


class InvalidWeights(AppQualError, ValueError):
    pass


class EmptyInputs(AppQualError, ValueError):
    pass


# analytics

class MismatchedItems(AppQualError, ValueError):
    pass


class DegenerateSeries(AppQualError, ValueError):
    pass


class InsufficientN(AppQualError, ValueError):
    pass


class PerfectCorrelation(AppQualError, ValueError):
    pass


class InvalidCounts(AppQualError, ValueError):
    pass


# catalog / run persistence

class MissingField(AppQualError, ValueError):
    def __init__(self, field: str, row: int | None = None) -> None:
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"missing required field {field!r}{where}")
        self.field = field
        self.row = row


class DuplicateId(AppQualError, ValueError):
    pass


class StorageFailure(AppQualError):
    pass


class IncompleteRun(AppQualError):
    pass
