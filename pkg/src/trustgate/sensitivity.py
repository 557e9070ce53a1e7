"""Sensitive-entity detection and document sensitivity classification.

Rule-based recognizers (regex pattern + optional checksum validator +
context-word confidence boosting) locate typed entities in text. Detected
spans roll up to a document-level sensitivity classification on the
four-level scheme public < internal < confidential < secret.

Offsets are Unicode code-point indices (Python string indices), half-open
[start, end), so downstream text transforms are encoding-safe.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum

CONTEXT_BOOST = 0.2
DEFAULT_CONTEXT_WINDOW = 30
DEFAULT_COUNTING_THRESHOLD = 0.5


class SensitivityLevel(IntEnum):
    """Document sensitivity classification, ordered least to most sensitive."""

    PUBLIC = 0
    INTERNAL = 1
    CONFIDENTIAL = 2
    SECRET = 3

    @classmethod
    def from_name(cls, name: str) -> "SensitivityLevel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown sensitivity level {name!r}") from None


@dataclass(frozen=True)
class EntitySpan:
    """A detected sensitive range: half-open [start, end) in code points."""

    start: int
    end: int
    entity_type: str
    confidence: float
    recognizer_id: str

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span offsets [{self.start}, {self.end})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and self.end > start


def luhn_valid(digits: str) -> bool:
    """True iff `digits` (spaces/hyphens ignored) is a 12-19 digit string
    with Luhn checksum 0. Any other content fails, never raises."""
    cleaned = digits.replace(" ", "").replace("-", "")
    if not cleaned.isascii() or not cleaned.isdigit():
        return False
    if not 12 <= len(cleaned) <= 19:
        return False
    total = 0
    for i, ch in enumerate(reversed(cleaned)):
        d = ord(ch) - 48
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


_VALIDATORS = {
    "none": None,
    "luhn": luhn_valid,
}


@dataclass(frozen=True)
class Recognizer:
    """One pattern-based entity recognizer.

    `validator` names an optional checksum check applied to the raw match
    ("luhn" or "none"). `numeric` marks the entity type as eligible for the
    noise disclosure action (its matched text parses as a number).
    """

    id: str
    entity_type: str
    pattern: str
    base_confidence: float
    validator: str = "none"
    context_words: tuple[str, ...] = ()
    numeric: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.base_confidence <= 1.0:
            raise ValueError(
                f"recognizer {self.id!r}: base_confidence {self.base_confidence} "
                "outside (0, 1]"
            )
        if self.validator not in _VALIDATORS:
            raise ValueError(
                f"recognizer {self.id!r}: unknown validator {self.validator!r}"
            )
        try:
            compiled = re.compile(self.pattern)
        except re.error as exc:
            raise ValueError(
                f"recognizer {self.id!r}: pattern does not compile: {exc}"
            ) from exc
        object.__setattr__(self, "_compiled", compiled)
        object.__setattr__(self, "_validate", _VALIDATORS[self.validator])

    @property
    def compiled(self) -> re.Pattern[str]:
        return self._compiled  # type: ignore[attr-defined]


@dataclass(frozen=True)
class SensitivityReport:
    """Merged spans plus the document-level classification.

    `counts` groups spans at or above the counting threshold by entity type;
    `level` is the max configured level among those counted spans (PUBLIC
    when none qualify).
    """

    spans: tuple[EntitySpan, ...]
    level: SensitivityLevel
    counts: dict[str, int] = field(default_factory=dict)


def context_adjust(
    span: EntitySpan,
    text: str,
    context_words: tuple[str, ...] | list[str],
    window: int = DEFAULT_CONTEXT_WINDOW,
) -> EntitySpan:
    """Boost confidence by CONTEXT_BOOST (capped at 1.0) when any context
    word occurs case-insensitively within `window` chars before the span."""
    if not context_words:
        return span
    preceding = text[max(0, span.start - window):span.start].lower()
    if any(word.lower() in preceding for word in context_words):
        boosted = min(1.0, span.confidence + CONTEXT_BOOST)
        if boosted != span.confidence:
            return EntitySpan(
                span.start, span.end, span.entity_type, boosted, span.recognizer_id
            )
    return span


def merge_spans(spans: list[EntitySpan]) -> list[EntitySpan]:
    """Merge overlapping or touching spans of the same entity type into one
    covering span carrying the max confidence. Spans of different types are
    kept even when they overlap. Output is sorted by (start, end, type)."""
    by_type: dict[str, list[EntitySpan]] = {}
    for span in spans:
        by_type.setdefault(span.entity_type, []).append(span)

    merged: list[EntitySpan] = []
    for entity_type, group in by_type.items():
        group.sort(key=lambda s: (s.start, s.end, -s.confidence, s.recognizer_id))
        current = group[0]
        for span in group[1:]:
            if span.start <= current.end:  # overlap or touch
                best = current if current.confidence >= span.confidence else span
                current = EntitySpan(
                    current.start,
                    max(current.end, span.end),
                    entity_type,
                    best.confidence,
                    best.recognizer_id,
                )
            else:
                merged.append(current)
                current = span
        merged.append(current)

    merged.sort(key=lambda s: (s.start, s.end, s.entity_type, s.recognizer_id))
    return merged


def classify_document(
    spans: list[EntitySpan] | tuple[EntitySpan, ...],
    type_level_map: dict[str, SensitivityLevel],
    counting_threshold: float = DEFAULT_COUNTING_THRESHOLD,
) -> SensitivityReport:
    """Classify a document from its spans.

    Spans below the counting threshold neither count nor raise the level.
    Every entity type must be present in `type_level_map` (validated where
    the recognizer set is loaded, not here).
    """
    counted = [s for s in spans if s.confidence >= counting_threshold]
    counts = dict(Counter(s.entity_type for s in counted))
    level = SensitivityLevel.PUBLIC
    for span in counted:
        level = max(level, type_level_map[span.entity_type])
    ordered = tuple(sorted(spans, key=lambda s: (s.start, s.end, s.entity_type)))
    return SensitivityReport(spans=ordered, level=level, counts=counts)


def detect(text: str, recognizers: list[Recognizer] | tuple[Recognizer, ...],
           context_window: int = DEFAULT_CONTEXT_WINDOW) -> list[EntitySpan]:
    """Run every recognizer over `text` and return validated, context-adjusted
    spans sorted by (start, end). Matches failing a validator are dropped."""
    spans: list[EntitySpan] = []
    for rec in recognizers:
        validate = rec._validate  # type: ignore[attr-defined]
        for match in rec.compiled.finditer(text):
            if match.start() == match.end():
                continue
            if validate is not None and not validate(match.group()):
                continue
            span = EntitySpan(
                match.start(), match.end(), rec.entity_type,
                rec.base_confidence, rec.id,
            )
            spans.append(context_adjust(span, text, rec.context_words, context_window))
    spans.sort(key=lambda s: (s.start, s.end, s.entity_type, s.recognizer_id))
    return spans


class SensitivityEngine:
    """Immutable detection pipeline: recognizers compiled once at load,
    detection pure thereafter and safe for unsynchronized concurrent use."""

    def __init__(
        self,
        recognizers: list[Recognizer] | tuple[Recognizer, ...],
        type_levels: dict[str, SensitivityLevel],
        counting_threshold: float = DEFAULT_COUNTING_THRESHOLD,
        context_window: int = DEFAULT_CONTEXT_WINDOW,
    ) -> None:
        for rec in recognizers:
            if rec.entity_type not in type_levels:
                raise ValueError(
                    f"recognizer {rec.id!r}: entity type {rec.entity_type!r} "
                    "missing from the type-level map"
                )
        if not 0.0 <= counting_threshold <= 1.0:
            raise ValueError(f"counting threshold {counting_threshold} outside [0, 1]")
        self.recognizers = tuple(recognizers)
        self.type_levels = dict(type_levels)
        self.counting_threshold = counting_threshold
        self.context_window = context_window
        self.numeric_types = frozenset(r.entity_type for r in recognizers if r.numeric)

    def detect(self, text: str) -> list[EntitySpan]:
        return detect(text, self.recognizers, self.context_window)

    def analyze(self, text: str) -> SensitivityReport:
        """detect -> merge -> classify."""
        merged = merge_spans(self.detect(text))
        return classify_document(merged, self.type_levels, self.counting_threshold)


# Shipped defaults: eight entity types. Redaction placeholders
# (<REDACTED:TYPE>) intentionally match none of these patterns.
DEFAULT_RECOGNIZERS: tuple[Recognizer, ...] = (
    Recognizer(
        id="us-ssn",
        entity_type="US_SSN",
        pattern=r"\b\d{3}-\d{2}-\d{4}\b",
        base_confidence=0.85,
        context_words=("ssn", "social security"),
    ),
    Recognizer(
        id="credit-card",
        entity_type="CREDIT_CARD",
        pattern=r"\b(?:\d[ -]?){12,18}\d\b",
        base_confidence=0.8,
        validator="luhn",
        context_words=("card", "credit", "visa", "mastercard"),
    ),
    Recognizer(
        id="email",
        entity_type="EMAIL",
        pattern=r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b",
        base_confidence=0.9,
        context_words=("email", "e-mail", "contact"),
    ),
    Recognizer(
        id="phone",
        entity_type="PHONE",
        pattern=r"(?<!\w)(?:\+1[-.\s])?\(?\d{3}\)?[-.\s]\d{3}[-.\s]\d{4}\b",
        base_confidence=0.7,
        context_words=("phone", "tel", "call", "fax"),
    ),
    Recognizer(
        id="iban",
        entity_type="IBAN",
        pattern=r"\b[A-Z]{2}\d{2}[A-Z0-9]{11,30}\b",
        base_confidence=0.75,
        context_words=("iban", "account"),
    ),
    Recognizer(
        id="person-name",
        entity_type="PERSON_NAME",
        pattern=r"\b(?:Dr|Mr|Mrs|Ms|Prof)\.?\s+[A-Z][a-z]+(?:\s+[A-Z][a-z]+)?",
        base_confidence=0.6,
        context_words=("patient", "name", "client"),
    ),
    Recognizer(
        id="medical-id",
        entity_type="MEDICAL_ID",
        pattern=r"\bMRN[-: ]?\d{6,10}\b",
        base_confidence=0.8,
        context_words=("medical", "record", "patient"),
    ),
    Recognizer(
        id="amount",
        entity_type="AMOUNT",
        pattern=r"\$\s?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d{2})?\b",
        base_confidence=0.6,
        context_words=("amount", "total", "paid", "balance"),
        numeric=True,
    ),
)

# US_SSN maps to confidential so that the shipped disclosure table redacts
# (rather than denies) SSN-bearing output for mid-trust principals.
DEFAULT_TYPE_LEVELS: dict[str, SensitivityLevel] = {
    "US_SSN": SensitivityLevel.CONFIDENTIAL,
    "CREDIT_CARD": SensitivityLevel.SECRET,
    "IBAN": SensitivityLevel.CONFIDENTIAL,
    "MEDICAL_ID": SensitivityLevel.CONFIDENTIAL,
    "EMAIL": SensitivityLevel.INTERNAL,
    "PHONE": SensitivityLevel.INTERNAL,
    "PERSON_NAME": SensitivityLevel.INTERNAL,
    "AMOUNT": SensitivityLevel.INTERNAL,
}


def default_engine() -> SensitivityEngine:
    """Engine built from the shipped recognizer set and type-level map."""
    return SensitivityEngine(DEFAULT_RECOGNIZERS, DEFAULT_TYPE_LEVELS)
