from __future__ import annotations

import random

import pytest

from oracles import luhn_oracle
from trustgate.sensitivity import (
    DEFAULT_RECOGNIZERS,
    DEFAULT_TYPE_LEVELS,
    EntitySpan,
    Recognizer,
    SensitivityEngine,
    SensitivityLevel,
    classify_document,
    context_adjust,
    default_engine,
    detect,
    luhn_valid,
    merge_spans,
)

SSN_RECOGNIZER = Recognizer(
    id="ssn-test",
    entity_type="US_SSN",
    pattern=r"\d{3}-\d{2}-\d{4}",
    base_confidence=0.6,
)


class TestLuhn:
    def test_known_valid_card(self):
        assert luhn_valid("4111111111111111") is True

    def test_known_invalid_card(self):
        assert luhn_valid("4111111111111112") is False

    def test_empty_string(self):
        assert luhn_valid("") is False

    def test_separators_stripped(self):
        assert luhn_valid("4111 1111 1111 1111") is True
        assert luhn_valid("4111-1111-1111-1111") is True

    def test_non_digits_rejected(self):
        assert luhn_valid("4111x11111111111") is False
        assert luhn_valid("٤111111111111111") is False  # non-ASCII digits

    def test_length_limits(self):
        assert luhn_valid("1" * 11) is False  # too short even if checksum ok
        assert luhn_valid("1" * 20) is False

    def test_agrees_with_independent_oracle(self):
        rng = random.Random(123)
        for _ in range(2000):
            length = rng.randint(0, 24)
            digits = "".join(rng.choice("0123456789") for _ in range(length))
            assert luhn_valid(digits) == luhn_oracle(digits), digits


class TestDetect:
    def test_ssn_offsets(self):
        text = "SSN: 123-45-6789"
        spans = detect(text, [SSN_RECOGNIZER])
        assert len(spans) == 1
        span = spans[0]
        assert (span.start, span.end) == (5, 16)
        assert span.entity_type == "US_SSN"
        assert text[span.start:span.end] == "123-45-6789"

    def test_empty_text(self):
        assert detect("", list(DEFAULT_RECOGNIZERS)) == []

    def test_luhn_validator_drops_bad_checksum(self):
        spans = detect("card 4111111111111112", list(DEFAULT_RECOGNIZERS))
        assert [s for s in spans if s.entity_type == "CREDIT_CARD"] == []

    def test_luhn_validator_keeps_good_checksum(self):
        spans = detect("card 4111111111111111", list(DEFAULT_RECOGNIZERS))
        cards = [s for s in spans if s.entity_type == "CREDIT_CARD"]
        assert len(cards) == 1
        # context word "card" precedes the span
        assert cards[0].confidence == pytest.approx(1.0)

    def test_spans_sorted_and_substring_matches(self):
        text = "Call 555-123-4567 or mail a@b.io. Card 4111 1111 1111 1111. SSN: 123-45-6789."
        spans = detect(text, list(DEFAULT_RECOGNIZERS))
        assert spans == sorted(spans, key=lambda s: (s.start, s.end, s.entity_type))
        for span in spans:
            assert 0 <= span.start < span.end <= len(text)

    def test_offsets_are_codepoints_not_bytes(self):
        text = "émail → a@b.io fin"
        spans = detect(text, list(DEFAULT_RECOGNIZERS))
        emails = [s for s in spans if s.entity_type == "EMAIL"]
        assert len(emails) == 1
        assert text[emails[0].start:emails[0].end] == "a@b.io"

    def test_placeholders_match_no_shipped_recognizer(self):
        for entity_type in DEFAULT_TYPE_LEVELS:
            text = f"before <REDACTED:{entity_type}> after"
            assert detect(text, list(DEFAULT_RECOGNIZERS)) == []


class TestContextAdjust:
    def test_boost_applied(self):
        text = "ssn is 123-45-6789"
        span = EntitySpan(7, 18, "US_SSN", 0.6, "r")
        adjusted = context_adjust(span, text, ("ssn",), window=30)
        assert adjusted.confidence == pytest.approx(0.8)

    def test_boost_capped_at_one(self):
        text = "ssn is 123-45-6789"
        span = EntitySpan(7, 18, "US_SSN", 0.95, "r")
        adjusted = context_adjust(span, text, ("ssn",), window=30)
        assert adjusted.confidence == 1.0

    def test_no_context_words_is_identity(self):
        text = "ssn is 123-45-6789"
        span = EntitySpan(7, 18, "US_SSN", 0.6, "r")
        assert context_adjust(span, text, ()) is span

    def test_word_outside_window_ignored(self):
        text = "ssn" + " " * 40 + "123-45-6789"
        span = EntitySpan(43, 54, "US_SSN", 0.6, "r")
        adjusted = context_adjust(span, text, ("ssn",), window=30)
        assert adjusted.confidence == pytest.approx(0.6)

    def test_case_insensitive(self):
        text = "SSN: 123-45-6789"
        span = EntitySpan(5, 16, "US_SSN", 0.6, "r")
        adjusted = context_adjust(span, text, ("ssn",), window=30)
        assert adjusted.confidence == pytest.approx(0.8)


class TestMergeSpans:
    def test_same_type_overlap_merges(self):
        spans = [
            EntitySpan(10, 20, "A", 0.5, "r1"),
            EntitySpan(15, 25, "A", 0.7, "r2"),
        ]
        merged = merge_spans(spans)
        assert len(merged) == 1
        assert (merged[0].start, merged[0].end) == (10, 25)
        assert merged[0].confidence == 0.7

    def test_cross_type_overlap_kept(self):
        spans = [
            EntitySpan(10, 20, "A", 0.5, "r1"),
            EntitySpan(15, 25, "B", 0.7, "r2"),
        ]
        merged = merge_spans(spans)
        assert len(merged) == 2

    def test_disjoint_spans_normalized_order(self):
        spans = [
            EntitySpan(10, 15, "A", 0.5, "r1"),
            EntitySpan(0, 5, "A", 0.5, "r1"),
        ]
        merged = merge_spans(spans)
        assert [(s.start, s.end) for s in merged] == [(0, 5), (10, 15)]

    def test_touching_spans_merge(self):
        spans = [
            EntitySpan(0, 5, "A", 0.4, "r1"),
            EntitySpan(5, 9, "A", 0.6, "r2"),
        ]
        merged = merge_spans(spans)
        assert [(s.start, s.end) for s in merged] == [(0, 9)]
        assert merged[0].recognizer_id == "r2"

    def test_empty_input(self):
        assert merge_spans([]) == []


class TestClassify:
    TYPE_LEVELS = {
        "EMAIL": SensitivityLevel.INTERNAL,
        "US_SSN": SensitivityLevel.SECRET,
        "CREDIT_CARD": SensitivityLevel.SECRET,
    }

    def test_no_spans_is_public(self):
        report = classify_document([], self.TYPE_LEVELS)
        assert report.level is SensitivityLevel.PUBLIC
        assert report.counts == {}

    def test_max_over_levels(self):
        spans = [
            EntitySpan(0, 5, "EMAIL", 0.9, "r"),
            EntitySpan(10, 15, "US_SSN", 0.9, "r"),
        ]
        report = classify_document(spans, self.TYPE_LEVELS)
        assert report.level is SensitivityLevel.SECRET
        assert report.counts == {"EMAIL": 1, "US_SSN": 1}

    def test_below_threshold_not_counted(self):
        spans = [EntitySpan(0, 5, "CREDIT_CARD", 0.3, "r")]
        report = classify_document(spans, self.TYPE_LEVELS, counting_threshold=0.5)
        assert report.level is SensitivityLevel.PUBLIC
        assert report.counts == {}

    def test_adding_span_never_lowers_level(self):
        rng = random.Random(5)
        types = list(self.TYPE_LEVELS)
        for _ in range(200):
            spans = [
                EntitySpan(i * 10, i * 10 + 5, rng.choice(types), rng.random(), "r")
                for i in range(rng.randint(0, 6))
            ]
            base = classify_document(spans, self.TYPE_LEVELS)
            extra = spans + [
                EntitySpan(999, 1004, rng.choice(types), rng.random(), "r")
            ]
            grown = classify_document(extra, self.TYPE_LEVELS)
            assert grown.level >= base.level


class TestEngine:
    def test_analyze_pipeline(self):
        engine = default_engine()
        report = engine.analyze("Reach me at me@example.com. SSN: 123-45-6789.")
        assert report.level is SensitivityLevel.CONFIDENTIAL
        assert report.counts["EMAIL"] == 1
        assert report.counts["US_SSN"] == 1

    def test_determinism(self):
        engine = default_engine()
        text = "Card 4111 1111 1111 1111 and phone 555-123-4567."
        assert engine.analyze(text) == engine.analyze(text)

    def test_unmapped_type_rejected_at_load(self):
        with pytest.raises(ValueError, match="missing from the type-level map"):
            SensitivityEngine([SSN_RECOGNIZER], type_levels={})

    def test_bad_pattern_rejected_at_load(self):
        with pytest.raises(ValueError, match="does not compile"):
            Recognizer(id="bad", entity_type="X", pattern="(unclosed", base_confidence=0.5)

    def test_bad_confidence_rejected(self):
        with pytest.raises(ValueError):
            Recognizer(id="bad", entity_type="X", pattern="x", base_confidence=0.0)

    def test_unknown_validator_rejected(self):
        with pytest.raises(ValueError, match="unknown validator"):
            Recognizer(
                id="bad", entity_type="X", pattern="x",
                base_confidence=0.5, validator="mod97",
            )

    def test_numeric_types_exposed(self):
        engine = default_engine()
        assert "AMOUNT" in engine.numeric_types
        assert "US_SSN" not in engine.numeric_types
