"""Adaptive output control: the (trust tier x sensitivity level) action table
and the transforms it selects — placeholder redaction, extractive summary
filtering, Laplace noising of numeric values, pass-through, or denial.

Strictness order (most to least restrictive): deny > redact = noise >
summarize > pass. A valid table is non-increasing in strictness along each
level row as the tier grows, and non-decreasing down each tier column as the
level grows; validation rejects anything else at load time.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping

from .sensitivity import EntitySpan, SensitivityLevel, SensitivityReport
from .trust import TrustScore


class DisclosureAction(str, Enum):
    PASS = "pass"
    SUMMARIZE = "summarize"
    REDACT = "redact"
    NOISE = "noise"
    DENY = "deny"


STRICTNESS: dict[DisclosureAction, int] = {
    DisclosureAction.DENY: 4,
    DisclosureAction.REDACT: 3,
    DisclosureAction.NOISE: 3,
    DisclosureAction.SUMMARIZE: 1,
    DisclosureAction.PASS: 0,
}

#: Fixed denial text so clients can match it exactly.
DENIAL_NOTICE = "[request denied by disclosure policy]"

DEFAULT_PLACEHOLDER_TEMPLATE = "<REDACTED:{TYPE}>"
DEFAULT_EPSILON_PER_TIER: tuple[float, float, float, float] = (0.5, 1.0, 2.0, 4.0)
DEFAULT_SUMMARIZE_CAP = 5

_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


class MatrixValidationError(ValueError):
    """A disclosure matrix failed validation; `cell` names the offending
    cell as `<level>[<tier>]` when the failure is cell-specific."""

    def __init__(self, message: str, cell: str | None = None) -> None:
        super().__init__(message)
        self.cell = cell


@dataclass(frozen=True)
class DisclosureMatrix:
    """Action table indexed [level][tier], plus transform parameters.

    Epsilon grows with tier: higher trust gets less noise distortion.
    """

    table: Mapping[SensitivityLevel, tuple[DisclosureAction, ...]]
    placeholder_template: str = DEFAULT_PLACEHOLDER_TEMPLATE
    epsilon_per_tier: tuple[float, ...] = DEFAULT_EPSILON_PER_TIER
    summarize_cap: int = DEFAULT_SUMMARIZE_CAP

    def validate(self) -> None:
        """Check shape and both monotonicity axes; raises
        MatrixValidationError naming the offending cell."""
        for level in SensitivityLevel:
            row = self.table.get(level)
            if row is None or len(row) != 4:
                raise MatrixValidationError(
                    f"row {level.name.lower()!r} must list 4 tier actions",
                    cell=level.name.lower(),
                )
        for level in SensitivityLevel:
            row = self.table[level]
            for tier in range(1, 4):
                if STRICTNESS[row[tier]] > STRICTNESS[row[tier - 1]]:
                    raise MatrixValidationError(
                        f"cell {level.name.lower()}[{tier}] "
                        f"({row[tier].value}) is stricter than tier {tier - 1} "
                        f"({row[tier - 1].value})",
                        cell=f"{level.name.lower()}[{tier}]",
                    )
        for tier in range(4):
            for level in (SensitivityLevel.INTERNAL, SensitivityLevel.CONFIDENTIAL,
                          SensitivityLevel.SECRET):
                above = self.table[SensitivityLevel(level - 1)][tier]
                if STRICTNESS[self.table[level][tier]] < STRICTNESS[above]:
                    raise MatrixValidationError(
                        f"cell {level.name.lower()}[{tier}] "
                        f"({self.table[level][tier].value}) is laxer than level "
                        f"{SensitivityLevel(level - 1).name.lower()} ({above.value})",
                        cell=f"{level.name.lower()}[{tier}]",
                    )
        if len(self.epsilon_per_tier) != 4 or any(e <= 0 for e in self.epsilon_per_tier):
            raise MatrixValidationError("epsilon_per_tier must list 4 positive values")
        if self.summarize_cap < 1:
            raise MatrixValidationError("summarize cap must be >= 1")
        if "{TYPE}" not in self.placeholder_template:
            raise MatrixValidationError("placeholder template must contain '{TYPE}'")


DEFAULT_MATRIX = DisclosureMatrix(
    table={
        SensitivityLevel.PUBLIC: (
            DisclosureAction.PASS, DisclosureAction.PASS,
            DisclosureAction.PASS, DisclosureAction.PASS,
        ),
        SensitivityLevel.INTERNAL: (
            DisclosureAction.SUMMARIZE, DisclosureAction.PASS,
            DisclosureAction.PASS, DisclosureAction.PASS,
        ),
        SensitivityLevel.CONFIDENTIAL: (
            DisclosureAction.DENY, DisclosureAction.REDACT,
            DisclosureAction.PASS, DisclosureAction.PASS,
        ),
        SensitivityLevel.SECRET: (
            DisclosureAction.DENY, DisclosureAction.DENY,
            DisclosureAction.REDACT, DisclosureAction.PASS,
        ),
    },
)


def decide_action(
    matrix: DisclosureMatrix, tier: int, level: SensitivityLevel
) -> DisclosureAction:
    if tier not in (0, 1, 2, 3):
        raise ValueError(f"tier {tier} outside 0..3")
    return matrix.table[SensitivityLevel(level)][tier]


def redact(
    text: str,
    spans: Iterable[EntitySpan],
    template: str = DEFAULT_PLACEHOLDER_TEMPLATE,
) -> str:
    """Replace each span, right to left, with the template ({TYPE}
    substituted). Non-span text is preserved byte for byte. Spans must be
    non-overlapping (merge first); overlaps raise ValueError."""
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise ValueError(
                f"overlapping spans [{prev.start},{prev.end}) and "
                f"[{cur.start},{cur.end}): merge before redacting"
            )
    out = text
    for span in reversed(ordered):
        replacement = template.replace("{TYPE}", span.entity_type)
        out = out[: span.start] + replacement + out[span.end:]
    return out


def laplace_noise(
    value: float,
    sensitivity: float,
    epsilon: float,
    rng: random.Random,
) -> float:
    """Add Laplace(0, b) noise with b = sensitivity / epsilon, sampled by
    inverse CDF: u uniform on (-1/2, 1/2), X = -b * sgn(u) * ln(1 - 2|u|).
    u = 0 returns the value unchanged."""
    if sensitivity <= 0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    b = sensitivity / epsilon
    while True:
        u = rng.random() - 0.5
        if u > -0.5:  # excludes the measure-zero ln(0) endpoint
            break
    if u == 0.0:
        return value
    sign = 1.0 if u > 0 else -1.0
    return value - b * sign * math.log(1.0 - 2.0 * abs(u))


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Half-open [start, end) sentence ranges. A sentence ends at '.', '!'
    or '?' followed by whitespace or end of text; a trailing fragment with no
    terminator counts as a sentence."""
    ranges: list[tuple[int, int]] = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        end = match.end()
        ranges.append((start, end))
        start = end
    if start < len(text) and text[start:].strip():
        ranges.append((start, len(text)))
    return ranges


def extractive_filter_summary(
    text: str,
    spans: Iterable[EntitySpan],
    max_sentences: int = DEFAULT_SUMMARIZE_CAP,
) -> str:
    """Keep, in order, up to `max_sentences` sentences containing no span.
    When every sentence is sensitive, returns the fixed withheld notice with
    the span count."""
    span_list = list(spans)
    kept: list[str] = []
    for start, end in split_sentences(text):
        if any(span.overlaps(start, end) for span in span_list):
            continue
        sentence = text[start:end].strip()
        if sentence:
            kept.append(sentence)
        if len(kept) >= max_sentences:
            break
    if not kept:
        return f"[content withheld: {len(span_list)} sensitive passages]"
    return " ".join(kept)


@dataclass(frozen=True)
class ControlledOutput:
    """The transformed response plus what was done to it."""

    text: str
    action_set: tuple[str, ...]
    removed_span_count: int
    epsilon_spent: float | None
    level: SensitivityLevel
    tier: int


_NUMERIC_STRIP = re.compile(r"[$,\s]")


def _parse_numeric(text: str) -> float | None:
    try:
        return float(_NUMERIC_STRIP.sub("", text))
    except ValueError:
        return None


def transform(
    text: str,
    report: SensitivityReport,
    trust: TrustScore,
    matrix: DisclosureMatrix,
    *,
    type_levels: Mapping[str, SensitivityLevel],
    numeric_types: frozenset[str] = frozenset(),
    rng: random.Random | None = None,
    abstractive_summarizer: Callable[[str], str] | None = None,
) -> ControlledOutput:
    """Apply the matrix-selected action for (trust.tier, report.level).

    pass: text unchanged. deny: the fixed denial notice. summarize: sentences
    containing spans are dropped. redact/noise: every span whose type level
    is internal or above is replaced by a placeholder; under the noise action
    spans of numeric types instead get their parsed value Laplace-noised with
    the tier's epsilon and formatted to 2 decimals (falling back to redaction
    when the value does not parse).

    `abstractive_summarizer` is an optional hook replacing the extractive
    summary (disabled by default; the caller owns re-screening its output,
    since an external summarizer can reintroduce sensitive content).
    """
    action = decide_action(matrix, trust.tier, report.level)
    spans = report.spans

    if action is DisclosureAction.PASS:
        return ControlledOutput(
            text=text, action_set=("pass",), removed_span_count=0,
            epsilon_spent=None, level=report.level, tier=trust.tier,
        )

    if action is DisclosureAction.DENY:
        return ControlledOutput(
            text=DENIAL_NOTICE, action_set=("deny",), removed_span_count=len(spans),
            epsilon_spent=None, level=report.level, tier=trust.tier,
        )

    if action is DisclosureAction.SUMMARIZE:
        if abstractive_summarizer is not None:
            summary = abstractive_summarizer(text)
        else:
            summary = extractive_filter_summary(text, spans, matrix.summarize_cap)
        return ControlledOutput(
            text=summary, action_set=("summarize",), removed_span_count=len(spans),
            epsilon_spent=None, level=report.level, tier=trust.tier,
        )

    # redact / noise
    targets = sorted(
        (
            s for s in spans
            if type_levels[s.entity_type] >= SensitivityLevel.INTERNAL
        ),
        key=lambda s: (s.start, s.end),
    )
    # Same-type spans arrive merged; spans of different types may still
    # overlap, so strictly-overlapping spans are replaced as one group.
    groups: list[list[EntitySpan]] = []
    for span in targets:
        if groups and span.start < max(s.end for s in groups[-1]):
            groups[-1].append(span)
        else:
            groups.append([span])

    epsilon = matrix.epsilon_per_tier[trust.tier]
    epsilon_spent = 0.0
    actions_applied: list[str] = []
    out = text
    for group in reversed(groups):
        start = group[0].start
        end = max(s.end for s in group)
        replacement: str | None = None
        if (
            action is DisclosureAction.NOISE
            and len(group) == 1
            and group[0].entity_type in numeric_types
        ):
            if rng is None:
                raise ValueError("noise action requires a randomness source")
            value = _parse_numeric(text[start:end])
            if value is not None:
                noised = laplace_noise(value, 1.0, epsilon, rng)
                replacement = f"{noised:.2f}"
                epsilon_spent += epsilon
                if "noise" not in actions_applied:
                    actions_applied.append("noise")
        if replacement is None:
            seen_types: list[str] = []
            for span in group:
                if span.entity_type not in seen_types:
                    seen_types.append(span.entity_type)
            replacement = "".join(
                matrix.placeholder_template.replace("{TYPE}", t) for t in seen_types
            )
            if "redact" not in actions_applied:
                actions_applied.append("redact")
        out = out[:start] + replacement + out[end:]

    if not actions_applied:
        actions_applied.append(action.value)
    return ControlledOutput(
        text=out,
        action_set=tuple(actions_applied),
        removed_span_count=len(targets),
        epsilon_spent=epsilon_spent if epsilon_spent > 0 else None,
        level=report.level,
        tier=trust.tier,
    )
