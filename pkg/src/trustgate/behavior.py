"""Behavioral trust: Beta-Bernoulli compliance posterior and HMM anomaly test.

Per-principal compliance is tracked as a Beta(alpha, beta) posterior over the
probability of a compliant action: compliant events add 1 to alpha, violations
add `violation_weight` (default 3) to beta, so one violation costs three
compliances. The behavioral trust component is the posterior mean
alpha / (alpha + beta).

Sequences of recent actions are tested against a two-state hidden Markov
model (NORMAL / SUSPECT by default) with the scaled forward algorithm; a
sequence whose mean per-symbol log-likelihood falls below a threshold is
flagged anomalous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

import numpy as np

#: Stand-in for ln(0) so downstream arithmetic stays total.
LOG_FLOOR = -1e9

ROW_SUM_TOLERANCE = 1e-9

DEFAULT_RING_SIZE = 50
DEFAULT_VIOLATION_WEIGHT = 3.0
DEFAULT_ANOMALY_THRESHOLD = -2.5


class BehaviorAction(str, Enum):
    QUERY = "QUERY"
    SENSITIVE_ACCESS = "SENSITIVE_ACCESS"
    EXPORT = "EXPORT"
    VIOLATION = "VIOLATION"
    LOGIN_FAIL = "LOGIN_FAIL"


ACTION_ALPHABET: tuple[str, ...] = tuple(a.value for a in BehaviorAction)


@dataclass(frozen=True)
class BehaviorEvent:
    principal_id: str
    action: BehaviorAction
    timestamp: datetime
    compliant: bool


@dataclass(frozen=True)
class BehaviorState:
    """Beta posterior plus a bounded ring of the most recent actions."""

    alpha: float = 1.0
    beta: float = 1.0
    recent: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.alpha < 1.0 or self.beta < 1.0:
            raise ValueError(
                f"posterior parameters must be >= 1, got ({self.alpha}, {self.beta})"
            )


def update_posterior(
    state: BehaviorState,
    event: BehaviorEvent,
    violation_weight: float = DEFAULT_VIOLATION_WEIGHT,
    ring_size: int = DEFAULT_RING_SIZE,
) -> BehaviorState:
    """Return the state after one event: compliant -> alpha + 1, otherwise
    beta + violation_weight. The action joins the ring, evicting the oldest
    entry beyond `ring_size`."""
    if violation_weight < 1.0:
        raise ValueError(f"violation weight must be >= 1, got {violation_weight}")
    if event.compliant:
        alpha, beta = state.alpha + 1.0, state.beta
    else:
        alpha, beta = state.alpha, state.beta + violation_weight
    recent = (state.recent + (event.action.value,))[-ring_size:]
    return BehaviorState(alpha=alpha, beta=beta, recent=recent)


def behavior_score(state: BehaviorState) -> float:
    """Posterior mean alpha / (alpha + beta); always in (0, 1)."""
    return state.alpha / (state.alpha + state.beta)


@dataclass(frozen=True)
class HmmModel:
    """A discrete-emission HMM over an action alphabet.

    `initial` has one entry per state, `transition` is states x states, and
    `emission` is states x alphabet; every probability row must sum to 1
    within 1e-9 with non-negative entries.
    """

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray
    _symbol_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n, m = len(self.states), len(self.alphabet)
        initial = np.asarray(self.initial, dtype=float)
        transition = np.asarray(self.transition, dtype=float)
        emission = np.asarray(self.emission, dtype=float)
        if initial.shape != (n,):
            raise ValueError(f"initial distribution must have shape ({n},)")
        if transition.shape != (n, n):
            raise ValueError(f"transition matrix must have shape ({n}, {n})")
        if emission.shape != (n, m):
            raise ValueError(f"emission matrix must have shape ({n}, {m})")
        for name, array in (("initial", initial[None, :]),
                            ("transition", transition),
                            ("emission", emission)):
            if (array < 0).any():
                raise ValueError(f"{name} contains negative probabilities")
            sums = array.sum(axis=1)
            bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)[0]
            if bad.size:
                raise ValueError(
                    f"{name} row {int(bad[0])} sums to {sums[bad[0]]!r}, expected 1"
                )
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "emission", emission)
        object.__setattr__(
            self, "_symbol_index", {sym: i for i, sym in enumerate(self.alphabet)}
        )


def forward_loglik(model: HmmModel, observations: list[str] | tuple[str, ...]) -> float:
    """ln P(observations | model) via the forward algorithm with per-step
    scaling (each step's filtering distribution is renormalized and the log
    of the normalizer accumulated, so long sequences cannot underflow).

    A sequence with probability exactly 0 returns LOG_FLOOR. The empty
    sequence has probability 1, hence 0.0. Unknown symbols raise ValueError
    naming the symbol.
    """
    indices = []
    for symbol in observations:
        idx = model._symbol_index.get(symbol)
        if idx is None:
            raise ValueError(f"unknown action symbol {symbol!r}")
        indices.append(idx)
    if not indices:
        return 0.0
    alpha = model.initial * model.emission[:, indices[0]]
    total = float(alpha.sum())
    if total <= 0.0:
        return LOG_FLOOR
    loglik = math.log(total)
    alpha = alpha / total
    for idx in indices[1:]:
        alpha = (alpha @ model.transition) * model.emission[:, idx]
        total = float(alpha.sum())
        if total <= 0.0:
            return LOG_FLOOR
        loglik += math.log(total)
        alpha = alpha / total
    return loglik


@dataclass(frozen=True)
class AnomalyResult:
    anomalous: bool
    mean_loglik: float


def flag_anomaly(
    model: HmmModel,
    observations: list[str] | tuple[str, ...],
    threshold: float = DEFAULT_ANOMALY_THRESHOLD,
) -> AnomalyResult:
    """Flag a nonempty sequence whose mean per-symbol log-likelihood falls
    below `threshold` (nats)."""
    if not observations:
        raise ValueError("cannot test an empty observation sequence")
    mean = forward_loglik(model, observations) / len(observations)
    return AnomalyResult(anomalous=mean < threshold, mean_loglik=mean)


# Operating defaults: NORMAL-heavy start, sticky transitions. These are
# hand-set priors, not learned values; all overridable in configuration.
DEFAULT_HMM = HmmModel(
    states=("NORMAL", "SUSPECT"),
    alphabet=ACTION_ALPHABET,
    initial=np.array([0.95, 0.05]),
    transition=np.array([[0.95, 0.05], [0.10, 0.90]]),
    emission=np.array(
        [
            [0.85, 0.10, 0.03, 0.01, 0.01],
            [0.20, 0.30, 0.25, 0.15, 0.10],
        ]
    ),
)
