from __future__ import annotations

import itertools
import math
import random
from datetime import datetime, timezone

import numpy as np
import pytest

from oracles import hmm_path_enumeration, random_stochastic_row
from trustgate.behavior import (
    LOG_FLOOR,
    BehaviorAction,
    BehaviorEvent,
    BehaviorState,
    HmmModel,
    behavior_score,
    flag_anomaly,
    forward_loglik,
    update_posterior,
)


def make_event(action=BehaviorAction.QUERY, compliant=True):
    return BehaviorEvent(
        principal_id="p",
        action=action,
        timestamp=datetime.now(timezone.utc),
        compliant=compliant,
    )


# Deterministic model: state 0 only, emits only QUERY.
DETERMINISTIC = HmmModel(
    states=("ONLY",),
    alphabet=("QUERY", "EXPORT"),
    initial=np.array([1.0]),
    transition=np.array([[1.0]]),
    emission=np.array([[1.0, 0.0]]),
)

# Two states, uniform everything, two symbols.
UNIFORM = HmmModel(
    states=("A", "B"),
    alphabet=("x", "y"),
    initial=np.array([0.5, 0.5]),
    transition=np.array([[0.5, 0.5], [0.5, 0.5]]),
    emission=np.array([[0.5, 0.5], [0.5, 0.5]]),
)


class TestPosterior:
    def test_compliant_increments_alpha(self):
        state = update_posterior(BehaviorState(), make_event(compliant=True))
        assert (state.alpha, state.beta) == (2.0, 1.0)

    def test_violation_adds_weight_to_beta(self):
        state = update_posterior(
            BehaviorState(), make_event(BehaviorAction.VIOLATION, compliant=False),
            violation_weight=3,
        )
        assert (state.alpha, state.beta) == (1.0, 4.0)

    def test_score_after_violation(self):
        state = update_posterior(
            BehaviorState(), make_event(BehaviorAction.VIOLATION, compliant=False),
            violation_weight=3,
        )
        assert behavior_score(state) == 0.2  # 1 / 5

    def test_score_examples(self):
        assert behavior_score(BehaviorState(1, 1)) == 0.5
        assert behavior_score(BehaviorState(2, 1)) == pytest.approx(2 / 3)
        assert behavior_score(BehaviorState(1, 4)) == pytest.approx(0.2)

    def test_ring_bounded(self):
        state = BehaviorState()
        for i in range(60):
            state = update_posterior(state, make_event(), ring_size=50)
        assert len(state.recent) == 50

    def test_ring_evicts_oldest(self):
        state = BehaviorState()
        state = update_posterior(state, make_event(BehaviorAction.EXPORT), ring_size=3)
        for _ in range(3):
            state = update_posterior(state, make_event(BehaviorAction.QUERY), ring_size=3)
        assert state.recent == ("QUERY", "QUERY", "QUERY")

    def test_compliant_strictly_raises_score(self):
        rng = random.Random(3)
        state = BehaviorState()
        for _ in range(50):
            before = behavior_score(state)
            compliant = rng.random() < 0.7
            state = update_posterior(state, make_event(compliant=compliant))
            after = behavior_score(state)
            if compliant:
                assert after > before
            else:
                assert after < before
            assert 0.0 < after < 1.0

    def test_weight_below_one_rejected(self):
        with pytest.raises(ValueError):
            update_posterior(BehaviorState(), make_event(compliant=False), violation_weight=0.5)


class TestForward:
    def test_certain_sequence_has_probability_one(self):
        assert forward_loglik(DETERMINISTIC, ["QUERY", "QUERY"]) == pytest.approx(0.0)

    def test_impossible_emission_floors(self):
        assert forward_loglik(DETERMINISTIC, ["QUERY", "EXPORT"]) == LOG_FLOOR

    def test_uniform_two_step(self):
        # Enumerated: 4 paths x (0.5 * 0.5 * 0.5 * 0.5) = 0.25
        expected = hmm_path_enumeration(
            [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]], [0, 1]
        )
        assert expected == pytest.approx(0.25)
        assert forward_loglik(UNIFORM, ["x", "y"]) == pytest.approx(math.log(0.25))

    def test_empty_sequence_is_certain(self):
        assert forward_loglik(UNIFORM, []) == 0.0

    def test_unknown_symbol_raises_with_name(self):
        with pytest.raises(ValueError, match="DOWNLOAD"):
            forward_loglik(UNIFORM, ["x", "DOWNLOAD"])

    def test_matches_enumeration_on_random_models(self):
        """Forward equals brute-force path enumeration for models up to 3
        states and sequences up to length 5 (full sweep in acceptance)."""
        rng = random.Random(17)
        for _ in range(25):
            n_states = rng.randint(1, 3)
            n_symbols = rng.randint(2, 3)
            alphabet = tuple(f"s{i}" for i in range(n_symbols))
            initial = random_stochastic_row(rng, n_states)
            transition = [random_stochastic_row(rng, n_states) for _ in range(n_states)]
            emission = [random_stochastic_row(rng, n_symbols) for _ in range(n_states)]
            model = HmmModel(
                states=tuple(f"q{i}" for i in range(n_states)),
                alphabet=alphabet,
                initial=np.array(initial),
                transition=np.array(transition),
                emission=np.array(emission),
            )
            for length in range(1, 6):
                observations = [rng.randrange(n_symbols) for _ in range(length)]
                expected = hmm_path_enumeration(initial, transition, emission, observations)
                got = forward_loglik(model, [alphabet[i] for i in observations])
                if expected == 0.0:
                    assert got == LOG_FLOOR
                else:
                    assert got == pytest.approx(math.log(expected), abs=1e-9)

    def test_normalization_over_fixed_length(self):
        """Likelihoods over every sequence of length n sum to 1 for n <= 4."""
        rng = random.Random(29)
        alphabet = ("x", "y", "z")
        model = HmmModel(
            states=("A", "B"),
            alphabet=alphabet,
            initial=np.array(random_stochastic_row(rng, 2)),
            transition=np.array([random_stochastic_row(rng, 2) for _ in range(2)]),
            emission=np.array([random_stochastic_row(rng, 3) for _ in range(2)]),
        )
        for n in range(1, 5):
            total = sum(
                math.exp(forward_loglik(model, list(seq)))
                for seq in itertools.product(alphabet, repeat=n)
            )
            assert total == pytest.approx(1.0, abs=1e-9)


class TestAnomaly:
    def test_perfect_fit_not_anomalous(self):
        result = flag_anomaly(DETERMINISTIC, ["QUERY", "QUERY"], threshold=-2.5)
        assert result.anomalous is False
        assert result.mean_loglik == pytest.approx(0.0)

    def test_impossible_sequence_flagged(self):
        result = flag_anomaly(DETERMINISTIC, ["QUERY", "EXPORT"], threshold=-2.5)
        assert result.anomalous is True
        assert result.mean_loglik == pytest.approx(LOG_FLOOR / 2)

    def test_threshold_boundary(self):
        # ln(0.25) / 2 ~= -0.693 < -0.5 -> anomalous
        result = flag_anomaly(UNIFORM, ["x", "y"], threshold=-0.5)
        assert result.anomalous is True
        assert result.mean_loglik == pytest.approx(math.log(0.25) / 2)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            flag_anomaly(UNIFORM, [], threshold=-2.5)


class TestModelValidation:
    def test_rows_must_be_stochastic(self):
        with pytest.raises(ValueError, match="transition"):
            HmmModel(
                states=("A", "B"),
                alphabet=("x",),
                initial=np.array([1.0, 0.0]),
                transition=np.array([[0.9, 0.2], [0.5, 0.5]]),
                emission=np.array([[1.0], [1.0]]),
            )

    def test_negative_probability_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            HmmModel(
                states=("A",),
                alphabet=("x", "y"),
                initial=np.array([1.0]),
                transition=np.array([[1.0]]),
                emission=np.array([[1.5, -0.5]]),
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            HmmModel(
                states=("A", "B"),
                alphabet=("x",),
                initial=np.array([1.0]),
                transition=np.array([[1.0]]),
                emission=np.array([[1.0]]),
            )

    def test_state_parameters_validated(self):
        with pytest.raises(ValueError):
            BehaviorState(alpha=0.5, beta=1.0)
