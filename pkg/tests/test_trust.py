from __future__ import annotations

import random
from datetime import datetime, timezone

import pytest

from trustgate.trust import (
    AuthStrength,
    DevicePosture,
    NetworkZone,
    Principal,
    RequestContext,
    TrustScorer,
    TrustWeights,
    UnknownRoleError,
    tier_of,
)

ROLE_WEIGHTS = {"admin": 1.0, "clinician": 0.9, "analyst": 0.6, "guest": 0.2}
PURPOSES = {"treatment": 1.0, "research": 0.5, "curiosity": 0.2}


def make_ctx(zone="trusted", device="managed", auth="mfa", purpose="treatment"):
    return RequestContext(
        purpose=purpose,
        network_zone=NetworkZone(zone),
        device_posture=DevicePosture(device),
        auth_strength=AuthStrength(auth),
        timestamp=datetime.now(timezone.utc),
    )


@pytest.fixture
def scorer():
    return TrustScorer(role_weights=ROLE_WEIGHTS, purpose_scores=PURPOSES)


class TestContextScore:
    def test_all_factors_maximal(self, scorer):
        assert scorer.compute_context_score(make_ctx("trusted", "managed", "mfa")) == 1.0

    def test_all_factors_minimal(self, scorer):
        # (0.2 + 0.1 + 0.0) / 3 from the factor tables
        score = scorer.compute_context_score(make_ctx("public", "unknown", "anonymous"))
        assert score == pytest.approx(0.1)

    def test_vpn_managed_mfa(self, scorer):
        # (0.7 + 1.0 + 1.0) / 3
        score = scorer.compute_context_score(make_ctx("vpn", "managed", "mfa"))
        assert score == pytest.approx(0.9)


class TestTrustScore:
    def test_all_components_maximal(self, scorer):
        principal = Principal(id="p", roles=frozenset({"admin"}))
        score = scorer.compute_trust_score(principal, make_ctx(), 1.0)
        assert score.raw == pytest.approx(1.0)
        assert score.tier == 3

    def test_all_components_zero(self):
        scorer = TrustScorer(role_weights={}, purpose_scores={"x": 0.0})
        principal = Principal(id="p")  # no roles -> R = 0
        ctx = make_ctx("public", "unknown", "anonymous", purpose="x")
        # context is 0.1, so zero out its weight to reach exactly 0
        scorer = TrustScorer(
            role_weights={},
            purpose_scores={"x": 0.0},
            weights=TrustWeights(role=0.4, purpose=0.3, context=0.0, behavior=0.3),
        )
        score = scorer.compute_trust_score(principal, ctx, 0.0)
        assert score.raw == 0.0
        assert score.tier == 0

    def test_weighted_combination(self):
        # R=0.9, P=0.5, C=0.9, B=0.5 with weights (0.4, 0.2, 0.2, 0.2):
        # 0.4*0.9 + 0.2*0.5 + 0.2*0.9 + 0.2*0.5 = 0.74 -> tier 2
        scorer = TrustScorer(role_weights=ROLE_WEIGHTS, purpose_scores=PURPOSES)
        principal = Principal(id="p", roles=frozenset({"clinician"}))
        score = scorer.compute_trust_score(
            principal, make_ctx("vpn", "managed", "mfa", purpose="research"), 0.5
        )
        assert score.raw == pytest.approx(0.74)
        assert score.tier == 2
        assert score.components.role == pytest.approx(0.9)
        assert score.components.context == pytest.approx(0.9)

    def test_multiple_roles_take_max(self, scorer):
        principal = Principal(id="p", roles=frozenset({"guest", "admin"}))
        score = scorer.compute_trust_score(principal, make_ctx(), 0.5)
        assert score.components.role == 1.0

    def test_unknown_purpose_defaults_to_neutral(self, scorer):
        principal = Principal(id="p", roles=frozenset({"guest"}))
        score = scorer.compute_trust_score(
            principal, make_ctx(purpose="never-configured"), 0.5
        )
        assert score.components.purpose == 0.5

    def test_unknown_role_rejected(self, scorer):
        principal = Principal(id="p", roles=frozenset({"superuser"}))
        with pytest.raises(UnknownRoleError):
            scorer.compute_trust_score(principal, make_ctx(), 0.5)

    def test_behavior_out_of_range_rejected(self, scorer):
        principal = Principal(id="p", roles=frozenset({"guest"}))
        with pytest.raises(ValueError):
            scorer.compute_trust_score(principal, make_ctx(), 1.5)

    def test_determinism_modulo_timestamp(self, scorer):
        principal = Principal(id="p", roles=frozenset({"analyst"}))
        ctx = make_ctx("vpn", "unmanaged", "password", purpose="research")
        first = scorer.compute_trust_score(principal, ctx, 0.3)
        second = scorer.compute_trust_score(principal, ctx, 0.3)
        assert first.raw == second.raw
        assert first.tier == second.tier
        assert first.components == second.components


class TestTierOf:
    def test_maximal(self):
        assert tier_of(1.0) == 3

    def test_boundary_maps_upward(self):
        assert tier_of(0.60) == 2
        assert tier_of(0.30) == 1
        assert tier_of(0.85) == 3

    def test_below_lowest(self):
        assert tier_of(0.299) == 0

    def test_monotone_in_raw(self):
        values = [i / 200 for i in range(201)]
        tiers = [tier_of(v) for v in values]
        assert tiers == sorted(tiers)

    def test_bad_thresholds_rejected(self):
        with pytest.raises(ValueError):
            tier_of(0.5, (0.6, 0.5, 0.9))


class TestProperties:
    def test_monotone_in_each_component(self):
        """Bumping any single component never lowers raw score or tier."""
        rng = random.Random(7)
        for _ in range(300):
            weights = TrustWeights()
            role_w = {"r": rng.random()}
            purpose = {"p": rng.random()}
            scorer = TrustScorer(role_weights=role_w, purpose_scores=purpose, weights=weights)
            principal = Principal(id="x", roles=frozenset({"r"}))
            ctx = make_ctx(
                rng.choice(["trusted", "vpn", "public"]),
                rng.choice(["managed", "unmanaged", "unknown"]),
                rng.choice(["mfa", "password", "anonymous"]),
                purpose="p",
            )
            behavior = rng.random()
            base = scorer.compute_trust_score(principal, ctx, behavior)

            # raise the role component
            bumped_role = TrustScorer(
                role_weights={"r": min(1.0, role_w["r"] + rng.random() * (1 - role_w["r"]))},
                purpose_scores=purpose,
                weights=weights,
            ).compute_trust_score(principal, ctx, behavior)
            assert bumped_role.raw >= base.raw - 1e-12
            assert bumped_role.tier >= base.tier

            # raise the behavior component
            bumped_behavior = scorer.compute_trust_score(
                principal, ctx, min(1.0, behavior + rng.random() * (1 - behavior))
            )
            assert bumped_behavior.raw >= base.raw - 1e-12
            assert bumped_behavior.tier >= base.tier

    def test_bounded_for_normalized_weights(self):
        rng = random.Random(11)
        for _ in range(300):
            parts = [rng.random() for _ in range(4)]
            total = sum(parts)
            weights = TrustWeights(*(p / total for p in parts))
            scorer = TrustScorer(
                role_weights={"r": rng.random()},
                purpose_scores={"p": rng.random()},
                weights=weights,
            )
            principal = Principal(id="x", roles=frozenset({"r"}))
            ctx = make_ctx(
                rng.choice(["trusted", "vpn", "public"]),
                rng.choice(["managed", "unmanaged", "unknown"]),
                rng.choice(["mfa", "password", "anonymous"]),
                purpose="p",
            )
            score = scorer.compute_trust_score(principal, ctx, rng.random())
            assert 0.0 <= score.raw <= 1.0


class TestValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            TrustWeights(role=0.5, purpose=0.3, context=0.2, behavior=0.2).validate()

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            TrustWeights(role=-0.1, purpose=0.5, context=0.3, behavior=0.3).validate()

    def test_empty_principal_id_rejected(self):
        with pytest.raises(ValueError):
            Principal(id="")

    def test_role_weight_out_of_range(self):
        with pytest.raises(ValueError):
            TrustScorer(role_weights={"r": 1.5})
