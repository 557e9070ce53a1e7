"""Dynamic trust scoring: role, purpose, context, and behavior components.

The raw trust score is a convex combination of four components in [0, 1]:

    raw = w_r * R + w_p * P + w_c * C + w_b * B

where R is the best (max) configured weight of the principal's roles, P the
configured score of the request purpose, C the mean of the network / device /
auth context factors, and B the behavioral score supplied by the behavior
monitor. The raw score discretizes into tiers 0-3 at configurable thresholds,
boundary-inclusive upward.

The linear form keeps the score provably monotone in every component; all
factor tables are configuration with the defaults below shipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping

WEIGHT_SUM_TOLERANCE = 1e-9

DEFAULT_TIER_THRESHOLDS: tuple[float, float, float] = (0.30, 0.60, 0.85)
DEFAULT_UNKNOWN_PURPOSE_SCORE = 0.5

DEFAULT_NETWORK_FACTORS = {"trusted": 1.0, "vpn": 0.7, "public": 0.2}
DEFAULT_DEVICE_FACTORS = {"managed": 1.0, "unmanaged": 0.3, "unknown": 0.1}
DEFAULT_AUTH_FACTORS = {"mfa": 1.0, "password": 0.5, "anonymous": 0.0}


class NetworkZone(str, Enum):
    TRUSTED = "trusted"
    VPN = "vpn"
    PUBLIC = "public"


class DevicePosture(str, Enum):
    MANAGED = "managed"
    UNMANAGED = "unmanaged"
    UNKNOWN = "unknown"


class AuthStrength(str, Enum):
    MFA = "mfa"
    PASSWORD = "password"
    ANONYMOUS = "anonymous"


class UnknownRoleError(ValueError):
    """A principal carries a role absent from the configured role-weight map."""


@dataclass(frozen=True)
class Principal:
    """An authenticated caller: opaque id, role set, free-form attributes."""

    id: str
    roles: frozenset[str] = frozenset()
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("principal id must be nonempty")
        object.__setattr__(self, "roles", frozenset(self.roles))


@dataclass(frozen=True)
class RequestContext:
    """Per-request environment attributes feeding the context component."""

    purpose: str
    network_zone: NetworkZone
    device_posture: DevicePosture
    auth_strength: AuthStrength
    timestamp: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )


@dataclass(frozen=True)
class TrustWeights:
    """Component weights; must be non-negative and sum to 1."""

    role: float = 0.4
    purpose: float = 0.2
    context: float = 0.2
    behavior: float = 0.2

    def validate(self) -> None:
        values = (self.role, self.purpose, self.context, self.behavior)
        if any(w < 0 for w in values):
            raise ValueError(f"trust weights must be non-negative, got {values}")
        total = sum(values)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"trust weights must sum to 1, got {total}")


@dataclass(frozen=True)
class TrustComponents:
    role: float
    purpose: float
    context: float
    behavior: float


@dataclass(frozen=True)
class TrustScore:
    """The scored result: raw value, discrete tier, per-component breakdown."""

    raw: float
    tier: int
    components: TrustComponents
    computed_at: datetime


def tier_of(
    raw: float,
    thresholds: tuple[float, float, float] = DEFAULT_TIER_THRESHOLDS,
) -> int:
    """Discretize a raw score: tier 3 iff raw >= t3, tier 2 iff t2 <= raw < t3,
    tier 1 iff t1 <= raw < t2, else tier 0. Boundaries map upward."""
    t1, t2, t3 = thresholds
    if not (0 < t1 < t2 < t3 < 1):
        raise ValueError(f"tier thresholds must be strictly increasing in (0, 1), got {thresholds}")
    if raw >= t3:
        return 3
    if raw >= t2:
        return 2
    if raw >= t1:
        return 1
    return 0


class TrustScorer:
    """Computes trust scores against a fixed configuration.

    All methods are pure functions of their inputs; instances are immutable
    after construction and safe to share across concurrent request handlers.
    """

    def __init__(
        self,
        role_weights: Mapping[str, float],
        purpose_scores: Mapping[str, float] | None = None,
        weights: TrustWeights = TrustWeights(),
        thresholds: tuple[float, float, float] = DEFAULT_TIER_THRESHOLDS,
        network_factors: Mapping[str, float] = DEFAULT_NETWORK_FACTORS,
        device_factors: Mapping[str, float] = DEFAULT_DEVICE_FACTORS,
        auth_factors: Mapping[str, float] = DEFAULT_AUTH_FACTORS,
        unknown_purpose_score: float = DEFAULT_UNKNOWN_PURPOSE_SCORE,
    ) -> None:
        weights.validate()
        t1, t2, t3 = thresholds
        if not (0 < t1 < t2 < t3 < 1):
            raise ValueError(
                f"tier thresholds must be strictly increasing in (0, 1), got {thresholds}"
            )
        for role, weight in role_weights.items():
            if not 0.0 <= weight <= 1.0:
                raise ValueError(f"role weight for {role!r} outside [0, 1]: {weight}")
        for zone in NetworkZone:
            if zone.value not in network_factors:
                raise ValueError(f"network factor table missing {zone.value!r}")
        for posture in DevicePosture:
            if posture.value not in device_factors:
                raise ValueError(f"device factor table missing {posture.value!r}")
        for strength in AuthStrength:
            if strength.value not in auth_factors:
                raise ValueError(f"auth factor table missing {strength.value!r}")
        self.role_weights = dict(role_weights)
        self.purpose_scores = dict(purpose_scores or {})
        self.weights = weights
        self.thresholds = thresholds
        self.network_factors = dict(network_factors)
        self.device_factors = dict(device_factors)
        self.auth_factors = dict(auth_factors)
        self.unknown_purpose_score = unknown_purpose_score

    def compute_context_score(self, ctx: RequestContext) -> float:
        """Arithmetic mean of the network, device, and auth factor scores."""
        return (
            self.network_factors[ctx.network_zone.value]
            + self.device_factors[ctx.device_posture.value]
            + self.auth_factors[ctx.auth_strength.value]
        ) / 3.0

    def compute_trust_score(
        self,
        principal: Principal,
        ctx: RequestContext,
        behavior: float,
    ) -> TrustScore:
        """Score a principal in a request context.

        `behavior` is the B component in [0, 1] (from the behavior monitor).
        Raises UnknownRoleError when the principal carries a role missing
        from the role-weight map. Multiple roles combine by max: the most
        privileged role governs.
        """
        if not 0.0 <= behavior <= 1.0:
            raise ValueError(f"behavior score {behavior} outside [0, 1]")
        role_score = 0.0
        for role in principal.roles:
            if role not in self.role_weights:
                raise UnknownRoleError(
                    f"role {role!r} of principal {principal.id!r} is not in the "
                    "role-weight map"
                )
            role_score = max(role_score, self.role_weights[role])
        purpose_score = self.purpose_scores.get(ctx.purpose, self.unknown_purpose_score)
        context_score = self.compute_context_score(ctx)
        w = self.weights
        raw = (
            w.role * role_score
            + w.purpose * purpose_score
            + w.context * context_score
            + w.behavior * behavior
        )
        raw = min(1.0, max(0.0, raw))
        return TrustScore(
            raw=raw,
            tier=tier_of(raw, self.thresholds),
            components=TrustComponents(
                role=role_score,
                purpose=purpose_score,
                context=context_score,
                behavior=behavior,
            ),
            computed_at=datetime.now(timezone.utc),
        )
