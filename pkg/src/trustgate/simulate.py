"""Synthetic-session simulation over the in-process pipeline.

Drives the gateway service directly (no network) with seeded sessions whose
principals target requested trust tiers, then reports the action
distribution per tier and the leakage count: spans of confidential-or-above
types from the raw backend output that appear verbatim in a response the
matrix said to transform (pass cells authorize disclosure and do not count).
Fixed seeds make runs bit-reproducible.
"""

from __future__ import annotations

import dataclasses
import itertools
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .backend import MockBackend
from .config import Config
from .gateway import GatewayService, PipelineTrace, PolicyDeniedError
from .sensitivity import SensitivityLevel
from .trust import (
    AuthStrength,
    DevicePosture,
    NetworkZone,
    Principal,
    RequestContext,
)

MIX_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SessionTemplate:
    """A (role, purpose, context) combination that lands on a trust tier
    under the configured scorer with a fresh behavior prior."""

    tier: int
    role: str
    purpose: str
    network_zone: NetworkZone
    device_posture: DevicePosture
    auth_strength: AuthStrength


@dataclass(frozen=True)
class SimulationSpec:
    sessions: int
    seed: int
    tier_mix: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    prompts: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.sessions < 1:
            raise ValueError("sessions must be >= 1")
        if len(self.tier_mix) != 4 or any(p < 0 for p in self.tier_mix):
            raise ValueError("tier_mix must list 4 non-negative proportions")
        if abs(sum(self.tier_mix) - 1.0) > MIX_SUM_TOLERANCE:
            raise ValueError(f"tier_mix must sum to 1, got {sum(self.tier_mix)}")


@dataclass
class SimulationMetrics:
    sessions: int
    seed: int
    requested_tier_counts: dict[int, int] = field(default_factory=dict)
    actions_per_tier: dict[int, dict[str, int]] = field(default_factory=dict)
    denial_count: int = 0
    anomaly_count: int = 0
    leakage_count: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "sessions": self.sessions,
            "seed": self.seed,
            "requested_tier_counts": {
                str(k): v for k, v in sorted(self.requested_tier_counts.items())
            },
            "actions_per_tier": {
                str(tier): dict(sorted(actions.items()))
                for tier, actions in sorted(self.actions_per_tier.items())
            },
            "denial_count": self.denial_count,
            "anomaly_count": self.anomaly_count,
            "leakage_count": self.leakage_count,
        }


def find_tier_templates(config: Config) -> dict[int, SessionTemplate]:
    """Search role x purpose x context combinations for one deterministic
    representative per reachable tier, scored with the fresh-prior behavior
    component 0.5."""
    templates: dict[int, SessionTemplate] = {}
    purposes = sorted(config.scorer.purpose_scores) + [""]
    contexts = itertools.product(
        (AuthStrength.MFA, AuthStrength.PASSWORD, AuthStrength.ANONYMOUS),
        NetworkZone,
        DevicePosture,
    )
    context_list = list(contexts)
    for role in sorted(config.scorer.role_weights):
        principal = Principal(id=f"probe-{role}", roles=frozenset({role}))
        for purpose in purposes:
            for auth, zone, device in context_list:
                ctx = RequestContext(
                    purpose=purpose,
                    network_zone=zone,
                    device_posture=device,
                    auth_strength=auth,
                )
                score = config.scorer.compute_trust_score(principal, ctx, 0.5)
                if score.tier not in templates:
                    templates[score.tier] = SessionTemplate(
                        tier=score.tier,
                        role=role,
                        purpose=purpose,
                        network_zone=zone,
                        device_posture=device,
                        auth_strength=auth,
                    )
        if len(templates) == 4:
            break
    return templates


def _nearest_tier(requested: int, available: list[int]) -> int:
    return min(available, key=lambda t: (abs(t - requested), t))


def run_simulation(config: Config, spec: SimulationSpec) -> SimulationMetrics:
    """Run seeded synthetic sessions against a private service instance
    (temporary audit and state files; the caller's files are untouched)."""
    spec.validate()
    if config.backend.kind != "mock":
        raise ValueError("simulation requires the mock backend (no network)")

    templates = find_tier_templates(config)
    if not templates:
        raise ValueError("no trust tier is reachable under this configuration")
    available = sorted(templates)

    prompts = spec.prompts
    if not prompts:
        backend = MockBackend.from_settings(config.backend)
        prompts = tuple(sorted(backend.fixture)) or ("hello",)

    sim_principals = {
        f"sim-tier{tier}": Principal(
            id=f"sim-tier{tier}", roles=frozenset({template.role})
        )
        for tier, template in templates.items()
    }

    rng = random.Random(spec.seed)
    metrics = SimulationMetrics(sessions=spec.sessions, seed=spec.seed)
    confidential_types = {
        t for t, level in config.engine.type_levels.items()
        if level >= SensitivityLevel.CONFIDENTIAL
    }

    with tempfile.TemporaryDirectory(prefix="trustgate-sim-") as tmp:
        sim_config = dataclasses.replace(
            config,
            principals=sim_principals,
            audit_path=Path(tmp) / "audit.jsonl",
            state_path=Path(tmp) / "state.json",
            rng_seed=spec.seed,
        )
        service = GatewayService(sim_config)
        try:
            for _ in range(spec.sessions):
                requested = rng.choices((0, 1, 2, 3), weights=spec.tier_mix)[0]
                tier = (
                    requested if requested in templates
                    else _nearest_tier(requested, available)
                )
                template = templates[tier]
                prompt = rng.choice(prompts)
                metrics.requested_tier_counts[requested] = (
                    metrics.requested_tier_counts.get(requested, 0) + 1
                )
                trace = PipelineTrace()
                bucket = metrics.actions_per_tier.setdefault(tier, {})
                try:
                    service.handle_completion(
                        f"sim-tier{tier}",
                        template.purpose,
                        prompt,
                        {
                            "network_zone": template.network_zone.value,
                            "device_posture": template.device_posture.value,
                            "auth_strength": template.auth_strength.value,
                        },
                        trace=trace,
                    )
                except PolicyDeniedError:
                    bucket["policy_deny"] = bucket.get("policy_deny", 0) + 1
                    metrics.denial_count += 1
                    continue
                assert trace.output is not None and trace.report is not None
                for action in trace.output.action_set:
                    bucket[action] = bucket.get(action, 0) + 1
                if "deny" in trace.output.action_set:
                    metrics.denial_count += 1
                if trace.anomaly is not None and trace.anomaly.anomalous:
                    metrics.anomaly_count += 1
                if trace.output.action_set != ("pass",):
                    raw = trace.raw_output or ""
                    for span in trace.report.spans:
                        if span.entity_type not in confidential_types:
                            continue
                        if raw[span.start:span.end] in trace.output.text:
                            metrics.leakage_count += 1
        finally:
            service.close()
    return metrics
