"""The gateway pipeline and its HTTP surface.

Request flow for POST /v1/completions:

    authenticate -> policy evaluate -> behavior read + anomaly check ->
    trust score -> backend generate -> detect + classify -> transform ->
    audit append -> posterior update

Policy runs before trust scoring (cheap and definitive; trust only refines
disclosure of permitted requests), detection runs on backend output, and the
audit record stores a hash of the raw output rather than the text itself.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import random
import threading
import time
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from .audit import AuditLog, AuditRecord, utc_now_iso
from .backend import BackendError, BackendReply, build_backend
from .behavior import (
    AnomalyResult,
    BehaviorAction,
    BehaviorEvent,
    BehaviorState,
    behavior_score,
    flag_anomaly,
    update_posterior,
)
from .config import Config, load_config
from .disclosure import ControlledOutput, transform
from .policy import Decision, Effect, PolicyError, evaluate, parse_policy
from .sensitivity import SensitivityLevel, SensitivityReport
from .trust import (
    AuthStrength,
    DevicePosture,
    NetworkZone,
    Principal,
    RequestContext,
    TrustScore,
)

logger = logging.getLogger(__name__)

COMPLETION_RESOURCE = "completions"
COMPLETION_ACTION = "invoke"


class UnknownPrincipalError(Exception):
    pass


class RequestInvalidError(Exception):
    """Malformed request body; maps to HTTP 400."""


class PolicyDeniedError(Exception):
    def __init__(self, decision: Decision) -> None:
        super().__init__("request denied by policy")
        self.decision = decision


@dataclass(frozen=True)
class ChatRequest:
    """The assembled request: principal resolved from the API key and
    request_id assigned server-side."""

    request_id: str
    principal_id: str
    purpose: str
    prompt: str
    context: RequestContext


@dataclass(frozen=True)
class ChatResponse:
    request_id: str
    text: str
    trust_tier: int
    sensitivity_level: str
    actions: tuple[str, ...]
    epsilon_spent: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "request_id": self.request_id,
            "text": self.text,
            "trust_tier": self.trust_tier,
            "sensitivity_level": self.sensitivity_level,
            "actions": list(self.actions),
            "epsilon_spent": self.epsilon_spent,
        }


@dataclass
class PipelineTrace:
    """Internal per-request trace for the simulation harness and tests."""

    decision: Decision | None = None
    trust: TrustScore | None = None
    anomaly: AnomalyResult | None = None
    raw_output: str | None = None
    report: SensitivityReport | None = None
    output: ControlledOutput | None = None


class StateStore:
    """Principals and per-principal behavior state in one JSON file,
    loaded at startup and checkpointed atomically on change."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> tuple[dict[str, Principal], dict[str, BehaviorState]]:
        try:
            data = json.loads(self.path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return {}, {}
        principals: dict[str, Principal] = {}
        for pid, spec in (data.get("principals") or {}).items():
            try:
                principals[pid] = Principal(
                    id=pid,
                    roles=frozenset(spec.get("roles", ())),
                    attributes=dict(spec.get("attributes", {})),
                )
            except ValueError:
                continue
        states: dict[str, BehaviorState] = {}
        for pid, spec in (data.get("behavior") or {}).items():
            try:
                states[pid] = BehaviorState(
                    alpha=float(spec["alpha"]),
                    beta=float(spec["beta"]),
                    recent=tuple(spec.get("recent", ())),
                )
            except (KeyError, ValueError):
                continue
        return principals, states

    def checkpoint(
        self,
        principals: Mapping[str, Principal],
        states: Mapping[str, BehaviorState],
    ) -> None:
        data = {
            "principals": {
                pid: {"roles": sorted(p.roles), "attributes": dict(p.attributes)}
                for pid, p in principals.items()
            },
            "behavior": {
                pid: {"alpha": s.alpha, "beta": s.beta, "recent": list(s.recent)}
                for pid, s in states.items()
            },
        }
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            tmp.parent.mkdir(parents=True, exist_ok=True)
            tmp.write_text(json.dumps(data, indent=2), encoding="utf-8")
            os.replace(tmp, self.path)


def _parse_context(purpose: str, context: Mapping[str, Any]) -> RequestContext:
    def enum_field(cls, name: str):
        raw = context.get(name)
        if raw is None:
            raise RequestInvalidError(f"context.{name} is required")
        try:
            return cls(str(raw))
        except ValueError:
            valid = ", ".join(member.value for member in cls)
            raise RequestInvalidError(
                f"context.{name} must be one of: {valid}"
            ) from None

    return RequestContext(
        purpose=purpose,
        network_zone=enum_field(NetworkZone, "network_zone"),
        device_posture=enum_field(DevicePosture, "device_posture"),
        auth_strength=enum_field(AuthStrength, "auth_strength"),
        timestamp=datetime.now(timezone.utc),
    )


class GatewayService:
    """The in-process pipeline. Immutable engines (policy, recognizers,
    matrix, HMM) are shared without synchronization; per-principal behavior
    state is serialized by key; audit writes go through the single-writer
    append log; policy hot-swap replaces the whole value atomically."""

    def __init__(self, config: Config) -> None:
        self.config = config
        self.policy = config.policy
        self.policy_source = config.policy_source
        self.backend = build_backend(config.backend)
        self.audit = AuditLog(config.audit_path)
        self.store = StateStore(config.state_path)
        stored_principals, stored_states = self.store.load()
        # Config-declared principals win on conflict; state-file principals
        # persist across restarts even if dropped from config.
        self.principals: dict[str, Principal] = {
            **stored_principals,
            **config.principals,
        }
        self.behavior_states: dict[str, BehaviorState] = stored_states
        self._principal_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._request_counter = itertools.count()
        self.backend_error_count = 0
        self.started_at = utc_now_iso()

    # -- helpers --

    def _principal_lock(self, principal_id: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._principal_locks.get(principal_id)
            if lock is None:
                lock = self._principal_locks[principal_id] = threading.Lock()
            return lock

    def _request_rng(self) -> random.Random:
        serial = next(self._request_counter)
        if self.config.rng_seed is None:
            return random.Random()
        return random.Random(f"{self.config.rng_seed}:{serial}")

    def _hash_output(self, text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def _audit_refusal(
        self,
        request_id: str,
        principal_id: str,
        started: float,
        *,
        actions: tuple[str, ...],
    ) -> None:
        self.audit.append(
            AuditRecord(
                request_id=request_id,
                timestamp=utc_now_iso(),
                principal_id=principal_id,
                tier=None,
                raw_score=None,
                level=None,
                action_set=actions,
                entity_type_counts={},
                output_hash=None,
                anomaly_flag=False,
                backend_id=None,
                latency_ms=round((time.perf_counter() - started) * 1000, 3),
            )
        )

    def _record_event(
        self,
        principal_id: str,
        action: BehaviorAction,
        compliant: bool,
    ) -> None:
        with self._principal_lock(principal_id):
            state = self.behavior_states.get(principal_id, BehaviorState())
            event = BehaviorEvent(
                principal_id=principal_id,
                action=action,
                timestamp=datetime.now(timezone.utc),
                compliant=compliant,
            )
            self.behavior_states[principal_id] = update_posterior(
                state,
                event,
                violation_weight=self.config.violation_weight,
                ring_size=self.config.ring_size,
            )
        self.store.checkpoint(self.principals, self.behavior_states)

    # -- pipeline --

    def handle_completion(
        self,
        principal_id: str,
        purpose: str,
        prompt: str,
        context: Mapping[str, Any],
        trace: PipelineTrace | None = None,
    ) -> ChatResponse:
        """Run the full pipeline. Raises UnknownPrincipalError,
        RequestInvalidError, PolicyDeniedError, or BackendError; every
        outcome, including refusals, appends an audit record."""
        started = time.perf_counter()
        request_id = "r" + uuid.uuid4().hex
        if not prompt or not isinstance(prompt, str):
            raise RequestInvalidError("prompt must be a nonempty string")

        principal = self.principals.get(principal_id)
        if principal is None:
            self._audit_refusal(
                request_id, principal_id, started, actions=("deny",)
            )
            raise UnknownPrincipalError(f"unknown principal {principal_id!r}")

        ctx = _parse_context(purpose, context)
        request = ChatRequest(
            request_id=request_id,
            principal_id=principal_id,
            purpose=purpose,
            prompt=prompt,
            context=ctx,
        )

        decision = evaluate(
            self.policy, principal, ctx, COMPLETION_RESOURCE, COMPLETION_ACTION
        )
        if trace is not None:
            trace.decision = decision
        if decision.effect is Effect.DENY:
            self._audit_refusal(
                request_id, principal_id, started, actions=("deny",)
            )
            self._record_event(principal_id, BehaviorAction.VIOLATION, compliant=False)
            raise PolicyDeniedError(decision)

        with self._principal_lock(principal_id):
            state = self.behavior_states.get(principal_id, BehaviorState())
        b_component = behavior_score(state)
        anomaly = None
        if state.recent:
            anomaly = flag_anomaly(
                self.config.hmm, state.recent, self.config.anomaly_threshold
            )
            if anomaly.anomalous:
                # Anomalies depress the behavior component for this request
                # and are recorded; hard denial stays with policy.
                b_component = 0.0
        if trace is not None:
            trace.anomaly = anomaly

        trust = self.config.scorer.compute_trust_score(principal, ctx, b_component)
        if trace is not None:
            trace.trust = trust

        try:
            reply: BackendReply = self.backend.generate(request.prompt)
        except BackendError:
            self.backend_error_count += 1
            self.audit.append(
                AuditRecord(
                    request_id=request_id,
                    timestamp=utc_now_iso(),
                    principal_id=principal_id,
                    tier=trust.tier,
                    raw_score=round(trust.raw, 6),
                    level=None,
                    action_set=("backend_error",),
                    entity_type_counts={},
                    output_hash=None,
                    anomaly_flag=bool(anomaly and anomaly.anomalous),
                    backend_id=self.backend.backend_id,
                    latency_ms=round((time.perf_counter() - started) * 1000, 3),
                )
            )
            raise

        report = self.config.engine.analyze(reply.text)
        if self.config.scan_prompt:
            # Optional prompt scanning: the stricter of prompt/output levels
            # drives disclosure, spans still come from the output only.
            prompt_report = self.config.engine.analyze(request.prompt)
            if prompt_report.level > report.level:
                report = SensitivityReport(
                    spans=report.spans,
                    level=prompt_report.level,
                    counts=report.counts,
                )
        if trace is not None:
            trace.raw_output = reply.text
            trace.report = report

        output = transform(
            reply.text,
            report,
            trust,
            self.config.matrix,
            type_levels=self.config.engine.type_levels,
            numeric_types=self.config.engine.numeric_types,
            rng=self._request_rng(),
        )
        if trace is not None:
            trace.output = output

        self.audit.append(
            AuditRecord(
                request_id=request_id,
                timestamp=utc_now_iso(),
                principal_id=principal_id,
                tier=trust.tier,
                raw_score=round(trust.raw, 6),
                level=report.level.name.lower(),
                action_set=output.action_set,
                entity_type_counts=dict(report.counts),
                output_hash=self._hash_output(reply.text),
                anomaly_flag=bool(anomaly and anomaly.anomalous),
                backend_id=self.backend.backend_id,
                latency_ms=round((time.perf_counter() - started) * 1000, 3),
            )
        )

        event_action = (
            BehaviorAction.SENSITIVE_ACCESS
            if report.level >= SensitivityLevel.CONFIDENTIAL
            else BehaviorAction.QUERY
        )
        self._record_event(principal_id, event_action, compliant=True)

        return ChatResponse(
            request_id=request_id,
            text=output.text,
            trust_tier=trust.tier,
            sensitivity_level=report.level.name.lower(),
            actions=output.action_set,
            epsilon_spent=output.epsilon_spent,
        )

    # -- admin operations --

    def replace_policy(self, source: str) -> None:
        """Validate and atomically swap the active policy."""
        policy = parse_policy(source)  # PolicyError propagates to the caller
        self.policy = policy
        self.policy_source = source

    def query_audit(self, principal: str | None, since: datetime | None):
        return self.audit.query(principal=principal, since=since)

    def health(self) -> dict[str, Any]:
        warnings = []
        if self.audit.error_count:
            warnings.append(f"audit sink errors: {self.audit.error_count}")
        return {
            "status": "degraded" if warnings else "ok",
            "started_at": self.started_at,
            "counters": {
                "audit_write_errors": self.audit.error_count,
                "backend_errors": self.backend_error_count,
            },
            "warnings": warnings,
        }

    def close(self) -> None:
        self.audit.close()


# --- HTTP surface -----------------------------------------------------------


def create_app(service: GatewayService):
    """FastAPI app over a GatewayService. Endpoints are sync functions so the
    framework dispatches them to worker threads, matching the service's
    lock-based concurrency model."""
    from fastapi import Body, FastAPI, Header, HTTPException, Query
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    app = FastAPI(title="trustgate", docs_url=None, redoc_url=None)
    app.state.service = service

    @app.exception_handler(RequestValidationError)
    def _validation_handler(request, exc):  # malformed body -> 400, not 422
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    def _bearer_key(authorization: str | None) -> str | None:
        if authorization is None:
            return None
        scheme, _, key = authorization.partition(" ")
        if scheme.lower() != "bearer" or not key:
            return None
        return key.strip()

    def _authenticate(authorization: str | None) -> str:
        key = _bearer_key(authorization)
        if key is None:
            raise HTTPException(status_code=401, detail="missing bearer API key")
        principal_id = service.config.api_keys.get(key)
        if principal_id is None:
            raise HTTPException(status_code=401, detail="unknown API key")
        return principal_id

    def _require_admin(authorization: str | None) -> None:
        key = _bearer_key(authorization)
        if key is None:
            raise HTTPException(status_code=401, detail="missing bearer API key")
        if key not in service.config.admin_api_keys:
            raise HTTPException(status_code=403, detail="admin credential required")

    @app.post("/v1/completions")
    def completions(
        payload: dict = Body(...),
        authorization: str | None = Header(default=None),
    ):
        principal_id = _authenticate(authorization)
        claimed = payload.get("principal_id")
        if claimed is not None and claimed != principal_id:
            raise HTTPException(
                status_code=400,
                detail="principal_id does not match the presented API key",
            )
        prompt = payload.get("prompt")
        purpose = payload.get("purpose", "")
        context = payload.get("context")
        if not isinstance(prompt, str) or not prompt:
            raise HTTPException(status_code=400, detail="prompt must be a nonempty string")
        if not isinstance(purpose, str):
            raise HTTPException(status_code=400, detail="purpose must be a string")
        if not isinstance(context, dict):
            raise HTTPException(status_code=400, detail="context object is required")
        try:
            response = service.handle_completion(principal_id, purpose, prompt, context)
        except RequestInvalidError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except UnknownPrincipalError as exc:
            raise HTTPException(status_code=401, detail=str(exc)) from exc
        except PolicyDeniedError as exc:
            raise HTTPException(
                status_code=403,
                detail={
                    "message": "request denied by policy",
                    "matched_rules": list(exc.decision.matched_rule_ids),
                },
            ) from exc
        except BackendError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return response.to_dict()

    @app.get("/v1/audit")
    def audit_query(
        principal: str | None = Query(default=None),
        since: str | None = Query(default=None),
        authorization: str | None = Header(default=None),
    ):
        _require_admin(authorization)
        since_dt = None
        if since is not None:
            try:
                since_dt = datetime.fromisoformat(since)
            except ValueError:
                raise HTTPException(
                    status_code=400, detail="since must be an ISO-8601 timestamp"
                ) from None
            if since_dt.tzinfo is None:
                since_dt = since_dt.replace(tzinfo=timezone.utc)
        records = service.query_audit(principal, since_dt)
        return {"records": [json.loads(r.to_json_line()) for r in records]}

    @app.put("/admin/policy")
    def put_policy(
        body: bytes = Body(..., media_type="text/plain"),
        authorization: str | None = Header(default=None),
    ):
        _require_admin(authorization)
        source = body.decode("utf-8", errors="replace")
        try:
            service.replace_policy(source)
        except PolicyError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"status": "ok", "rules": len(service.policy.rules)}

    @app.get("/healthz")
    def healthz():
        return service.health()

    return app


def service_from_config_path(path: str | Path) -> GatewayService:
    return GatewayService(load_config(path))
