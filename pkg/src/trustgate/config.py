"""Gateway configuration: one YAML file validated eagerly at load.

Every validation failure raises ConfigError naming the offending key
(e.g. `trust.weights`, `disclosure.matrix.secret[3]`), so a bad config
aborts startup with an actionable message instead of failing mid-request.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .behavior import (
    ACTION_ALPHABET,
    DEFAULT_ANOMALY_THRESHOLD,
    DEFAULT_HMM,
    DEFAULT_RING_SIZE,
    DEFAULT_VIOLATION_WEIGHT,
    HmmModel,
)
from .disclosure import (
    DEFAULT_EPSILON_PER_TIER,
    DEFAULT_MATRIX,
    DEFAULT_PLACEHOLDER_TEMPLATE,
    DEFAULT_SUMMARIZE_CAP,
    DisclosureAction,
    DisclosureMatrix,
    MatrixValidationError,
)
from .policy import DEFAULT_ATTRIBUTE_SCHEMA, Policy, PolicyError, parse_policy
from .sensitivity import (
    DEFAULT_COUNTING_THRESHOLD,
    DEFAULT_CONTEXT_WINDOW,
    DEFAULT_RECOGNIZERS,
    DEFAULT_TYPE_LEVELS,
    Recognizer,
    SensitivityEngine,
    SensitivityLevel,
)
from .trust import (
    DEFAULT_AUTH_FACTORS,
    DEFAULT_DEVICE_FACTORS,
    DEFAULT_NETWORK_FACTORS,
    DEFAULT_TIER_THRESHOLDS,
    DEFAULT_UNKNOWN_PURPOSE_SCORE,
    Principal,
    TrustScorer,
    TrustWeights,
)

DEFAULTS_DIR = Path(__file__).parent / "defaults"
DEFAULT_CONFIG_PATH = DEFAULTS_DIR / "config.yaml"

ENV_CONFIG_VAR = "TRUSTGATE_CONFIG"

DEFAULT_AUDIT_FILENAME = "trustgate-audit.jsonl"
DEFAULT_STATE_FILENAME = "trustgate-state.json"


class ConfigError(Exception):
    """A configuration validation failure, naming the offending key."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"config error at {key}: {message}")
        self.key = key


@dataclass(frozen=True)
class BackendSettings:
    kind: str  # "mock" | "remote"
    fixture_path: Path | None = None
    base_url: str | None = None
    credential_env: str | None = None
    timeout_ms: int = 5000
    max_tokens: int = 256


@dataclass(frozen=True)
class Config:
    """Validated configuration with all engines constructed."""

    scorer: TrustScorer
    engine: SensitivityEngine
    matrix: DisclosureMatrix
    hmm: HmmModel
    policy: Policy
    policy_source: str
    principals: dict[str, Principal]
    api_keys: dict[str, str]
    admin_api_keys: frozenset[str]
    backend: BackendSettings
    audit_path: Path
    state_path: Path
    violation_weight: float = DEFAULT_VIOLATION_WEIGHT
    ring_size: int = DEFAULT_RING_SIZE
    anomaly_threshold: float = DEFAULT_ANOMALY_THRESHOLD
    scan_prompt: bool = False
    rng_seed: int | None = None
    attribute_schema: frozenset[str] = field(default=DEFAULT_ATTRIBUTE_SCHEMA)


def _section(data: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, Mapping):
        raise ConfigError(key, "must be a mapping")
    return value


def _number(section: Mapping[str, Any], key: str, default: float) -> float:
    value = section.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(key, f"must be a number, got {value!r}")
    return float(value)


def _level(name: Any, key: str) -> SensitivityLevel:
    try:
        return SensitivityLevel.from_name(str(name))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from exc


def _build_trust(section: Mapping[str, Any]) -> TrustScorer:
    weights_map = section.get("weights") or {}
    weights = TrustWeights(
        role=_number(weights_map, "role", 0.4),
        purpose=_number(weights_map, "purpose", 0.2),
        context=_number(weights_map, "context", 0.2),
        behavior=_number(weights_map, "behavior", 0.2),
    )
    try:
        weights.validate()
    except ValueError as exc:
        raise ConfigError("trust.weights", str(exc)) from exc

    thresholds_raw = section.get("tier_thresholds", list(DEFAULT_TIER_THRESHOLDS))
    if not isinstance(thresholds_raw, list) or len(thresholds_raw) != 3:
        raise ConfigError("trust.tier_thresholds", "must list exactly 3 values")
    thresholds = tuple(float(t) for t in thresholds_raw)

    role_weights = dict(section.get("role_weights") or {})
    purpose_scores = dict(section.get("purpose_scores") or {})
    try:
        return TrustScorer(
            role_weights=role_weights,
            purpose_scores=purpose_scores,
            weights=weights,
            thresholds=thresholds,  # type: ignore[arg-type]
            network_factors=dict(
                section.get("network_factors") or DEFAULT_NETWORK_FACTORS
            ),
            device_factors=dict(
                section.get("device_factors") or DEFAULT_DEVICE_FACTORS
            ),
            auth_factors=dict(section.get("auth_factors") or DEFAULT_AUTH_FACTORS),
            unknown_purpose_score=_number(
                section, "unknown_purpose_score", DEFAULT_UNKNOWN_PURPOSE_SCORE
            ),
        )
    except ValueError as exc:
        raise ConfigError("trust", str(exc)) from exc


def _build_sensitivity(section: Mapping[str, Any]) -> SensitivityEngine:
    type_levels = dict(DEFAULT_TYPE_LEVELS)
    for name, level in (section.get("type_levels") or {}).items():
        type_levels[str(name)] = _level(level, f"sensitivity.type_levels.{name}")

    raw = section.get("recognizers", "default")
    if raw == "default" or raw is None:
        recognizers: list[Recognizer] = list(DEFAULT_RECOGNIZERS)
    else:
        if not isinstance(raw, list):
            raise ConfigError(
                "sensitivity.recognizers", "must be 'default' or a list"
            )
        recognizers = []
        for i, item in enumerate(raw):
            rec_id = str(item.get("id", f"recognizer[{i}]"))
            try:
                recognizers.append(
                    Recognizer(
                        id=rec_id,
                        entity_type=str(item["entity_type"]),
                        pattern=str(item["pattern"]),
                        base_confidence=float(item.get("base_confidence", 0.5)),
                        validator=str(item.get("validator", "none")),
                        context_words=tuple(item.get("context_words", ())),
                        numeric=bool(item.get("numeric", False)),
                    )
                )
            except KeyError as exc:
                raise ConfigError(
                    f"sensitivity.recognizers[{rec_id}]", f"missing field {exc}"
                ) from exc
            except ValueError as exc:
                raise ConfigError(
                    f"sensitivity.recognizers[{rec_id}]", str(exc)
                ) from exc
    try:
        return SensitivityEngine(
            recognizers=recognizers,
            type_levels=type_levels,
            counting_threshold=_number(
                section, "counting_threshold", DEFAULT_COUNTING_THRESHOLD
            ),
            context_window=int(
                _number(section, "context_window", DEFAULT_CONTEXT_WINDOW)
            ),
        )
    except ValueError as exc:
        raise ConfigError("sensitivity", str(exc)) from exc


def _build_matrix(section: Mapping[str, Any]) -> DisclosureMatrix:
    matrix_map = section.get("matrix")
    if matrix_map is None:
        table = None
    else:
        table = {}
        for level_name, row in matrix_map.items():
            level = _level(level_name, f"disclosure.matrix.{level_name}")
            if not isinstance(row, list):
                raise ConfigError(
                    f"disclosure.matrix.{level_name}", "must list 4 actions"
                )
            actions = []
            for tier, cell in enumerate(row):
                try:
                    actions.append(DisclosureAction(str(cell)))
                except ValueError:
                    raise ConfigError(
                        f"disclosure.matrix.{level_name}[{tier}]",
                        f"unknown action {cell!r}",
                    ) from None
            table[level] = tuple(actions)

    epsilons = section.get("epsilon_per_tier", list(DEFAULT_EPSILON_PER_TIER))
    matrix = DisclosureMatrix(
        table=table if table is not None else DEFAULT_MATRIX.table,
        placeholder_template=str(
            section.get("placeholder_template", DEFAULT_PLACEHOLDER_TEMPLATE)
        ),
        epsilon_per_tier=tuple(float(e) for e in epsilons),
        summarize_cap=int(_number(section, "summarize_cap", DEFAULT_SUMMARIZE_CAP)),
    )
    try:
        matrix.validate()
    except MatrixValidationError as exc:
        key = f"disclosure.matrix.{exc.cell}" if exc.cell else "disclosure.matrix"
        raise ConfigError(key, str(exc)) from exc
    return matrix


def _build_hmm(section: Mapping[str, Any]) -> HmmModel:
    hmm_map = section.get("hmm")
    if not hmm_map:
        return DEFAULT_HMM
    states = tuple(str(s) for s in hmm_map.get("states", ("NORMAL", "SUSPECT")))
    alphabet = tuple(str(a) for a in hmm_map.get("alphabet", ACTION_ALPHABET))
    emission_map = hmm_map.get("emission") or {}
    try:
        emission_rows = []
        for state in states:
            row_map = emission_map[state]
            emission_rows.append([float(row_map[symbol]) for symbol in alphabet])
    except KeyError as exc:
        raise ConfigError("behavior.hmm.emission", f"missing entry {exc}") from exc
    try:
        return HmmModel(
            states=states,
            alphabet=alphabet,
            initial=np.array([float(x) for x in hmm_map["initial"]]),
            transition=np.array(
                [[float(x) for x in row] for row in hmm_map["transition"]]
            ),
            emission=np.array(emission_rows),
        )
    except KeyError as exc:
        raise ConfigError("behavior.hmm", f"missing field {exc}") from exc
    except ValueError as exc:
        raise ConfigError("behavior.hmm", str(exc)) from exc


def _build_principals(
    section: Mapping[str, Any], scorer: TrustScorer
) -> dict[str, Principal]:
    principals: dict[str, Principal] = {}
    for pid, spec in (section.get("principals") or {}).items():
        spec = spec or {}
        roles = frozenset(str(r) for r in spec.get("roles", ()))
        for role in roles:
            if role not in scorer.role_weights:
                raise ConfigError(
                    f"gateway.principals.{pid}.roles",
                    f"role {role!r} is not in trust.role_weights",
                )
        attributes = {str(k): str(v) for k, v in (spec.get("attributes") or {}).items()}
        try:
            principals[str(pid)] = Principal(
                id=str(pid), roles=roles, attributes=attributes
            )
        except ValueError as exc:
            raise ConfigError(f"gateway.principals.{pid}", str(exc)) from exc
    return principals


def _build_backend(section: Mapping[str, Any], base_dir: Path) -> BackendSettings:
    backend_map = section.get("backend") or {"kind": "mock"}
    kind = str(backend_map.get("kind", "mock"))
    if kind not in ("mock", "remote"):
        raise ConfigError("gateway.backend.kind", f"unknown kind {kind!r}")
    timeout_ms = int(_number(backend_map, "timeout_ms", 5000))
    max_tokens = int(_number(backend_map, "max_tokens", 256))
    if kind == "mock":
        fixture = backend_map.get("fixture")
        fixture_path = _resolve(base_dir, fixture) if fixture else None
        return BackendSettings(
            kind="mock", fixture_path=fixture_path,
            timeout_ms=timeout_ms, max_tokens=max_tokens,
        )
    base_url = backend_map.get("base_url")
    if not base_url:
        raise ConfigError("gateway.backend.base_url", "required for remote backend")
    return BackendSettings(
        kind="remote",
        base_url=str(base_url).rstrip("/"),
        credential_env=backend_map.get("credential_env"),
        timeout_ms=timeout_ms,
        max_tokens=max_tokens,
    )


def _resolve(base_dir: Path, value: Any) -> Path:
    path = Path(str(value))
    return path if path.is_absolute() else base_dir / path


def parse_config(data: Mapping[str, Any], base_dir: Path) -> Config:
    """Build and validate a Config from parsed YAML data. Relative paths
    resolve against `base_dir` (the config file's directory)."""
    if not isinstance(data, Mapping):
        raise ConfigError("<root>", "config must be a mapping")

    scorer = _build_trust(_section(data, "trust"))
    engine = _build_sensitivity(_section(data, "sensitivity"))
    matrix = _build_matrix(_section(data, "disclosure"))

    behavior_section = _section(data, "behavior")
    hmm = _build_hmm(behavior_section)
    violation_weight = _number(
        behavior_section, "violation_weight", DEFAULT_VIOLATION_WEIGHT
    )
    if violation_weight < 1:
        raise ConfigError("behavior.violation_weight", "must be >= 1")
    ring_size = int(_number(behavior_section, "ring_size", DEFAULT_RING_SIZE))
    if ring_size < 1:
        raise ConfigError("behavior.ring_size", "must be >= 1")
    anomaly_threshold = _number(
        behavior_section, "anomaly_threshold", DEFAULT_ANOMALY_THRESHOLD
    )

    gateway_section = _section(data, "gateway")
    principals = _build_principals(gateway_section, scorer)

    policy_text = gateway_section.get("policy_text")
    policy_file = gateway_section.get("policy_file")
    if policy_text is not None and policy_file is not None:
        raise ConfigError(
            "gateway.policy_file", "give either policy_file or policy_text, not both"
        )
    if policy_text is None:
        if policy_file is None:
            raise ConfigError("gateway.policy_file", "a policy is required")
        policy_path = _resolve(base_dir, policy_file)
        try:
            policy_text = policy_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("gateway.policy_file", f"cannot read: {exc}") from exc
    try:
        policy = parse_policy(str(policy_text))
    except PolicyError as exc:
        raise ConfigError("gateway.policy", str(exc)) from exc

    api_keys = {
        str(k): str(v) for k, v in (gateway_section.get("api_keys") or {}).items()
    }
    admin_keys = frozenset(
        str(k) for k in gateway_section.get("admin_api_keys", ())
    )

    backend = _build_backend(gateway_section, base_dir)
    if backend.kind == "mock" and backend.fixture_path is not None:
        if not backend.fixture_path.exists():
            raise ConfigError(
                "gateway.backend.fixture",
                f"fixture file not found: {backend.fixture_path}",
            )

    audit_raw = gateway_section.get("audit_path")
    state_raw = gateway_section.get("state_path")
    audit_path = (
        _resolve(base_dir, audit_raw)
        if audit_raw
        else Path.cwd() / DEFAULT_AUDIT_FILENAME
    )
    state_path = (
        _resolve(base_dir, state_raw)
        if state_raw
        else Path.cwd() / DEFAULT_STATE_FILENAME
    )

    schema = set(DEFAULT_ATTRIBUTE_SCHEMA)
    for principal in principals.values():
        schema.update(principal.attributes)
    schema.update(str(s) for s in gateway_section.get("attribute_schema", ()))

    rng_seed = gateway_section.get("rng_seed")
    if rng_seed is not None:
        rng_seed = int(rng_seed)

    return Config(
        scorer=scorer,
        engine=engine,
        matrix=matrix,
        hmm=hmm,
        policy=policy,
        policy_source=str(policy_text),
        principals=principals,
        api_keys=api_keys,
        admin_api_keys=admin_keys,
        backend=backend,
        audit_path=audit_path,
        state_path=state_path,
        violation_weight=violation_weight,
        ring_size=ring_size,
        anomaly_threshold=anomaly_threshold,
        scan_prompt=bool(gateway_section.get("scan_prompt", False)),
        rng_seed=rng_seed,
        attribute_schema=frozenset(schema),
    )


def load_config(path: str | Path) -> Config:
    """Load and validate the configuration file at `path`."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<config>", f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(raw) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("<config>", f"invalid YAML: {exc}") from exc
    return parse_config(data, path.parent.resolve())


def load_default_config() -> Config:
    """The packaged default configuration."""
    return load_config(DEFAULT_CONFIG_PATH)
