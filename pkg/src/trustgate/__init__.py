"""trustgate: a trust-aware LLM gateway.

Scores caller trust from roles, purpose, context, and behavior; detects
sensitive content in model output with rule-based recognizers; and adaptively
transforms responses (pass, summarize, redact, noise, deny) before
disclosure, with full audit logging and a DLP scanning CLI.
"""

from .behavior import (
    BehaviorAction,
    BehaviorEvent,
    BehaviorState,
    HmmModel,
    behavior_score,
    flag_anomaly,
    forward_loglik,
    update_posterior,
)
from .config import Config, ConfigError, load_config, load_default_config
from .disclosure import (
    ControlledOutput,
    DisclosureAction,
    DisclosureMatrix,
    decide_action,
    extractive_filter_summary,
    laplace_noise,
    redact,
    transform,
)
from .gateway import ChatRequest, ChatResponse, GatewayService, create_app
from .policy import (
    Decision,
    Effect,
    Policy,
    PolicyError,
    Rule,
    evaluate,
    format_policy,
    parse_policy,
    validate_policy,
)
from .sensitivity import (
    EntitySpan,
    Recognizer,
    SensitivityEngine,
    SensitivityLevel,
    SensitivityReport,
    classify_document,
    context_adjust,
    detect,
    luhn_valid,
    merge_spans,
)
from .trust import (
    AuthStrength,
    DevicePosture,
    NetworkZone,
    Principal,
    RequestContext,
    TrustScore,
    TrustScorer,
    TrustWeights,
    tier_of,
)

__version__ = "0.1.0"
