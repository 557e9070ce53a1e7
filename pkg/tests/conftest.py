from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path
from typing import Any

import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from trustgate.config import DEFAULTS_DIR, Config, load_config

TEST_FIXTURES = {
    "hello": "Hello! How can I help you today?",
    "weather": "Forecast for tomorrow: partly cloudy, high of 21C.",
    "ssn-note": "Records updated. SSN: 123-45-6789 on file. Nothing else changed.",
    "card-note": "Charge went to card 4111 1111 1111 1111 as requested.",
    "email-note": "Send the agenda to team@example.com before Friday. Thanks!",
    "amount-note": "The outstanding balance is $250.00 as of this morning.",
}


def deep_update(base: dict, overrides: dict) -> dict:
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            deep_update(base[key], value)
        else:
            base[key] = value
    return base


def write_gateway_config(
    tmp_path: Path,
    overrides: dict[str, Any] | None = None,
    fixtures: dict[str, str] | None = None,
    policy_text: str | None = None,
) -> Path:
    """Materialize a complete, valid gateway config under tmp_path, based on
    the shipped defaults, with audit/state/rng pinned for tests."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    data = yaml.safe_load((DEFAULTS_DIR / "config.yaml").read_text())
    fixture_path = tmp_path / "fixtures.json"
    fixture_path.write_text(json.dumps(fixtures or TEST_FIXTURES))
    gateway = data["gateway"]
    gateway["backend"]["fixture"] = "fixtures.json"
    gateway["audit_path"] = "audit.jsonl"
    gateway["state_path"] = "state.json"
    gateway["rng_seed"] = 1234
    if policy_text is not None:
        gateway.pop("policy_file", None)
        gateway["policy_text"] = policy_text
    else:
        shutil.copy(DEFAULTS_DIR / "gateway.policy", tmp_path / "gateway.policy")
    if overrides:
        deep_update(data, overrides)
    config_path = tmp_path / "config.yaml"
    config_path.write_text(yaml.safe_dump(data))
    return config_path


@pytest.fixture
def gateway_config(tmp_path) -> Config:
    return load_config(write_gateway_config(tmp_path))


# Trust-tier request templates valid under the default config with a fresh
# behavior prior (B = 0.5): raw scores 0.2733, 0.4267, 0.76, 0.90.
TIER_REQUESTS = {
    0: {
        "principal": "dave",
        "purpose": "curiosity",
        "context": {
            "network_zone": "public",
            "device_posture": "unknown",
            "auth_strength": "password",
        },
    },
    1: {
        "principal": "dave",
        "purpose": "",
        "context": {
            "network_zone": "vpn",
            "device_posture": "managed",
            "auth_strength": "password",
        },
    },
    2: {
        "principal": "bob",
        "purpose": "research",
        "context": {
            "network_zone": "trusted",
            "device_posture": "managed",
            "auth_strength": "mfa",
        },
    },
    3: {
        "principal": "alice",
        "purpose": "treatment",
        "context": {
            "network_zone": "trusted",
            "device_posture": "managed",
            "auth_strength": "mfa",
        },
    },
}

API_KEYS = {"alice": "key-alice", "bob": "key-bob", "carol": "key-carol", "dave": "key-dave"}
ADMIN_KEY = "admin-key"


def auth_header(principal: str) -> dict[str, str]:
    return {"Authorization": f"Bearer {API_KEYS[principal]}"}


def completion_body(tier: int, prompt: str) -> dict:
    spec = TIER_REQUESTS[tier]
    return {"purpose": spec["purpose"], "prompt": prompt, "context": dict(spec["context"])}
