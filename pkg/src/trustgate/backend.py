"""LLM backend integration point: a deterministic mock for tests and
operation without a model, and a remote HTTP client."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import httpx

from .config import BackendSettings

logger = logging.getLogger(__name__)


class BackendError(Exception):
    """Backend call failed; surfaced by the gateway as 502."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class BackendReply:
    text: str
    echoed: bool = False  # mock fallback: prompt not in the fixture table


class MockBackend:
    """Deterministic lookup of the prompt in a JSON fixture map; unknown
    prompts echo back verbatim."""

    backend_id = "mock"

    def __init__(self, fixture: dict[str, str] | None) -> None:
        self.fixture = dict(fixture or {})

    @classmethod
    def from_settings(cls, settings: BackendSettings) -> "MockBackend":
        if settings.fixture_path is None:
            return cls({})
        with open(settings.fixture_path, encoding="utf-8") as handle:
            data = json.load(handle)
        return cls({str(k): str(v) for k, v in data.items()})

    def generate(self, prompt: str) -> BackendReply:
        text = self.fixture.get(prompt)
        if text is None:
            logger.debug("mock backend: no fixture for prompt, echoing")
            return BackendReply(text=prompt, echoed=True)
        return BackendReply(text=text)


class RemoteBackend:
    """POSTs {"prompt", "max_tokens"} to {base}/generate and returns the
    `text` field of the JSON response. A custom httpx transport can be
    injected for tests."""

    def __init__(
        self,
        base_url: str,
        credential_env: str | None = None,
        timeout_ms: int = 5000,
        max_tokens: int = 256,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.backend_id = self.base_url
        self.credential_env = credential_env
        self.max_tokens = max_tokens
        self._client = httpx.Client(timeout=timeout_ms / 1000.0, transport=transport)

    @classmethod
    def from_settings(cls, settings: BackendSettings) -> "RemoteBackend":
        assert settings.base_url is not None
        return cls(
            base_url=settings.base_url,
            credential_env=settings.credential_env,
            timeout_ms=settings.timeout_ms,
            max_tokens=settings.max_tokens,
        )

    def generate(self, prompt: str) -> BackendReply:
        headers = {}
        if self.credential_env:
            token = os.environ.get(self.credential_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        try:
            response = self._client.post(
                f"{self.base_url}/generate",
                json={"prompt": prompt, "max_tokens": self.max_tokens},
                headers=headers,
            )
        except httpx.HTTPError as exc:
            raise BackendError(f"backend request failed: {exc}") from exc
        if response.status_code < 200 or response.status_code >= 300:
            raise BackendError(
                f"backend returned status {response.status_code}",
                status=response.status_code,
            )
        try:
            return BackendReply(text=str(response.json()["text"]))
        except (ValueError, KeyError) as exc:
            raise BackendError(f"backend response malformed: {exc}") from exc


def build_backend(settings: BackendSettings):
    if settings.kind == "mock":
        return MockBackend.from_settings(settings)
    return RemoteBackend.from_settings(settings)
