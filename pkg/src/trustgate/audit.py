"""Append-only JSONL audit log of every gateway decision.

Records are privacy-safe by construction: entity types and counts only,
plus a hash of the raw model output — never matched sensitive text. Each
append is one atomic line write, so concurrent requests cannot interleave
partial records.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

_FIELDS = (
    "request_id",
    "timestamp",
    "principal_id",
    "tier",
    "raw_score",
    "level",
    "action_set",
    "entity_type_counts",
    "output_hash",
    "anomaly_flag",
    "backend_id",
    "latency_ms",
)


@dataclass(frozen=True)
class AuditRecord:
    """One gateway decision. Refusal records (401/403) carry null tier,
    level, output_hash, and backend_id; successful records carry all fields."""

    request_id: str
    timestamp: str  # ISO-8601 UTC
    principal_id: str
    tier: int | None
    raw_score: float | None
    level: str | None
    action_set: tuple[str, ...]
    entity_type_counts: dict[str, int]
    output_hash: str | None
    anomaly_flag: bool
    backend_id: str | None
    latency_ms: float

    def to_json_line(self) -> str:
        data = asdict(self)
        data["action_set"] = list(self.action_set)
        return json.dumps({k: data[k] for k in _FIELDS}, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, line: str) -> "AuditRecord":
        data = json.loads(line)
        return cls(
            request_id=str(data["request_id"]),
            timestamp=str(data["timestamp"]),
            principal_id=str(data["principal_id"]),
            tier=data.get("tier"),
            raw_score=data.get("raw_score"),
            level=data.get("level"),
            action_set=tuple(data.get("action_set") or ()),
            entity_type_counts=dict(data.get("entity_type_counts") or {}),
            output_hash=data.get("output_hash"),
            anomaly_flag=bool(data.get("anomaly_flag", False)),
            backend_id=data.get("backend_id"),
            latency_ms=float(data.get("latency_ms", 0.0)),
        )


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class AuditLog:
    """Single-writer append log. Appends never raise: sink failures are
    counted and surfaced through `error_count` (reported on the health
    endpoint) while the request itself proceeds."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._handle = None
        self.error_count = 0

    def append(self, record: AuditRecord) -> bool:
        line = record.to_json_line()
        with self._lock:
            try:
                if self._handle is None:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    self._handle = open(self.path, "a", encoding="utf-8")
                self._handle.write(line)
                self._handle.flush()
                return True
            except OSError as exc:
                self.error_count += 1
                self._handle = None
                logger.warning("audit append failed: %s", exc)
                return False

    def query(
        self,
        principal: str | None = None,
        since: datetime | None = None,
    ) -> list[AuditRecord]:
        """Records filtered by principal and minimum timestamp, in
        chronological (file) order. Malformed lines are skipped."""
        records: list[AuditRecord] = []
        try:
            with open(self.path, encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = AuditRecord.from_json(line)
                    except (ValueError, KeyError):
                        continue
                    if principal is not None and record.principal_id != principal:
                        continue
                    if since is not None:
                        try:
                            stamp = datetime.fromisoformat(record.timestamp)
                        except ValueError:
                            continue
                        if stamp.tzinfo is None:
                            stamp = stamp.replace(tzinfo=timezone.utc)
                        if stamp < since:
                            continue
                    records.append(record)
        except FileNotFoundError:
            return []
        return records

    def close(self) -> None:
        with self._lock:
            if self._handle is not None:
                self._handle.close()
                self._handle = None
