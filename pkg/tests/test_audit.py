from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta, timezone

from trustgate.audit import AuditLog, AuditRecord, utc_now_iso


def make_record(i: int = 0, principal: str = "alice") -> AuditRecord:
    return AuditRecord(
        request_id=f"r{i:032d}",
        timestamp=utc_now_iso(),
        principal_id=principal,
        tier=2,
        raw_score=0.7,
        level="internal",
        action_set=("pass",),
        entity_type_counts={"EMAIL": 1},
        output_hash="cd" * 32,
        anomaly_flag=False,
        backend_id="mock",
        latency_ms=1.25,
    )


def test_append_then_query_round_trips(tmp_path):
    log = AuditLog(tmp_path / "audit.jsonl")
    record = make_record()
    assert log.append(record) is True
    (got,) = log.query(principal="alice")
    assert got == record
    log.close()


def test_query_future_since_is_empty(tmp_path):
    log = AuditLog(tmp_path / "audit.jsonl")
    log.append(make_record())
    future = datetime.now(timezone.utc) + timedelta(days=1)
    assert log.query(since=future) == []
    log.close()


def test_query_since_includes_newer(tmp_path):
    log = AuditLog(tmp_path / "audit.jsonl")
    log.append(make_record())
    past = datetime.now(timezone.utc) - timedelta(days=1)
    assert len(log.query(since=past)) == 1
    log.close()


def test_query_skips_malformed_lines(tmp_path):
    path = tmp_path / "audit.jsonl"
    log = AuditLog(path)
    log.append(make_record())
    with open(path, "a") as handle:
        handle.write("not json at all\n")
    log.append(make_record(1))
    assert len(log.query()) == 2
    log.close()


def test_missing_file_queries_empty(tmp_path):
    log = AuditLog(tmp_path / "never-written.jsonl")
    assert log.query() == []


def test_concurrent_appends_no_interleaving(tmp_path):
    """1000 appends from a thread pool produce exactly 1000 well-formed
    lines (line-count + parse-all oracle)."""
    path = tmp_path / "audit.jsonl"
    log = AuditLog(path)
    with ThreadPoolExecutor(max_workers=32) as pool:
        results = list(pool.map(lambda i: log.append(make_record(i)), range(1000)))
    log.close()
    assert all(results)
    lines = path.read_text().splitlines()
    assert len(lines) == 1000
    ids = {json.loads(line)["request_id"] for line in lines}
    assert len(ids) == 1000


def test_sink_failure_counts_and_reports_false(tmp_path):
    target = tmp_path / "audit.jsonl"
    target.mkdir()  # appending to a directory fails
    log = AuditLog(target)
    assert log.append(make_record()) is False
    assert log.append(make_record(1)) is False
    assert log.error_count == 2
