"""DLP corpus scanning: classify files on disk with the sensitivity engine.

A file is treated as binary (skipped, with a notice) when its first 8192
bytes contain a NUL byte. Findings are per-file and independent; report
totals are the sums of per-file counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .sensitivity import SensitivityEngine, SensitivityLevel

SCHEMA_VERSION = 1
BINARY_SNIFF_BYTES = 8192

EXIT_CLEAN = 0
EXIT_IO_ERROR = 1
EXIT_FINDINGS = 2


@dataclass(frozen=True)
class FileFinding:
    path: str
    level: SensitivityLevel | None  # None for skipped or errored files
    counts: dict[str, int] = field(default_factory=dict)
    skipped_binary: bool = False
    error: str | None = None


@dataclass(frozen=True)
class ScanReport:
    findings: tuple[FileFinding, ...]
    totals: dict[str, int]
    min_level: SensitivityLevel
    exit_code: int

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "min_level": self.min_level.name.lower(),
            "files": [
                {
                    "path": f.path,
                    "level": f.level.name.lower() if f.level is not None else None,
                    "counts": f.counts,
                    "skipped_binary": f.skipped_binary,
                    "error": f.error,
                }
                for f in self.findings
            ],
            "totals": self.totals,
            "exit_code": self.exit_code,
        }


def is_binary(first_bytes: bytes) -> bool:
    return b"\x00" in first_bytes


def _iter_files(paths: list[Path]) -> list[Path]:
    files: list[Path] = []
    for path in paths:
        if path.is_dir():
            files.extend(p for p in sorted(path.rglob("*")) if p.is_file())
        else:
            files.append(path)
    return sorted(set(files))


def _scan_file(path: Path, engine: SensitivityEngine) -> FileFinding:
    try:
        with open(path, "rb") as handle:
            head = handle.read(BINARY_SNIFF_BYTES)
            if is_binary(head):
                return FileFinding(path=str(path), level=None, skipped_binary=True)
            rest = handle.read()
    except OSError as exc:
        return FileFinding(path=str(path), level=None, error=str(exc))
    text = (head + rest).decode("utf-8", errors="replace")
    report = engine.analyze(text)
    return FileFinding(path=str(path), level=report.level, counts=dict(report.counts))


def scan_paths(
    paths: list[str | Path],
    engine: SensitivityEngine,
    min_level: SensitivityLevel = SensitivityLevel.CONFIDENTIAL,
) -> ScanReport:
    """Scan files (directories recurse) and classify each independently.

    Exit code semantics: 1 when any path failed to read, else 2 when any
    file classified at or above `min_level`, else 0.
    """
    resolved: list[Path] = []
    findings: list[FileFinding] = []
    for raw in paths:
        path = Path(raw)
        if not path.exists():
            findings.append(
                FileFinding(path=str(path), level=None, error="no such file or directory")
            )
        else:
            resolved.append(path)

    findings.extend(_scan_file(path, engine) for path in _iter_files(resolved))
    findings.sort(key=lambda f: f.path)

    totals: dict[str, int] = {}
    for finding in findings:
        for entity_type, count in finding.counts.items():
            totals[entity_type] = totals.get(entity_type, 0) + count

    if any(f.error for f in findings):
        exit_code = EXIT_IO_ERROR
    elif any(f.level is not None and f.level >= min_level for f in findings):
        exit_code = EXIT_FINDINGS
    else:
        exit_code = EXIT_CLEAN
    return ScanReport(
        findings=tuple(findings),
        totals=totals,
        min_level=min_level,
        exit_code=exit_code,
    )
