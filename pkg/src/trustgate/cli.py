"""Operator command line: DLP scanning, policy linting, audit replay,
synthetic-session simulation, and serving the gateway.

Exit codes are stable contracts: 0 clean, 1 I/O or parse failure, 2 findings
or diagnostics (scan / policy check).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .audit import AuditRecord
from .config import ENV_CONFIG_VAR, ConfigError, DEFAULT_CONFIG_PATH, load_config
from .policy import PolicyError, parse_policy, validate_policy
from .scanner import scan_paths
from .sensitivity import SensitivityLevel, default_engine
from .simulate import SimulationSpec, run_simulation

LEVEL_NAMES = [level.name.lower() for level in SensitivityLevel]


def _load_config_or_exit(config_path: str | None):
    path = config_path or DEFAULT_CONFIG_PATH
    try:
        return load_config(path)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@click.group()
def main() -> None:
    """trustgate operator tools."""


@main.command()
@click.option(
    "--path", "paths", multiple=True, required=True,
    help="File or directory to scan (repeatable).",
)
@click.option(
    "--min-level", default="confidential", show_default=True,
    type=click.Choice(LEVEL_NAMES),
    help="Findings at or above this level set exit code 2.",
)
@click.option(
    "--format", "output_format", default="table", show_default=True,
    type=click.Choice(["table", "json"]),
)
@click.option(
    "--config", "config_path", default=None,
    help="Gateway config supplying the recognizer set (defaults to the shipped set).",
)
def scan(paths, min_level, output_format, config_path) -> None:
    """Scan files for sensitive data and classify each one."""
    if config_path is not None:
        engine = _load_config_or_exit(config_path).engine
    else:
        engine = default_engine()
    report = scan_paths(list(paths), engine, SensitivityLevel.from_name(min_level))

    if output_format == "json":
        click.echo(json.dumps(report.to_dict(), indent=2))
    else:
        for finding in report.findings:
            if finding.error:
                status = f"ERROR: {finding.error}"
            elif finding.skipped_binary:
                status = "skipped (binary)"
            else:
                counts = ", ".join(
                    f"{k}={v}" for k, v in sorted(finding.counts.items())
                ) or "-"
                status = f"{finding.level.name.lower():<12} {counts}"
            click.echo(f"{finding.path}: {status}")
        totals = ", ".join(f"{k}={v}" for k, v in sorted(report.totals.items())) or "none"
        click.echo(f"totals: {totals}")
    sys.exit(report.exit_code)


@main.group()
def policy() -> None:
    """Policy file tools."""


@policy.command("check")
@click.argument("policy_file", type=click.Path(path_type=Path))
def policy_check(policy_file: Path) -> None:
    """Parse and lint a policy file. Exit 0 clean, 2 with diagnostics,
    1 on parse failure."""
    try:
        source = policy_file.read_text(encoding="utf-8")
    except OSError as exc:
        click.echo(f"error: cannot read {policy_file}: {exc}", err=True)
        sys.exit(1)
    try:
        parsed = parse_policy(source)
    except PolicyError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(1)
    diagnostics = validate_policy(parsed)
    if not diagnostics:
        click.echo(f"ok: {len(parsed.rules)} rules, no diagnostics")
        sys.exit(0)
    for diag in diagnostics:
        click.echo(f"{diag.kind}: rule {diag.rule_id!r}: {diag.message}")
    sys.exit(2)


@main.command()
@click.argument("audit_file", type=click.Path(path_type=Path))
@click.option(
    "--format", "output_format", default="table", show_default=True,
    type=click.Choice(["table", "json"]),
)
def replay(audit_file: Path, output_format: str) -> None:
    """Summarize a JSONL audit file: per-tier counts, action distribution,
    anomaly and denial rates. Malformed lines are counted, not fatal."""
    try:
        lines = audit_file.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        click.echo(f"error: cannot read {audit_file}: {exc}", err=True)
        sys.exit(1)

    records: list[AuditRecord] = []
    malformed = 0
    for line in lines:
        if not line.strip():
            continue
        try:
            records.append(AuditRecord.from_json(line))
        except (ValueError, KeyError):
            malformed += 1

    tier_counts: dict[str, int] = {}
    action_counts: dict[str, int] = {}
    anomalies = 0
    denials = 0
    for record in records:
        tier_key = str(record.tier) if record.tier is not None else "unscored"
        tier_counts[tier_key] = tier_counts.get(tier_key, 0) + 1
        for action in record.action_set:
            action_counts[action] = action_counts.get(action, 0) + 1
        if record.anomaly_flag:
            anomalies += 1
        if "deny" in record.action_set:
            denials += 1

    total = len(records)
    summary = {
        "schema": 1,
        "records": total,
        "malformed": malformed,
        "tier_counts": dict(sorted(tier_counts.items())),
        "action_counts": dict(sorted(action_counts.items())),
        "anomaly_rate": (anomalies / total) if total else 0.0,
        "denial_rate": (denials / total) if total else 0.0,
    }
    if output_format == "json":
        click.echo(json.dumps(summary, indent=2))
    else:
        click.echo(f"records: {total} ({malformed} malformed)")
        click.echo(f"tiers:   {summary['tier_counts'] or '{}'}")
        click.echo(f"actions: {summary['action_counts'] or '{}'}")
        click.echo(f"anomaly rate: {summary['anomaly_rate']:.3f}")
        click.echo(f"denial rate:  {summary['denial_rate']:.3f}")
    sys.exit(0)


@main.command()
@click.option("--sessions", default=100, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--config", "config_path", default=None, help="Gateway config file.")
@click.option(
    "--tier-mix", default="0.25,0.25,0.25,0.25", show_default=True,
    help="Comma-separated tier 0-3 proportions (must sum to 1).",
)
def simulate(sessions: int, seed: int, config_path: str | None, tier_mix: str) -> None:
    """Drive the in-process pipeline with seeded synthetic sessions."""
    config = _load_config_or_exit(config_path)
    try:
        mix = tuple(float(p) for p in tier_mix.split(","))
        spec = SimulationSpec(sessions=sessions, seed=seed, tier_mix=mix)  # type: ignore[arg-type]
        metrics = run_simulation(config, spec)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(metrics.to_dict(), indent=2))
    sys.exit(0)


@main.command()
@click.option(
    "--config", "config_path", default=None, envvar=ENV_CONFIG_VAR,
    help=f"Gateway config file (or ${ENV_CONFIG_VAR}).",
)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, type=int)
def serve(config_path: str | None, host: str, port: int) -> None:
    """Launch the gateway HTTP service."""
    import uvicorn

    from .gateway import GatewayService, create_app

    config = _load_config_or_exit(config_path)
    app = create_app(GatewayService(config))
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
