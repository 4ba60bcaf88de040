"""Run-log helpers.

Each CLI subcommand starts a fresh ``run_log.jsonl`` in its output directory, so
rerunning a command into the same directory reproduces the log byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

RUN_LOG_NAME = "run_log.jsonl"


def write_audit_entry(audit_path: Path, entry: dict[str, Any]) -> None:
    """Append a JSON-lines entry to a run log file (keys sorted, no timestamps)."""
    audit_path.parent.mkdir(parents=True, exist_ok=True)
    with audit_path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(entry, default=str, sort_keys=True) + "\n")


def start_run_log(out_dir: Path) -> None:
    """Discard the entries of any earlier run in ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RUN_LOG_NAME).write_text("", encoding="utf-8")


def record_run(out_dir: Path, action: str, **fields: Any) -> None:
    """Log one CLI action into ``<out_dir>/run_log.jsonl``."""
    write_audit_entry(out_dir / RUN_LOG_NAME, {"action": action, **fields})


def read_run_log(out_dir: Path) -> list[dict[str, Any]]:
    path = out_dir / RUN_LOG_NAME
    if not path.exists():
        return []
    with path.open("r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
