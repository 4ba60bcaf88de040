"""Tests for motifstore.data.audit."""

from __future__ import annotations

import json
from pathlib import Path

from motifstore.data.audit import RUN_LOG_NAME, read_run_log, record_run, start_run_log, write_audit_entry


class TestWriteAuditEntry:
    def test_creates_file_and_writes_entry(self, tmp_path: Path) -> None:
        audit_file = tmp_path / "audit" / "test.jsonl"
        write_audit_entry(audit_file, {"action": "test", "count": 1})
        assert audit_file.exists()
        entry = json.loads(audit_file.read_text().strip())
        assert entry["action"] == "test"
        assert entry["count"] == 1

    def test_appends_multiple_entries(self, tmp_path: Path) -> None:
        audit_file = tmp_path / "log.jsonl"
        write_audit_entry(audit_file, {"n": 1})
        write_audit_entry(audit_file, {"n": 2})
        write_audit_entry(audit_file, {"n": 3})
        lines = audit_file.read_text().strip().split("\n")
        assert len(lines) == 3
        assert json.loads(lines[2])["n"] == 3

    def test_keys_are_sorted(self, tmp_path: Path) -> None:
        audit_file = tmp_path / "sorted.jsonl"
        write_audit_entry(audit_file, {"b": 1, "a": 2})
        assert audit_file.read_text() == '{"a": 2, "b": 1}\n'

    def test_serializes_paths(self, tmp_path: Path) -> None:
        audit_file = tmp_path / "paths.jsonl"
        write_audit_entry(audit_file, {"out": tmp_path / "x"})
        assert json.loads(audit_file.read_text())["out"] == str(tmp_path / "x")


class TestRunLog:
    def test_record_and_read(self, tmp_path: Path) -> None:
        record_run(tmp_path, "encode", blocks=6)
        record_run(tmp_path, "simulate", reads=48)
        entries = read_run_log(tmp_path)
        assert [e["action"] for e in entries] == ["encode", "simulate"]
        assert entries[1]["reads"] == 48
        assert (tmp_path / RUN_LOG_NAME).exists()

    def test_missing_log_is_empty(self, tmp_path: Path) -> None:
        assert read_run_log(tmp_path / "nowhere") == []

    def test_start_discards_earlier_entries(self, tmp_path: Path) -> None:
        record_run(tmp_path, "encode", blocks=6)
        start_run_log(tmp_path)
        assert read_run_log(tmp_path) == []
        record_run(tmp_path, "simulate", reads=48)
        assert [e["action"] for e in read_run_log(tmp_path)] == ["simulate"]

    def test_start_creates_directory(self, tmp_path: Path) -> None:
        start_run_log(tmp_path / "new")
        assert (tmp_path / "new" / RUN_LOG_NAME).read_text() == ""
