"""Tests for motifstore.cli."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from motifstore.cli import main
from motifstore.data.audit import read_run_log
from motifstore.data.storage import read_calls, read_csv, read_emissions, read_jsonl

SMALL_CONFIG = {"layout": {"n_payload_slots": 2}, "channel": {"coverage": 4}}
CORPUS_FILES = [
    "blocks.json",
    "library.json",
    "pore_model.json",
    "reads.fasta",
    "truth.jsonl",
    "squiggles.sqg",
    "manifest.json",
    "config.json",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Encode and simulate once; later subcommands read the corpus from here."""
    root = tmp_path_factory.mktemp("cli")
    (root / "config.json").write_text(json.dumps(SMALL_CONFIG))
    (root / "data.bin").write_bytes(b"motif storage")
    common = ["--config", str(root / "config.json"), "--seed", "3"]
    assert main(["encode", str(root / "data.bin"), *common, "--out", str(root / "enc")]) == 0
    blocks = str(root / "enc" / "blocks.json")
    assert main(["simulate", blocks, *common, "--threads", "1", "--out", str(root / "sim")]) == 0
    assert main(["simulate", blocks, *common, "--threads", "3", "--out", str(root / "sim3")]) == 0
    return root


def _common(root: Path, threads: int = 1) -> list[str]:
    return ["--config", str(root / "config.json"), "--seed", "3", "--threads", str(threads)]


class TestEncodeSimulate:
    def test_corpus_files(self, workspace: Path) -> None:
        sim = workspace / "sim"
        for name in CORPUS_FILES:
            assert (sim / name).exists(), name
        manifest = json.loads((sim / "manifest.json").read_text())
        assert manifest["n_blocks"] == 9
        assert manifest["n_reads"] == 36
        assert not list(sim.glob("*.partial"))

    def test_outputs_independent_of_threads(self, workspace: Path) -> None:
        for name in [*CORPUS_FILES, "run_log.jsonl"]:
            assert (workspace / "sim" / name).read_bytes() == (workspace / "sim3" / name).read_bytes(), name

    def test_rerun_into_same_directory(self, workspace: Path, tmp_path: Path) -> None:
        args = ["simulate", str(workspace / "enc" / "blocks.json"), *_common(workspace), "--out", str(tmp_path)]
        assert main(args) == 0
        first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
        assert main(args) == 0
        assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first
        entries = read_run_log(tmp_path)
        assert len(entries) == 1
        assert not Path(entries[0]["blocks"]).is_absolute()
        assert (tmp_path / entries[0]["blocks"]).resolve() == (workspace / "enc" / "blocks.json").resolve()

    def test_run_log(self, workspace: Path) -> None:
        entries = read_run_log(workspace / "sim")
        assert entries[-1]["action"] == "simulate"
        assert entries[-1]["reads"] == 36

    def test_layout_mismatch(self, workspace: Path, tmp_path: Path) -> None:
        code = main(["simulate", str(workspace / "enc" / "blocks.json"), "--out", str(tmp_path)])
        assert code == 1


class TestDecode:
    def test_search_pipelines(self, workspace: Path, tmp_path: Path) -> None:
        for method in ("ze", "am"):
            args = ["search", str(workspace / "sim"), "--method", method, *_common(workspace), "--out", str(tmp_path)]
            assert main(args) == 0
            header, records = read_calls(tmp_path / f"calls_{method}.jsonl")
            assert header["pipeline"] == method
            assert len(records) == 36
            assert [r["read_id"] for r in records] == sorted(r["read_id"] for r in records)

    def test_search_calls_independent_of_threads(self, workspace: Path, tmp_path: Path) -> None:
        one, four = tmp_path / "one", tmp_path / "four"
        assert main(["search", str(workspace / "sim"), *_common(workspace, 1), "--out", str(one)]) == 0
        assert main(["search", str(workspace / "sim"), *_common(workspace, 4), "--out", str(four)]) == 0
        assert (one / "calls_am.jsonl").read_bytes() == (four / "calls_am.jsonl").read_bytes()

    def test_call_with_emissions(self, workspace: Path, tmp_path: Path) -> None:
        assert main(["call", str(workspace / "sim"), "--emissions", *_common(workspace), "--out", str(tmp_path)]) == 0
        _, records = read_calls(tmp_path / "calls_caller.jsonl")
        assert len(records) == 36
        assert {r["status"] for r in records} <= {"retained", "filtered", "unmappable"}
        emission_files = sorted((tmp_path / "emissions").glob("*.emx"))
        assert emission_files
        assert len(emission_files) == sum(r["status"] != "unmappable" for r in records)
        assert read_emissions(emission_files[0]).n_windows == 7

    def test_tampered_manifest(self, workspace: Path, tmp_path: Path) -> None:
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        for name in CORPUS_FILES:
            (corpus / name).write_bytes((workspace / "sim" / name).read_bytes())
        manifest = json.loads((corpus / "manifest.json").read_text())
        manifest["library_digest"] = "0" * 16
        (corpus / "manifest.json").write_text(json.dumps(manifest))
        assert main(["search", str(corpus), *_common(workspace), "--out", str(tmp_path / "out")]) == 1

    def test_missing_corpus(self, tmp_path: Path) -> None:
        assert main(["search", str(tmp_path / "nowhere"), "--out", str(tmp_path / "out")]) == 1


class TestRecoverReport:
    @pytest.fixture(scope="class")
    def calls_dir(self, workspace: Path) -> Path:
        out = workspace / "dec"
        sim = str(workspace / "sim")
        assert main(["search", sim, "--method", "ze", *_common(workspace), "--out", str(out)]) == 0
        assert main(["search", sim, "--method", "am", *_common(workspace), "--out", str(out)]) == 0
        assert main(["call", sim, *_common(workspace), "--out", str(out)]) == 0
        return out

    def test_recover(self, workspace: Path, calls_dir: Path, tmp_path: Path) -> None:
        calls = [str(calls_dir / f"calls_{p}.jsonl") for p in ("ze", "am")]
        args = ["recover", str(workspace / "sim"), *calls, "--quality-sweep", *_common(workspace)]
        code = main([*args, "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "recovery_am.json").read_text())
        assert report["pipeline"] == "am"
        assert len(report["blocks"]) == 9
        curve = read_csv(tmp_path / "curve_am.csv")
        assert curve[0]["reads_per_block"] == "0"
        assert len(read_csv(tmp_path / "blocks_ze.csv")) == 9
        assert len(read_csv(tmp_path / "quality_am.csv")) == 4

    def test_report(self, workspace: Path, calls_dir: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        calls = [str(calls_dir / f"calls_{p}.jsonl") for p in ("ze", "am", "caller")]
        assert main(["report", str(workspace / "sim"), *calls, *_common(workspace), "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "comparison.csv")
        assert [r["pipeline"] for r in rows] == ["ze", "am", "caller"]
        orientation = read_csv(tmp_path / "orientation.csv")
        assert {r["orientation"] for r in orientation} == {"forward", "reverse", "combined"}
        assert "caller" in capsys.readouterr().out

    def test_calls_from_other_corpus(self, workspace: Path, calls_dir: Path, tmp_path: Path) -> None:
        lines = read_jsonl(calls_dir / "calls_am.jsonl")
        lines[0]["blocks_digest"] = "f" * 16
        forged = tmp_path / "calls_am.jsonl"
        forged.write_text("".join(json.dumps(line) + "\n" for line in lines))
        assert main(["recover", str(workspace / "sim"), str(forged), "--out", str(tmp_path / "out")]) == 1


class TestTrainSelftest:
    def test_train(self, workspace: Path, tmp_path: Path) -> None:
        code = main(["train", str(workspace / "sim"), "--epochs", "3", *_common(workspace), "--out", str(tmp_path)])
        assert code == 0
        model = json.loads((tmp_path / "toy_model.json").read_text())
        assert model["n_tokens"] == 9
        assert len(read_csv(tmp_path / "training_loss.csv")) == 4

    def test_train_evaluates_held_out_reads(self, workspace: Path, tmp_path: Path) -> None:
        args = ["train", str(workspace / "sim"), "--epochs", "3", "--evaluate", *_common(workspace)]
        assert main([*args, "--out", str(tmp_path)]) == 0
        (entry,) = read_run_log(tmp_path)
        calls = read_jsonl(tmp_path / "toy_calls.jsonl")
        assert entry["held_out"] == len(calls) == 36 - entry["samples"]
        assert all(len(c["labels"]) == 3 for c in calls)
        summary = json.loads((tmp_path / "toy_evaluation.json").read_text())
        assert summary["held_out"] == len(calls)
        assert summary["token_error_rate"] == entry["token_error_rate"]
        assert summary["token_error_rate"] == pytest.approx(sum(c["edit_distance"] for c in calls) / (3 * len(calls)))

    def test_selftest(self, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["selftest"]) == 0
        assert "FAIL" not in capsys.readouterr().out
