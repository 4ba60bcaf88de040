"""Experiment configuration via pydantic-settings.

Precedence, lowest first: field defaults, ``MOTIFSTORE_*`` environment variables
(``__`` separates nested sections, ``.env`` is read when present), the JSON file
given by ``--config``, then CLI flag overrides.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings

from motifstore.core.motifs import BlockLayout
from motifstore.data.schemas import CodecMode, CoverageModel, PipelineName, SquiggleSource
from motifstore.data.synthsim import ChannelParams
from motifstore.decoders.caller import CallerParams
from motifstore.decoders.search import SearchParams

RUNTIME_FIELDS = {"threads", "out_dir", "log_level"}


class LibrarySettings(BaseModel):
    n_motifs: int = 8
    motif_length: int = 25
    min_distance: int = 10
    spacer_length: int = 40
    max_attempts: int = 100_000


class LayoutSettings(BaseModel):
    n_address_slots: int = 1
    n_payload_slots: int = 8
    motifs_per_symbol: int = 4


class ChannelSettings(BaseModel):
    p_sub: float = 0.03
    p_ins: float = 0.03
    p_del: float = 0.04
    p_reverse: float = 0.5
    coverage: float = 20.0
    coverage_model: CoverageModel = CoverageModel.FIXED


class SquiggleSettings(BaseModel):
    kmer_length: int = 6
    dwell_mean: float = 10.0
    noise_std: float = 2.0
    pore_std: float = 1.5
    source: SquiggleSource = SquiggleSource.MOLECULE


class TrainingSettings(BaseModel):
    window: int = 64
    stride: int = 64
    epochs: int = 200
    learning_rate: float = 1.0
    top_fraction: float = 0.3


class RecoverySettings(BaseModel):
    threshold: float = 0.95
    quality_thresholds: list[float] = Field(default_factory=lambda: [0.0, 10.0, 15.0, 20.0])
    dilution_coverages: list[float] = Field(default_factory=lambda: [18.0, 7.0, 2.3])
    pipelines: list[PipelineName] = Field(
        default_factory=lambda: [PipelineName.ZE, PipelineName.AM, PipelineName.CALLER]
    )


class ExperimentConfig(BaseSettings):
    """Every experiment-defining constant plus runtime-only knobs (threads, out_dir, log_level)."""

    library: LibrarySettings = Field(default_factory=LibrarySettings)
    layout: LayoutSettings = Field(default_factory=LayoutSettings)
    channel: ChannelSettings = Field(default_factory=ChannelSettings)
    squiggle: SquiggleSettings = Field(default_factory=SquiggleSettings)
    caller: CallerParams = Field(default_factory=CallerParams)
    search: SearchParams = Field(default_factory=SearchParams)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    recovery: RecoverySettings = Field(default_factory=RecoverySettings)
    codec_mode: CodecMode = CodecMode.PER_SYMBOL_FLOOR
    seed: int = 7

    # Runtime
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1)
    out_dir: Path = Path("out")
    log_level: str = "INFO"

    model_config = {
        "env_prefix": "MOTIFSTORE_",
        "env_nested_delimiter": "__",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }

    @property
    def n_spacers(self) -> int:
        return self.layout.n_address_slots + self.layout.n_payload_slots + 1

    def block_layout(self) -> BlockLayout:
        return BlockLayout(
            n_address_slots=self.layout.n_address_slots,
            n_payload_slots=self.layout.n_payload_slots,
            k=self.layout.motifs_per_symbol,
            library_size=self.library.n_motifs,
            spacer_length=self.library.spacer_length,
        )

    def channel_params(
        self, coverage: float | None = None, coverage_model: CoverageModel | None = None
    ) -> ChannelParams:
        data = self.channel.model_dump()
        if coverage is not None:
            data["coverage"] = coverage
        if coverage_model is not None:
            data["coverage_model"] = coverage_model
        return ChannelParams(**data)

    def experiment_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json", exclude=RUNTIME_FIELDS)

    def experiment_dump(self) -> str:
        """Canonical JSON of the experiment-defining fields."""
        return json.dumps(self.experiment_dict(), sort_keys=True, indent=2) + "\n"


def _deep_merge(base: dict[str, Any], updates: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Path | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Resolve env + optional JSON file + flag overrides into one config."""
    layered: dict[str, Any] = ExperimentConfig().model_dump(mode="json", exclude_unset=True)
    if path is not None:
        if not path.exists():
            msg = f"Config file not found: {path}"
            raise FileNotFoundError(msg)
        with path.open("r", encoding="utf-8") as f:
            file_data = json.load(f)
        if not isinstance(file_data, dict):
            msg = f"Config file {path} must hold a JSON object"
            raise ValueError(msg)
        layered = _deep_merge(layered, file_data)
    if overrides:
        layered = _deep_merge(layered, overrides)
    return ExperimentConfig(**layered)


settings = ExperimentConfig()
