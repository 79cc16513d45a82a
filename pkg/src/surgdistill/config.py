"""Pipeline-wide configuration constants and the trainer-export hyperparameters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class PipelineConfig:
    target_resolution: tuple[int, int] = (960, 540)
    overlay_color: tuple[int, int, int] = (0, 255, 0)
    overlay_alpha: float = 0.5
    candidates_per_prompt: int = 5
    dpo_beta: float = 0.1
    judge_weights: tuple[float, float] = (0.75, 0.25)
    expert_subset_size: int = 40
    split_seed: int = 7
    test_fraction: float = 0.2
    grid_size: tuple[int, int] = (32, 18)
    grid_cell_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.overlay_alpha <= 1.0:
            raise ValueError(f"overlay_alpha must be in [0,1], got {self.overlay_alpha}")
        if abs(sum(self.judge_weights) - 1.0) > 1e-9:
            raise ValueError(f"judge weights must sum to 1, got {self.judge_weights}")
        if self.candidates_per_prompt < 2:
            raise ValueError("candidates_per_prompt must be >= 2")
        if self.dpo_beta <= 0:
            raise ValueError("dpo_beta must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0,1)")

    def digest_payload(self) -> dict:
        return asdict(self)


# SFT freezes the vision encoder; DPO fine-tunes every component.
SFT_FROZEN_COMPONENTS = ("vision_encoder",)
DPO_TRAINED_COMPONENTS = ("vision_encoder", "visual_merger", "language_model")


@dataclass(frozen=True)
class TrainerExportConfig:
    sft_learning_rate: float = 1e-5
    sft_epochs: int = 1
    accumulated_batch_size: int = 8
    dpo_learning_rate: float = 1e-6
    dpo_beta: float = 0.1
    sft_frozen_components: tuple[str, ...] = SFT_FROZEN_COMPONENTS
    dpo_trained_components: tuple[str, ...] = DPO_TRAINED_COMPONENTS

    def to_flat_text(self) -> str:
        """Serialize as a flat key=value document; floats round-trip exactly via repr."""
        lines = [
            f"sft_learning_rate={self.sft_learning_rate!r}",
            f"sft_epochs={self.sft_epochs}",
            f"accumulated_batch_size={self.accumulated_batch_size}",
            f"dpo_learning_rate={self.dpo_learning_rate!r}",
            f"dpo_beta={self.dpo_beta!r}",
            f"sft_frozen_components={','.join(self.sft_frozen_components)}",
            f"dpo_trained_components={','.join(self.dpo_trained_components)}",
        ]
        return "\n".join(lines) + "\n"


def parse_trainer_config(text: str) -> TrainerExportConfig:
    """Inverse of TrainerExportConfig.to_flat_text."""
    values: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed trainer-config line: {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    try:
        return TrainerExportConfig(
            sft_learning_rate=float(values["sft_learning_rate"]),
            sft_epochs=int(values["sft_epochs"]),
            accumulated_batch_size=int(values["accumulated_batch_size"]),
            dpo_learning_rate=float(values["dpo_learning_rate"]),
            dpo_beta=float(values["dpo_beta"]),
            sft_frozen_components=tuple(values["sft_frozen_components"].split(",")),
            dpo_trained_components=tuple(values["dpo_trained_components"].split(",")),
        )
    except KeyError as exc:
        raise ValueError(f"trainer config missing key: {exc}") from exc


def load_pipeline_config(path) -> PipelineConfig:
    """Load overrides from a JSON file on top of the defaults."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    for key in ("target_resolution", "overlay_color", "judge_weights", "grid_size"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return PipelineConfig(**raw)


def config_digest_payload(config: PipelineConfig, template_texts: dict[str, str]) -> str:
    """Canonical JSON over the config plus template versions, for snapshot digests."""
    return json.dumps(
        {"pipeline": config.digest_payload(), "templates": template_texts},
        sort_keys=True,
        separators=(",", ":"),
    )
