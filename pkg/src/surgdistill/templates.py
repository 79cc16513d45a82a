"""Editable prompt-template assets and their loader."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str


def _read_asset(name: str) -> str:
    return resources.files("surgdistill.assets").joinpath(name).read_text(encoding="utf-8")


def load_sft_templates(directory: str | Path | None = None) -> list[PromptTemplate]:
    """Instruction templates, one per non-comment line of sft_prompts.txt."""
    if directory is not None:
        text = (Path(directory) / "sft_prompts.txt").read_text(encoding="utf-8")
    else:
        text = _read_asset("sft_prompts.txt")
    templates = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            templates.append(PromptTemplate(template_id=f"sft-{len(templates):02d}", text=line))
    if not templates:
        raise ValueError("no instruction templates found")
    return templates


def load_teacher_template(name: str, directory: str | Path | None = None) -> str:
    """Scaffold sent to the HTTP teacher backend: synthesize, judge_pair, or judge_quality."""
    filename = f"teacher_{name}.txt"
    if directory is not None:
        return (Path(directory) / filename).read_text(encoding="utf-8")
    return _read_asset(filename)


def template_texts(directory: str | Path | None = None) -> dict[str, str]:
    """All template texts keyed by id, used for config digests."""
    out = {t.template_id: t.text for t in load_sft_templates(directory)}
    for name in ("synthesize", "judge_pair", "judge_quality"):
        out[f"teacher_{name}"] = load_teacher_template(name, directory)
    return out
