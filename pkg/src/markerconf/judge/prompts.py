"""Prompt templates shipped as resource files.

Judge templates live in ``resources/templates/<template_id>.txt`` and task
prompts in ``resources/prompts/``. Placeholders use ``str.format`` syntax
(``{sentence}``); literal braces are doubled. The single trailing newline of
each file is not part of the template.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

JUDGE_TEMPLATE_IDS = {
    "consistency": "consistency",
    "decisiveness": "decisiveness",
    "accuracy": "accuracy",
    "extract_markers": "extract_markers",
    "standardize_markers": "standardize_markers",
}

SYSTEM_PROMPT_IDS = ("generic", "metacognitive")


def _read(relpath: str, template_dir: Path | None = None) -> str:
    if template_dir is not None:
        text = (Path(template_dir) / Path(relpath).name).read_text(encoding="utf-8")
    else:
        text = resources.files("markerconf").joinpath(f"resources/{relpath}").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


@lru_cache(maxsize=None)
def judge_template(template_id: str, template_dir: Path | None = None) -> str:
    return _read(f"templates/{template_id}.txt", template_dir)


@lru_cache(maxsize=None)
def task_template(task_kind: str) -> str:
    return _read(f"prompts/task_{task_kind}.txt")


@lru_cache(maxsize=None)
def system_prompt(system_prompt_id: str) -> str:
    if system_prompt_id not in SYSTEM_PROMPT_IDS:
        raise KeyError(f"unknown system prompt {system_prompt_id!r}; expected one of {SYSTEM_PROMPT_IDS}")
    return _read(f"prompts/system_{system_prompt_id}.txt")


def render(template: str, **values: str) -> str:
    return template.format(**values)


def format_list(items) -> str:
    """Lists (gold answers, marker lists) are rendered as JSON arrays."""
    return json.dumps(list(items), ensure_ascii=False)
