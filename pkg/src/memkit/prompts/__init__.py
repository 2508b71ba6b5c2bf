"""Default prompt templates, shipped as data files.

User-facing slots use ``str.format`` placeholders. The summarization
template may be overridden via ``summary.prompt_path``; it must keep the
two slots ``{prior_summary}`` and ``{turn_pair}``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def _read(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8").strip()


EXTRACTION_SYSTEM = _read("extraction_system.txt")
SUMMARY_SYSTEM = _read("summary_system.txt")
SUMMARY_TEMPLATE = _read("summary_user.txt")
ANSWER_SYSTEM = _read("answer_system.txt")
ANSWER_TEMPLATE = _read("answer_user.txt")
JUDGE_SYSTEM = _read("judge_system.txt")
JUDGE_TEMPLATE = _read("judge_user.txt")


def load_summary_template(path: str | Path | None) -> str:
    """The summarization user-template: packaged default or an override file."""
    if path is None:
        return SUMMARY_TEMPLATE
    text = Path(path).read_text(encoding="utf-8").strip()
    for slot in ("{prior_summary}", "{turn_pair}"):
        if slot not in text:
            raise ValueError(f"summary template at {path} is missing the {slot} slot")
    return text
