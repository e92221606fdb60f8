"""Trial domain types, prompt construction, and answer canonicalization.

A trial is one auditory stimulus plus the pre-audio instruction, the
post-audio question, the answer options, and the ground-truth option.
Prompt templates follow the fixed "instruction + question + option list"
shape; option lists are always rendered in single-quoted bracket form so
prompts are byte-identical across runs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

from .audio import Waveform, read_wav, write_wav


class TaskKind(Enum):
    TASK1_EVENT = "task1_event"
    TASK2_SPEECH = "task2_speech"
    TASK3_OVERLAP = "task3_overlap"


class SuffixPolicy(Enum):
    NONE = "none"
    JUST_OUTPUT_ANSWER = "just_output_answer"


class MatchRule(Enum):
    EXACT = "exact"
    NORMALIZED = "normalized"
    BRACKET_LIST = "bracket_list"
    EMBEDDED = "embedded"


class TrialError(ValueError):
    """Invalid trial content or misuse of prompt construction."""


NO_EXPLANATION = "No explanation is needed."
EXPLANATION_REQUEST = "Provide an explanation for your decision."
JUST_OUTPUT_SUFFIX = "Just output the selected answer"

BASE_PROMPT_ASSET = "base_prompt_v1.txt"
_COT_ASSETS = {
    TaskKind.TASK1_EVENT: "cot_task1_event.txt",
    TaskKind.TASK2_SPEECH: "cot_task2_speech.txt",
    TaskKind.TASK3_OVERLAP: "cot_task3_overlap.txt",
}


def _load_asset(name: str) -> str:
    return resources.files("audiottc.assets").joinpath(name).read_text(encoding="utf-8")


def cot_paragraph(task_kind: TaskKind) -> str:
    """Task-specific chain-of-thought paragraph, stored as a text asset."""
    try:
        asset = _COT_ASSETS[task_kind]
    except (KeyError, TypeError):
        raise TrialError(f"no CoT template for task kind {task_kind!r}")
    return _load_asset(asset).strip()


@dataclass
class Trial:
    id: str
    task_kind: TaskKind
    pre_instruction: str
    question: str
    options: list[str]
    ground_truth: int
    metadata: dict[str, Any] = field(default_factory=dict)
    audio: Waveform | None = None
    audio_path: str | None = None

    _DIGIT_TEMPLATES = (
        "last_digit", "last_two_digits", "sum_last_two", "not_mentioned", "order_last_three",
    )

    def validate(self) -> None:
        if len(self.options) < 2:
            raise TrialError(f"trial {self.id}: needs >= 2 options")
        if len(set(self.options)) != len(self.options):
            raise TrialError(f"trial {self.id}: option texts must be pairwise distinct")
        if not 0 <= self.ground_truth < len(self.options):
            raise TrialError(f"trial {self.id}: ground_truth {self.ground_truth} out of range")
        if self.audio is not None and self.audio.samples.size == 0:
            raise TrialError(f"trial {self.id}: empty audio")
        # digit-templated trials must carry the sequences their question derives from
        if self.metadata.get("template") in self._DIGIT_TEMPLATES:
            gender = self.metadata.get("target_gender")
            seq = self.metadata.get(f"{gender}_digits")
            if not seq or not all(isinstance(d, int) and 0 <= d <= 9 for d in seq):
                raise TrialError(
                    f"trial {self.id}: digit template without a {gender} digit sequence"
                )

    @property
    def correct_option(self) -> str:
        return self.options[self.ground_truth]


@dataclass
class PromptBundle:
    user_text: str
    system_text: str | None = None
    cot_applied: bool = False
    suffix_policy: SuffixPolicy = SuffixPolicy.NONE
    # offset of the question within user_text; lets apply_cot insert the
    # CoT paragraph between instruction and question without re-parsing
    question_offset: int = 0


@dataclass(frozen=True)
class CanonicalAnswer:
    option_index: int | None
    match_rule: MatchRule | None = None

    @property
    def is_mapped(self) -> bool:
        return self.option_index is not None


UNMAPPED = CanonicalAnswer(option_index=None, match_rule=None)


def render_options(options: list[str]) -> str:
    """Render the option list in the single-quoted bracket form used by prompts."""
    return "[" + ", ".join(f"'{o}'" for o in options) + "]"


def build_base_prompt(
    trial: Trial,
    suffix_policy: SuffixPolicy = SuffixPolicy.NONE,
    request_explanation: bool = False,
) -> PromptBundle:
    """Assemble the standard prompt for a trial.

    ``request_explanation`` swaps the trailing "No explanation is needed."
    for an explanation request; used when candidates feed a verifier.
    """
    trial.validate()
    text = _load_asset(BASE_PROMPT_ASSET).strip().format(
        pre_instruction=trial.pre_instruction,
        question=trial.question,
        options=render_options(trial.options),
        trailer=EXPLANATION_REQUEST if request_explanation else NO_EXPLANATION,
    )
    if suffix_policy is SuffixPolicy.JUST_OUTPUT_ANSWER:
        text = f"{text} {JUST_OUTPUT_SUFFIX}"
    return PromptBundle(
        user_text=text,
        suffix_policy=suffix_policy,
        question_offset=len(trial.pre_instruction) + 1,
    )


def apply_cot(prompt: PromptBundle, task_kind: TaskKind) -> PromptBundle:
    """Insert the task-matched CoT paragraph immediately before the question."""
    if prompt.cot_applied:
        raise TrialError("CoT paragraph already applied to this prompt")
    paragraph = cot_paragraph(task_kind)
    off = prompt.question_offset
    text = prompt.user_text[:off] + paragraph + " " + prompt.user_text[off:]
    return replace(
        prompt,
        user_text=text,
        cot_applied=True,
        question_offset=off + len(paragraph) + 1,
    )


_BRACKET_LIST_RE = re.compile(r"\[\s*\d+(?:\s*,\s*\d+)*\s*\]")
_PUNCT_RE = re.compile(r"[\"'`.,;:!?()\[\]{}]")


def _normalize(text: str) -> str:
    text = _PUNCT_RE.sub(" ", text.casefold())
    return " ".join(text.split())


def _digit_tuple(text: str) -> tuple[int, ...] | None:
    parts = [p.strip() for p in text.split(",")]
    if parts and all(p.isdigit() for p in parts):
        return tuple(int(p) for p in parts)
    return None


def canonicalize_answer(raw_text: str, options: list[str]) -> CanonicalAnswer:
    """Map free-text model output onto the option set.

    Rules are tried in a fixed order (exact, normalized, bracket-list,
    embedded); the first rule that matches exactly one option wins. A rule
    matching two or more options is ambiguous and yields Unmapped.
    """
    if len(options) < 2:
        raise TrialError("canonicalize_answer needs >= 2 options")

    stripped = raw_text.strip()
    exact = [i for i, o in enumerate(options) if stripped == o]
    if exact:
        return CanonicalAnswer(exact[0], MatchRule.EXACT)  # options distinct: <= 1 hit

    norm_raw = _normalize(raw_text)
    if norm_raw:
        hits = [i for i, o in enumerate(options) if _normalize(o) == norm_raw]
        if len(hits) == 1:
            return CanonicalAnswer(hits[0], MatchRule.NORMALIZED)
        if len(hits) > 1:
            return UNMAPPED

    found = {t for m in _BRACKET_LIST_RE.findall(raw_text) if (t := _digit_tuple(m[1:-1]))}
    if found:
        hits = [i for i, o in enumerate(options) if _digit_tuple(o) in found]
        if len(hits) == 1:
            return CanonicalAnswer(hits[0], MatchRule.BRACKET_LIST)
        if len(hits) > 1:
            return UNMAPPED

    folded = raw_text.casefold()
    embedded = [
        i
        for i, o in enumerate(options)
        if re.search(rf"(?<!\w){re.escape(o.casefold())}(?!\w)", folded)
    ]
    if len(embedded) == 1:
        return CanonicalAnswer(embedded[0], MatchRule.EMBEDDED)
    return UNMAPPED


def score_answer(outcome: CanonicalAnswer, trial: Trial) -> bool:
    """True iff the canonicalized answer hits the ground-truth option."""
    trial.validate()
    return outcome.option_index == trial.ground_truth


# -- trial (de)serialization: one JSON document per trial -------------------


def trial_to_dict(trial: Trial) -> dict[str, Any]:
    return {
        "id": trial.id,
        "task_kind": trial.task_kind.value,
        "audio_path": trial.audio_path,
        "pre_instruction": trial.pre_instruction,
        "question": trial.question,
        "options": list(trial.options),
        "ground_truth_index": trial.ground_truth,
        "metadata": trial.metadata,
    }


def trial_from_dict(doc: dict[str, Any]) -> Trial:
    trial = Trial(
        id=doc["id"],
        task_kind=TaskKind(doc["task_kind"]),
        pre_instruction=doc["pre_instruction"],
        question=doc["question"],
        options=list(doc["options"]),
        ground_truth=int(doc["ground_truth_index"]),
        metadata=doc.get("metadata", {}),
        audio_path=doc.get("audio_path"),
    )
    trial.validate()
    return trial


def save_trial(trial: Trial, out_dir: str | Path) -> Path:
    """Write ``<id>.json`` (plus ``<id>.wav`` when audio is attached)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if trial.audio is not None:
        wav_path = out_dir / f"{trial.id}.wav"
        write_wav(wav_path, trial.audio)
        trial.audio_path = wav_path.name
    path = out_dir / f"{trial.id}.json"
    path.write_text(json.dumps(trial_to_dict(trial), indent=2), encoding="utf-8")
    return path


def load_trial(path: str | Path, load_audio: bool = False) -> Trial:
    path = Path(path)
    trial = trial_from_dict(json.loads(path.read_text(encoding="utf-8")))
    if load_audio and trial.audio_path:
        trial.audio = read_wav(path.parent / trial.audio_path)
    return trial


def load_trial_dir(trial_dir: str | Path, load_audio: bool = False) -> list[Trial]:
    """Load every ``*.json`` trial under a directory, sorted by filename."""
    trial_dir = Path(trial_dir)
    paths = sorted(trial_dir.glob("*.json"))
    if not paths:
        raise TrialError(f"no trial JSON files under {trial_dir}")
    return [load_trial(p, load_audio=load_audio) for p in paths]
