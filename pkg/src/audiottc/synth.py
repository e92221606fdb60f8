"""Corpus ingestion and synthesis of the three auditory-cognition task types.

Task 1 concatenates labelled sound events and asks a yes/no presence
question. Task 2 lays one speaker's digit sequence over a noise bed at a
controlled SNR. Task 3 overlaps a male and a female digit sequence with
pairwise onset-aligned digits over the noise bed. Question, options, and
ground truth are generated from the digit/event sequences, which are kept
in trial metadata so scoring can be re-derived independently.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .audio import (
    AudioError,
    Waveform,
    background_gain_for_snr,
    concat_with_gaps,
    mix_at_snr,
    peak_normalize,
    read_wav,
    resample,
    write_wav,
)
from .trials import TaskKind, Trial

GENDERS = ("male", "female")


class SynthError(ValueError):
    """Corpus or synthesis-parameter problem."""


class QuestionGenerationError(SynthError):
    """Template infeasible for the drawn sequences; caller may redraw."""


# -- corpus ------------------------------------------------------------------


@dataclass
class CorpusClip:
    clip_id: str
    kind: str  # "event" | "digit" | "noise"
    waveform: Waveform
    event: str | None = None
    category: str | None = None
    digit: int | None = None
    gender: str | None = None
    noise: str | None = None


@dataclass
class Corpus:
    clips: list[CorpusClip]
    session_rate: int

    def by_kind(self, kind: str) -> list[CorpusClip]:
        return [c for c in self.clips if c.kind == kind]

    def event_labels(self) -> list[str]:
        return sorted({c.event for c in self.by_kind("event") if c.event})

    def event_clips(self, label: str) -> list[CorpusClip]:
        return [c for c in self.by_kind("event") if c.event == label]

    def digit_clips(self, digit: int, gender: str) -> list[CorpusClip]:
        return [c for c in self.by_kind("digit") if c.digit == digit and c.gender == gender]

    def noise_clips(self) -> list[CorpusClip]:
        return self.by_kind("noise")

    def check_digit_coverage(self, genders=GENDERS) -> None:
        missing = [
            (d, g) for g in genders for d in range(10) if not self.digit_clips(d, g)
        ]
        if missing:
            pairs = ", ".join(f"{g}/{d}" for d, g in missing)
            raise SynthError(f"digit corpus incomplete; missing (gender/digit) pairs: {pairs}")


def _manifest_rows(manifest_path: Path) -> list[dict[str, Any]]:
    if manifest_path.suffix.lower() == ".csv":
        with open(manifest_path, newline="", encoding="utf-8") as f:
            return [dict(r) for r in csv.DictReader(f)]
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    return doc["clips"] if isinstance(doc, dict) else doc


def load_corpus(manifest_path: str | Path, session_rate: int = 16000, peak: float = 0.9) -> Corpus:
    """Load, resample, and peak-normalize every clip listed in a manifest.

    The manifest is JSON ({"clips": [...]}) or CSV with columns
    path, kind, event, category, digit, gender, noise.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise SynthError(f"manifest not found: {manifest_path}")
    clips = []
    for i, row in enumerate(_manifest_rows(manifest_path)):
        rel = row.get("path")
        if not rel:
            raise SynthError(f"manifest row {i}: missing 'path'")
        path = (manifest_path.parent / rel).resolve()
        try:
            wav = read_wav(path)
        except AudioError as e:
            raise SynthError(f"manifest row {i}: {e}") from e
        wav = peak_normalize(resample(wav, session_rate), peak=peak)
        kind = (row.get("kind") or "").strip()
        if kind not in ("event", "digit", "noise"):
            raise SynthError(f"manifest row {i}: unknown kind {kind!r}")
        digit = row.get("digit")
        digit = int(digit) if digit not in (None, "") else None
        if kind == "digit":
            if digit is None or not 0 <= digit <= 9:
                raise SynthError(f"manifest row {i}: digit clips need digit in 0..9")
            if row.get("gender") not in GENDERS:
                raise SynthError(f"manifest row {i}: digit clips need gender male|female")
        clips.append(
            CorpusClip(
                clip_id=row.get("clip_id") or Path(rel).stem,
                kind=kind,
                waveform=wav,
                event=row.get("event") or None,
                category=row.get("category") or None,
                digit=digit,
                gender=row.get("gender") or None,
                noise=row.get("noise") or None,
            )
        )
    return Corpus(clips=clips, session_rate=session_rate)


# -- question templates ------------------------------------------------------


class QuestionKind(Enum):
    EVENT_PRESENCE = "event_presence"
    LAST_DIGIT = "last_digit"
    LAST_TWO_DIGITS = "last_two_digits"
    SUM_LAST_TWO = "sum_last_two"
    NOT_MENTIONED = "not_mentioned"
    ORDER_LAST_THREE = "order_last_three"


_TASKS_FOR_KIND = {
    QuestionKind.EVENT_PRESENCE: {TaskKind.TASK1_EVENT},
    QuestionKind.LAST_DIGIT: {TaskKind.TASK2_SPEECH, TaskKind.TASK3_OVERLAP},
    QuestionKind.LAST_TWO_DIGITS: {TaskKind.TASK2_SPEECH, TaskKind.TASK3_OVERLAP},
    QuestionKind.SUM_LAST_TWO: {TaskKind.TASK3_OVERLAP},
    QuestionKind.NOT_MENTIONED: {TaskKind.TASK3_OVERLAP},
    QuestionKind.ORDER_LAST_THREE: {TaskKind.TASK3_OVERLAP},
}

_DEFAULT_OPTION_COUNT = {
    QuestionKind.EVENT_PRESENCE: 2,
    QuestionKind.LAST_DIGIT: 4,
    QuestionKind.LAST_TWO_DIGITS: 2,
    QuestionKind.SUM_LAST_TWO: 4,
    QuestionKind.NOT_MENTIONED: 4,
    QuestionKind.ORDER_LAST_THREE: 4,
}

_MIN_SEQUENCE_LEN = {
    QuestionKind.LAST_DIGIT: 1,
    QuestionKind.LAST_TWO_DIGITS: 2,
    QuestionKind.SUM_LAST_TWO: 5,  # needs >= 3 other adjacent pairs for distractor sums
    QuestionKind.NOT_MENTIONED: 1,
    QuestionKind.ORDER_LAST_THREE: 3,
}

DEFAULT_TEMPLATES = {
    TaskKind.TASK1_EVENT: [QuestionKind.EVENT_PRESENCE],
    TaskKind.TASK2_SPEECH: [QuestionKind.LAST_DIGIT, QuestionKind.LAST_TWO_DIGITS],
    TaskKind.TASK3_OVERLAP: [
        QuestionKind.SUM_LAST_TWO,
        QuestionKind.NOT_MENTIONED,
        QuestionKind.ORDER_LAST_THREE,
    ],
}


@dataclass
class QuestionTemplate:
    kind: QuestionKind
    target_gender: str | None = None
    option_count: int = 0

    def __post_init__(self):
        if self.option_count <= 0:
            self.option_count = _DEFAULT_OPTION_COUNT[self.kind]
        if self.option_count < 2:
            raise SynthError("option_count must be >= 2")
        if self.target_gender is not None and self.target_gender not in GENDERS:
            raise SynthError(f"unknown target gender {self.target_gender!r}")

    def check_task(self, task_kind: TaskKind) -> None:
        if task_kind not in _TASKS_FOR_KIND[self.kind]:
            raise SynthError(f"template {self.kind.value} incompatible with {task_kind.value}")


@dataclass
class TrialContent:
    """Per-trial sequences the question generator works from."""

    male_digits: list[int] | None = None
    female_digits: list[int] | None = None
    events_present: list[str] | None = None
    event_pool: list[str] | None = None

    def digits_for(self, gender: str) -> list[int]:
        seq = self.male_digits if gender == "male" else self.female_digits
        if not seq:
            raise QuestionGenerationError(f"no digit sequence for {gender}")
        return seq

    def genders_present(self) -> list[str]:
        out = []
        if self.male_digits:
            out.append("male")
        if self.female_digits:
            out.append("female")
        return out


@dataclass
class GeneratedQuestion:
    question: str
    options: list[str]
    ground_truth: int
    target_gender: str | None = None
    queried_event: str | None = None


def _pick(rng: np.random.Generator, items: list) -> Any:
    return items[int(rng.integers(0, len(items)))]


def _sample(rng: np.random.Generator, items: list, k: int) -> list:
    if len(items) < k:
        raise QuestionGenerationError(
            f"need {k} distractors but only {len(items)} plausible values"
        )
    idx = rng.permutation(len(items))[:k]
    return [items[i] for i in idx]


def _shuffle_options(rng: np.random.Generator, correct: str, distractors: list[str]) -> tuple[list[str], int]:
    options = [correct] + list(distractors)
    order = rng.permutation(len(options))
    shuffled = [options[i] for i in order]
    return shuffled, shuffled.index(correct)


def generate_question(
    template: QuestionTemplate, content: TrialContent, rng: np.random.Generator
) -> GeneratedQuestion:
    """Instantiate the question text, options, and ground-truth index.

    Exactly one option is correct; distractors are drawn without
    replacement from plausible same-type values and the option order is
    shuffled by ``rng``.
    """
    kind = template.kind
    if kind is QuestionKind.EVENT_PRESENCE:
        if not content.events_present or not content.event_pool:
            raise QuestionGenerationError("event presence needs event sequences")
        absent = sorted(set(content.event_pool) - set(content.events_present))
        present = bool(rng.random() < 0.5) if absent else True
        event = _pick(rng, sorted(content.events_present)) if present else _pick(rng, absent)
        return GeneratedQuestion(
            question=f"Did you hear the {event}?",
            options=["Yes", "No"],
            ground_truth=0 if present else 1,
            queried_event=event,
        )

    gender = template.target_gender or _pick(rng, content.genders_present())
    seq = content.digits_for(gender)
    if len(seq) < _MIN_SEQUENCE_LEN[kind]:
        raise SynthError(f"{kind.value} needs sequence length >= {_MIN_SEQUENCE_LEN[kind]}")
    need = template.option_count - 1

    if kind is QuestionKind.LAST_DIGIT:
        correct = str(seq[-1])
        pool = [str(d) for d in range(10) if d != seq[-1]]
        options, gt = _shuffle_options(rng, correct, _sample(rng, pool, need))
        question = f"What is the last digit spoken by the {gender}?"
    elif kind is QuestionKind.LAST_TWO_DIGITS:
        correct = f"{seq[-2]},{seq[-1]}"
        pool = [f"{seq[i]},{seq[i + 1]}" for i in range(len(seq) - 2)]
        pool += [f"{d},{seq[-1]}" for d in range(10)] + [f"{seq[-2]},{d}" for d in range(10)]
        pool = sorted({p for p in pool if p != correct})
        options, gt = _shuffle_options(rng, correct, _sample(rng, pool, need))
        question = f"What is the LAST TWO digits spoken by {gender}?"
    elif kind is QuestionKind.SUM_LAST_TWO:
        correct = str(seq[-2] + seq[-1])
        pool = sorted({str(seq[i] + seq[i + 1]) for i in range(len(seq) - 2)} - {correct})
        options, gt = _shuffle_options(rng, correct, _sample(rng, pool, need))
        question = f"What is the sum of the last two digits spoken by the {gender}?"
    elif kind is QuestionKind.NOT_MENTIONED:
        spoken = sorted(set(seq))
        unspoken = sorted(set(range(10)) - set(seq))
        if not unspoken:
            raise QuestionGenerationError("every digit was spoken; NOT-mentioned infeasible")
        correct = str(_pick(rng, unspoken))
        pool = [str(d) for d in spoken]
        options, gt = _shuffle_options(rng, correct, _sample(rng, pool, need))
        question = f"Which digit has NOT been mentioned by {gender}?"
    elif kind is QuestionKind.ORDER_LAST_THREE:
        tail = seq[-3:]
        correct = ",".join(str(d) for d in tail)
        pool = set()
        other = [g for g in content.genders_present() if g != gender]
        if other:
            oseq = content.digits_for(other[0])
            if len(oseq) >= 3:
                otail = oseq[-3:]
                pool.add(",".join(str(d) for d in otail))
                for k in range(3):
                    mixed = list(tail)
                    mixed[k] = otail[k]
                    pool.add(",".join(str(d) for d in mixed))
                    mixed2 = list(otail)
                    mixed2[k] = tail[k]
                    pool.add(",".join(str(d) for d in mixed2))
        for perm in ((2, 1, 0), (1, 0, 2), (0, 2, 1), (2, 0, 1), (1, 2, 0)):
            pool.add(",".join(str(tail[i]) for i in perm))
        pool = sorted(pool - {correct})
        options, gt = _shuffle_options(rng, correct, _sample(rng, pool, need))
        question = f"What is the order of last three digits spoken by {gender}?"
    else:
        raise SynthError(f"unhandled question kind {kind!r}")

    return GeneratedQuestion(question=question, options=options, ground_truth=gt, target_gender=gender)


# -- trial synthesis ---------------------------------------------------------


@dataclass
class SynthParams:
    sequence_length: int = 6
    gap_ms: float = 300.0
    snr_db: float = 5.0  # math.inf disables the noise bed
    session_rate: int = 16000
    max_retries: int = 16
    noise_label: str | None = None  # restrict the bed to one noise label

    def gap_samples(self) -> int:
        return int(round(self.gap_ms * self.session_rate / 1000.0))


def _pick_noise(corpus: Corpus, params: SynthParams, rng: np.random.Generator) -> CorpusClip:
    beds = corpus.noise_clips()
    if params.noise_label is not None:
        beds = [c for c in beds if c.noise == params.noise_label]
    if not beds:
        raise SynthError("corpus has no usable noise bed")
    return _pick(rng, beds)


def _digit_clip(corpus: Corpus, digit: int, gender: str, rng: np.random.Generator) -> CorpusClip:
    clips = corpus.digit_clips(digit, gender)
    if not clips:
        raise SynthError(f"digit corpus incomplete; missing (gender/digit) pair: {gender}/{digit}")
    return _pick(rng, clips)


def synthesize_trial(
    corpus: Corpus,
    task_kind: TaskKind,
    template: QuestionTemplate,
    params: SynthParams,
    rng_seed: int,
    trial_id: str | None = None,
) -> Trial:
    """Deterministically synthesize one trial from (corpus, template, seed).

    Infeasible question draws (e.g. too few distinct distractor sums) are
    retried with a fresh sub-seed up to ``params.max_retries`` times.
    """
    template.check_task(task_kind)
    if corpus.session_rate != params.session_rate:
        raise SynthError("corpus session rate differs from synthesis params")
    last_err: Exception | None = None
    for attempt in range(params.max_retries):
        rng = np.random.default_rng([rng_seed, attempt])
        try:
            return _synthesize_once(corpus, task_kind, template, params, rng, rng_seed, trial_id)
        except QuestionGenerationError as e:
            last_err = e
    raise SynthError(
        f"could not satisfy template {template.kind.value} after "
        f"{params.max_retries} draws: {last_err}"
    )


def _synthesize_once(
    corpus: Corpus,
    task_kind: TaskKind,
    template: QuestionTemplate,
    params: SynthParams,
    rng: np.random.Generator,
    rng_seed: int,
    trial_id: str | None,
) -> Trial:
    rate = params.session_rate
    gap = params.gap_samples()
    layers: list[dict[str, Any]] = []
    metadata: dict[str, Any] = {
        "template": template.kind.value,
        "sequence_length": params.sequence_length,
        "gap_ms": params.gap_ms,
        "sample_rate": rate,
        "seed": rng_seed,
    }

    if task_kind is TaskKind.TASK1_EVENT:
        labels = corpus.event_labels()
        if len(labels) < 3:
            raise SynthError("task 1 needs at least 3 distinct event labels")
        n = int(rng.integers(2, 5))
        n = min(n, len(labels) - 1)  # keep at least one absent label for "No" questions
        order = rng.permutation(len(labels))[:n]
        chosen = [_pick(rng, corpus.event_clips(labels[i])) for i in order]
        content = TrialContent(events_present=[c.event for c in chosen], event_pool=labels)
        generated = generate_question(template, content, rng)
        track, onsets = concat_with_gaps([c.waveform.samples.astype(np.float64) for c in chosen], gap)
        audio = Waveform(np.clip(track, -1.0, 1.0).astype(np.float32), rate)
        layers = [
            {"clip_id": c.clip_id, "onset": int(o), "gain": 1.0, "role": "event"}
            for c, o in zip(chosen, onsets)
        ]
        category = next((c.category for c in corpus.by_kind("event") if c.event == generated.queried_event), None)
        pre = f"Focus on {category.upper()} sound." if category else "Focus on the sound events."
        metadata.update(
            events_present=content.events_present,
            event_pool=labels,
            queried_event=generated.queried_event,
            snr_db=None,
        )
    elif task_kind is TaskKind.TASK2_SPEECH:
        gender = template.target_gender or _pick(rng, list(GENDERS))
        digits = [int(d) for d in rng.integers(0, 10, size=params.sequence_length)]
        content = TrialContent(**{f"{gender}_digits": digits})
        generated = generate_question(
            QuestionTemplate(template.kind, gender, template.option_count), content, rng
        )
        clips = [_digit_clip(corpus, d, gender, rng) for d in digits]
        track, onsets = concat_with_gaps([c.waveform.samples.astype(np.float64) for c in clips], gap)
        speech = Waveform(track.astype(np.float32), rate)
        audio, noise_layer = _apply_noise_bed(corpus, speech, params, rng)
        layers = [
            {"clip_id": c.clip_id, "onset": int(o), "gain": 1.0, "role": f"speech_{gender}"}
            for c, o in zip(clips, onsets)
        ]
        if noise_layer:
            layers.append(noise_layer)
        pre = "Listen carefully."
        metadata.update(
            **{f"{gender}_digits": digits},
            digit_onsets={gender: [int(o) for o in onsets]},
            snr_db=None if math.isinf(params.snr_db) else params.snr_db,
        )
    elif task_kind is TaskKind.TASK3_OVERLAP:
        male = [int(d) for d in rng.integers(0, 10, size=params.sequence_length)]
        female = [int(d) for d in rng.integers(0, 10, size=params.sequence_length)]
        content = TrialContent(male_digits=male, female_digits=female)
        generated = generate_question(template, content, rng)
        m_clips = [_digit_clip(corpus, d, "male", rng) for d in male]
        f_clips = [_digit_clip(corpus, d, "female", rng) for d in female]
        onsets = []
        cursor = 0
        for mc, fc in zip(m_clips, f_clips):
            onsets.append(cursor)
            cursor += max(len(mc.waveform.samples), len(fc.waveform.samples)) + gap
        total = cursor - gap
        track = np.zeros(total, dtype=np.float64)
        for clips in (m_clips, f_clips):
            for onset, c in zip(onsets, clips):
                track[onset : onset + len(c.waveform.samples)] += c.waveform.samples
        speech = Waveform(track.astype(np.float32), rate)
        audio, noise_layer = _apply_noise_bed(corpus, speech, params, rng)
        layers = [
            {"clip_id": c.clip_id, "onset": int(o), "gain": 1.0, "role": "speech_male"}
            for c, o in zip(m_clips, onsets)
        ] + [
            {"clip_id": c.clip_id, "onset": int(o), "gain": 1.0, "role": "speech_female"}
            for c, o in zip(f_clips, onsets)
        ]
        if noise_layer:
            layers.append(noise_layer)
        pre = f"Focus on {generated.target_gender.upper()}."
        metadata.update(
            male_digits=male,
            female_digits=female,
            digit_onsets={"male": [int(o) for o in onsets], "female": [int(o) for o in onsets]},
            snr_db=None if math.isinf(params.snr_db) else params.snr_db,
        )
    else:
        raise SynthError(f"unknown task kind {task_kind!r}")

    metadata["target_gender"] = generated.target_gender
    metadata["mix_plan"] = {"layers": layers, "duration": int(len(audio.samples))}
    trial = Trial(
        id=trial_id or f"{task_kind.value}-{rng_seed}",
        task_kind=task_kind,
        pre_instruction=pre,
        question=generated.question,
        options=generated.options,
        ground_truth=generated.ground_truth,
        metadata=metadata,
        audio=audio,
    )
    trial.validate()
    return trial


def _apply_noise_bed(
    corpus: Corpus, speech: Waveform, params: SynthParams, rng: np.random.Generator
) -> tuple[Waveform, dict[str, Any] | None]:
    if math.isinf(params.snr_db) and params.snr_db > 0:
        return Waveform(np.clip(speech.samples, -1.0, 1.0), speech.sample_rate), None
    bed = _pick_noise(corpus, params, rng)
    gain = background_gain_for_snr(speech, bed.waveform, params.snr_db)
    mixed = mix_at_snr(speech, bed.waveform, params.snr_db)
    return mixed, {"clip_id": bed.clip_id, "onset": 0, "gain": float(gain), "role": "noise"}


def rebuild_layers(corpus: Corpus, trial: Trial) -> tuple[Waveform, np.ndarray | None]:
    """Reconstruct (foreground, scaled-noise) from a trial's mix plan.

    Lets SNR be re-measured from persisted metadata without trusting the
    synthesis path.
    """
    from .audio import _fit_length  # reconstruction mirrors the mixer's looping rule

    plan = trial.metadata["mix_plan"]
    duration = plan["duration"]
    by_id = {c.clip_id: c for c in corpus.clips}
    fg = np.zeros(duration, dtype=np.float64)
    noise = None
    for layer in plan["layers"]:
        clip = by_id[layer["clip_id"]]
        if layer["role"] == "noise":
            noise = _fit_length(clip.waveform.samples, duration) * layer["gain"]
        else:
            onset = layer["onset"]
            fg[onset : onset + len(clip.waveform.samples)] += clip.waveform.samples * layer["gain"]
    return Waveform(fg.astype(np.float32), trial.metadata["sample_rate"]), noise


# -- demo corpus -------------------------------------------------------------

_DEMO_EVENTS = [
    ("cat meowing", "animal"),
    ("dog barking", "animal"),
    ("bird chirping", "animal"),
    ("door knocking", "household"),
    ("phone ringing", "household"),
    ("glass breaking", "household"),
]


def _tone(freq: float, n: int, rate: int, harmonics: int = 3) -> np.ndarray:
    t = np.arange(n) / rate
    out = np.zeros(n)
    for h in range(1, harmonics + 1):
        out += np.sin(2 * np.pi * freq * h * t) / h
    env = np.minimum(1.0, np.minimum(np.arange(n), n - np.arange(n)) / (0.01 * rate))
    return out * env


def make_demo_corpus(
    out_dir: str | Path, seed: int = 0, sample_rate: int = 16000, digit_ms: float = 280.0
) -> Path:
    """Write a small synthetic corpus (digits, events, noise) plus manifest.

    Purely synthetic tones and noise shaped to be distinct per label; enough
    to exercise the full pipeline without recorded speech.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    n_digit = int(sample_rate * digit_ms / 1000.0)

    for gender, base, step in (("male", 110.0, 12.0), ("female", 220.0, 15.0)):
        for d in range(10):
            name = f"digit_{gender}_{d}.wav"
            s = _tone(base + step * d, n_digit, sample_rate) * 0.8
            write_wav(out_dir / name, Waveform(s.astype(np.float32), sample_rate))
            rows.append({"path": name, "kind": "digit", "digit": d, "gender": gender})

    n_event = int(sample_rate * 0.5)
    for i, (label, category) in enumerate(_DEMO_EVENTS):
        name = f"event_{i}.wav"
        t = np.arange(n_event) / sample_rate
        sweep = np.sin(2 * np.pi * (300 + 120 * i) * t + 40 * i * t * t)
        burst = rng.standard_normal(n_event) * 0.25 * np.sin(2 * np.pi * (2 + i) * t) ** 2
        s = 0.6 * sweep + burst
        write_wav(out_dir / name, Waveform(s.astype(np.float32), sample_rate))
        rows.append({"path": name, "kind": "event", "event": label, "category": category})

    n_noise = int(sample_rate * 1.5)
    for label, shape in (("babble", 0.5), ("hum", 0.2)):
        name = f"noise_{label}.wav"
        white = rng.standard_normal(n_noise)
        if label == "hum":
            t = np.arange(n_noise) / sample_rate
            white = 0.3 * white + np.sin(2 * np.pi * 50 * t)
        s = white / np.max(np.abs(white)) * shape
        write_wav(out_dir / name, Waveform(s.astype(np.float32), sample_rate))
        rows.append({"path": name, "kind": "noise", "noise": label})

    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps({"clips": rows}, indent=2), encoding="utf-8")
    return manifest
