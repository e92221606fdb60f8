"""LLM-as-judge scoring of candidate responses.

The judge receives the trial question, the option list, the candidate's
response, and the trial audio, and must answer in a fixed
RATING / ANALYSIS / SELECTED OPTION format. Ratings are clamped to [0, 1];
unparseable replies are retried and finally fall back to the neutral 0.5.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .gateway import Candidate, DecodeMode, DecodeParams, Gateway, QueryRequest, TrialRef, encode_audio
from .trials import PromptBundle, Trial, canonicalize_answer, render_options

VERIFIER_TEMPLATE_ASSET = "verifier_prompt_v1.txt"


class MalformedVerifierOutput(ValueError):
    """No parseable RATING in the judge's reply."""


@dataclass
class VerifierScore:
    rating: float
    analysis: str = ""
    selected_option: int | None = None
    parse_rule: str = ""
    clamped: bool = False
    fallback: bool = False
    attempts: int = 1


@dataclass
class VerifierPolicy:
    max_attempts: int = 3
    fallback_rating: float = 0.5


def verifier_template() -> str:
    return (
        resources.files("audiottc.assets").joinpath(VERIFIER_TEMPLATE_ASSET).read_text("utf-8")
    )


def build_verifier_prompt(trial: Trial, candidate: Candidate) -> PromptBundle:
    """Instantiate the judge template with question, options, and response."""
    text = verifier_template().format(
        question=f"{trial.pre_instruction} {trial.question}",
        options=render_options(trial.options),
        response=candidate.text,
    )
    return PromptBundle(user_text=text)


_RATING_RE = re.compile(r"RATING\s*:?\s*\**\s*(-?\d+(?:\.\d+)?)", re.IGNORECASE)
_ANALYSIS_RE = re.compile(
    r"ANALYSIS\s*:?\s*(.*?)(?:\n\s*(?:SELECTED OPTION|YOUR ANSWER)|\Z)",
    re.IGNORECASE | re.DOTALL,
)
_SELECTED_RE = re.compile(
    r"(?:SELECTED OPTION|YOUR ANSWER)\s*:?\s*(.+?)(?:\n\s*[A-Z ]+:|\Z)",
    re.IGNORECASE | re.DOTALL,
)


def parse_verifier_response(text: str, options: list[str] | None = None) -> VerifierScore:
    """Extract rating, analysis, and the selected option from a judge reply.

    Accepts both the SELECTED OPTION and YOUR ANSWER labels seen in the
    wild; the selected option is mapped onto the option list with the
    standard canonicalization rules.
    """
    m = _RATING_RE.search(text)
    if not m:
        raise MalformedVerifierOutput(f"no RATING found in verifier reply: {text[:120]!r}")
    rating = float(m.group(1))
    clamped = not 0.0 <= rating <= 1.0
    rating = min(1.0, max(0.0, rating))

    analysis = ""
    am = _ANALYSIS_RE.search(text)
    if am:
        analysis = am.group(1).strip()

    selected = None
    rule = "rating-only"
    sm = _SELECTED_RE.search(text)
    if sm and options:
        mapping = canonicalize_answer(sm.group(1).strip(), options)
        if mapping.is_mapped:
            selected = mapping.option_index
            rule = f"selected-via-{mapping.match_rule.value}"
        else:
            rule = "selected-unmapped"
    return VerifierScore(
        rating=rating,
        analysis=analysis,
        selected_option=selected,
        parse_rule=rule,
        clamped=clamped,
    )


class VerifierClient:
    """Scores candidates through a stronger audio-capable backend."""

    def __init__(
        self,
        gateway: Gateway,
        backend_id: str,
        policy: VerifierPolicy | None = None,
        use_cache: bool = True,
    ):
        self.gateway = gateway
        self.backend_id = backend_id
        self.policy = policy or VerifierPolicy()
        self.use_cache = use_cache

    def score(self, trial: Trial, candidate: Candidate) -> VerifierScore:
        """Judge one candidate; retry malformed replies, then fall back to 0.5."""
        backend = self.gateway.backend(self.backend_id)
        prompt = build_verifier_prompt(trial, candidate)
        audio_b64 = sample_rate = None
        if trial.audio is not None:
            audio_b64, sample_rate = encode_audio(trial.audio)
        for attempt in range(1, self.policy.max_attempts + 1):
            request = QueryRequest(
                backend_id=self.backend_id,
                model_id=backend.model_id,
                prompt=prompt,
                decode=DecodeParams(DecodeMode.SAMPLE, 0.0, 1),
                audio_b64=audio_b64,
                sample_rate=sample_rate,
                want_logprobs=False,
                request_id=f"verify|{trial.id}|{attempt}",
                trial_ref=TrialRef(
                    trial_id=trial.id,
                    task_kind=trial.task_kind,
                    options=tuple(trial.options),
                    ground_truth=trial.ground_truth,
                ),
            )
            # retries must reach the backend again, so only attempt 1 may use the cache
            use_cache = self.use_cache and attempt == 1
            response, _ = self.gateway.execute(request, use_cache=use_cache)
            try:
                score = parse_verifier_response(response.candidates[0].text, list(trial.options))
                score.attempts = attempt
                return score
            except MalformedVerifierOutput:
                continue
        return VerifierScore(
            rating=self.policy.fallback_rating,
            parse_rule="fallback",
            fallback=True,
            attempts=self.policy.max_attempts,
        )
