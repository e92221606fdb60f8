"""Simulated backends: a configurable answer oracle and a judge test double.

The oracle emits the correct option with a per-task probability, wraps
answers in free-text verbiage with a configurable rate, and draws
cumulative log-likelihoods from separate normal distributions for correct
and wrong answers (correct centered higher). Responses are a pure function
of (config, base seed, request), so runs are reproducible regardless of
scheduling or arrival order.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .gateway import (
    Backend,
    BackendError,
    Candidate,
    DecodeMode,
    QueryRequest,
    QueryResponse,
    cache_key,
)
from .strategies import select_top_beams
from .trials import TaskKind, canonicalize_answer


@dataclass
class OracleConfig:
    """Behaviour knobs for the simulated answer oracle."""

    accuracy: dict[TaskKind, float] | float = 0.7  # p(correct) per task (or one value)
    temperature_slope: float = 0.0  # p decreases by slope * tau
    verbosity: float = 0.0  # probability of a wordy wrapper around the option
    mu_correct: float = -1.0  # mean cum_logprob of correct candidates
    mu_wrong: float = -4.0
    sigma: float = 0.5

    def __post_init__(self):
        probs = [self.accuracy] if isinstance(self.accuracy, float) else self.accuracy.values()
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("oracle accuracy must lie in [0, 1]")
        if self.mu_correct > 0.0 or self.mu_wrong > 0.0:
            raise ValueError("logprob means must be <= 0")

    def p_correct(self, task_kind: TaskKind, temperature: float) -> float:
        base = self.accuracy if isinstance(self.accuracy, float) else self.accuracy[task_kind]
        return float(min(1.0, max(0.0, base - self.temperature_slope * temperature)))


def _request_rng(base_seed: int, request: QueryRequest) -> np.random.Generator:
    # a pure function of (seed, cache key): byte-identical requests always get
    # byte-identical responses, exactly like a deterministic real backend, so
    # caching and concurrent scheduling can never change run content
    material = f"{base_seed}|{cache_key(request)}"
    digest = hashlib.sha256(material.encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _spread_logprob(tokens: list[str], cum: float) -> list[float]:
    if not tokens:
        return []
    per = cum / len(tokens)
    lps = [per] * len(tokens)
    lps[-1] = cum - per * (len(tokens) - 1)
    return lps


def _wrap_option(option: str, rng: np.random.Generator) -> str:
    parts = [p.strip() for p in option.split(",")]
    if all(p.isdigit() for p in parts):
        return f"The answer is [{', '.join(parts)}]."
    tails = [
        "because that is what I heard",
        "based on the audio",
        "as far as I can tell",
    ]
    return f"The answer is {option} {tails[int(rng.integers(0, len(tails)))]}."


class SimulatedOracleBackend(Backend):
    """Deterministic test double implementing both decode modes with logprobs."""

    capabilities = frozenset({"sample", "beam", "logprobs"})

    def __init__(
        self,
        backend_id: str = "sim-oracle",
        config: OracleConfig | None = None,
        seed: int = 0,
        model_id: str = "oracle-1",
        temperature_range: tuple[float, float] = (0.0, 2.0),
        verbose: bool = False,
    ):
        self.backend_id = backend_id
        self.config = config or OracleConfig()
        self.seed = seed
        self.model_id = model_id
        self.temperature_range = temperature_range
        self.verbose = verbose

    def generate(self, request: QueryRequest) -> QueryResponse:
        if request.trial_ref is None:
            raise BackendError("simulated oracle needs trial_ref on the request")
        rng = _request_rng(self.seed, request)
        ref = request.trial_ref
        options = list(ref.options)
        cfg = self.config

        def draw_cum(correct: bool) -> float:
            mu = cfg.mu_correct if correct else cfg.mu_wrong
            return float(min(0.0, rng.normal(mu, cfg.sigma)))

        def finish(option: str, cum: float, temperature: float | None) -> Candidate:
            text = _wrap_option(option, rng) if rng.random() < cfg.verbosity else option
            tokens = text.split()
            return Candidate(
                text=text,
                tokens=tokens,
                token_logprobs=_spread_logprob(tokens, cum),
                cum_logprob=cum,
                temperature=temperature,
            )

        candidates: list[Candidate] = []
        if request.decode.mode is DecodeMode.SAMPLE:
            tau = request.decode.temperature
            p = cfg.p_correct(ref.task_kind, tau)
            wrong = [o for i, o in enumerate(options) if i != ref.ground_truth]
            for _ in range(request.decode.num_samples):
                correct = bool(rng.random() < p)
                option = options[ref.ground_truth] if correct else wrong[int(rng.integers(0, len(wrong)))]
                candidates.append(finish(option, draw_cum(correct), tau))
        else:
            step = {
                o: draw_cum(i == ref.ground_truth) for i, o in enumerate(options)
            }
            for hyp in select_top_beams([step], request.decode.beam_width):
                candidates.append(finish(hyp.tokens[0], hyp.cum_logprob, None))
        return QueryResponse(candidates=candidates, latency_ms=float(rng.uniform(1.0, 5.0)))


_RESPONSE_SECTION_RE = re.compile(
    r"Machine's Response:\n(.*?)\n\nEvaluation Process:", re.DOTALL
)


@dataclass
class VerifierOracleConfig:
    """Judge test double: near-perfect correctness detection by default."""

    correct_low: float = 0.9
    incorrect_high: float = 0.1
    malform_first_n: int = 0  # emit unparseable replies for the first n attempts per key


class SimulatedVerifierBackend(Backend):
    """Judge double that rates candidates by comparing them to ground truth."""

    capabilities = frozenset({"sample"})

    def __init__(
        self,
        backend_id: str = "sim-verifier",
        config: VerifierOracleConfig | None = None,
        seed: int = 0,
        model_id: str = "judge-1",
    ):
        self.backend_id = backend_id
        self.config = config or VerifierOracleConfig()
        self.seed = seed
        self.model_id = model_id
        self._malform_counts: dict[str, int] = {}

    def generate(self, request: QueryRequest) -> QueryResponse:
        if request.trial_ref is None:
            raise BackendError("simulated verifier needs trial_ref on the request")
        m = _RESPONSE_SECTION_RE.search(request.prompt.user_text)
        if not m:
            raise BackendError("prompt does not look like a verifier prompt")
        key = cache_key(request)
        seen = self._malform_counts.get(key, 0)
        if seen < self.config.malform_first_n:
            self._malform_counts[key] = seen + 1
            return QueryResponse(
                candidates=[Candidate(text="I think it's fine.", tokens=["I", "think", "it's", "fine."])],
                latency_ms=1.0,
            )
        rng = _request_rng(self.seed, request)
        ref = request.trial_ref
        mapping = canonicalize_answer(m.group(1).strip(), list(ref.options))
        correct = mapping.option_index == ref.ground_truth
        if correct:
            rating = self.config.correct_low + (1.0 - self.config.correct_low) * float(rng.random())
            verdict = "matches"
        else:
            rating = self.config.incorrect_high * float(rng.random())
            verdict = "contradicts"
        text = (
            f"RATING: {rating:.2f}\n"
            f"ANALYSIS: The machine's response {verdict} what can be heard in the audio.\n"
            f"SELECTED OPTION: {ref.options[ref.ground_truth]}"
        )
        return QueryResponse(
            candidates=[Candidate(text=text, tokens=text.split())],
            latency_ms=float(rng.uniform(1.0, 3.0)),
        )
