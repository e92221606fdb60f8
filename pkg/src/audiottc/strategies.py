"""The six inference policies and their pure aggregation primitives.

Per candidate set the aggregators produce a per-option accumulated score
and take the argmax: majority voting counts mapped candidates, beam
weighting turns cumulative log-likelihoods into softmax weights, and the
verifier modes use judge ratings either as a top-1 rule or as weights.
Raw log-likelihood weighting (non-positive weights summed per option) is
kept behind a flag for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Sequence

from .gateway import (
    Backend,
    CapabilityError,
    Candidate,
    DecodeMode,
    DecodeParams,
    Gateway,
    QueryRequest,
    TrialRef,
    encode_audio,
)
from .trials import (
    PromptBundle,
    SuffixPolicy,
    Trial,
    apply_cot,
    build_base_prompt,
    canonicalize_answer,
)


class StrategyError(RuntimeError):
    pass


class StrategyKind(Enum):
    DIRECT = "no-ttc"
    COT = "cot"
    MAJORITY = "majority"
    BSW = "bs-w"
    LLM_TOP1 = "llm-top1"
    LLM_W = "llm-w"


class TieBreak(Enum):
    LOWEST_TEMPERATURE = "lowest_temperature"
    FIRST_CANDIDATE = "first_candidate"
    LEX_SMALLEST_OPTION = "lex_smallest_option"


class WeightSource(Enum):
    LOGLIK_SOFTMAX = "loglik_softmax"
    LOGLIK_RAW = "loglik_raw"
    VERIFIER_SCORE = "verifier_score"
    UNIFORM = "uniform"


DEFAULT_TEMPERATURE_GRID = tuple(round(0.2 * i, 1) for i in range(11))  # 0.0 .. 2.0
DEFAULT_BEAM_WIDTH = 5
BEAM_SWEEP_RANGE = (2, 7)


@dataclass
class StrategyConfig:
    kind: StrategyKind
    temperature_grid: tuple[float, ...] = DEFAULT_TEMPERATURE_GRID
    beam_width: int = DEFAULT_BEAM_WIDTH
    verifier_backend: str | None = None
    tie_break: TieBreak | None = None  # None picks the per-kind default
    raw_loglik_weights: bool = False
    length_normalize: bool = False
    use_verifier_answer: bool = False
    max_tokens: int = 256
    direct_temperature: float = 0.0  # nonzero only for temperature sweeps

    @property
    def label(self) -> str:
        return self.kind.value

    def effective_tie_break(self) -> TieBreak:
        if self.tie_break is not None:
            return self.tie_break
        if self.kind is StrategyKind.MAJORITY:
            return TieBreak.LOWEST_TEMPERATURE
        return TieBreak.FIRST_CANDIDATE

    def validate_against(self, backend: Backend, verifier: Backend | None) -> None:
        if self.kind is StrategyKind.MAJORITY and len(self.temperature_grid) < 2:
            raise StrategyError("majority voting needs a temperature grid of >= 2 values")
        if self.kind is StrategyKind.BSW:
            missing = {"beam", "logprobs"} - set(backend.capabilities)
            if missing:
                raise CapabilityError(
                    f"strategy {self.label} needs {sorted(missing)} from backend "
                    f"{backend.backend_id!r}"
                )
        if self.kind in (StrategyKind.LLM_TOP1, StrategyKind.LLM_W) and verifier is None:
            raise StrategyError(f"strategy {self.label} needs a verifier backend")
        lo, hi = backend.temperature_range
        if self.kind is StrategyKind.MAJORITY:
            bad = [t for t in self.temperature_grid if not lo <= t <= hi]
            if bad:
                raise StrategyError(
                    f"temperatures {bad} outside backend {backend.backend_id!r} "
                    f"range [{lo}, {hi}]"
                )


@dataclass
class AggregationWeights:
    values: dict[int, float]  # candidate index -> weight
    source: WeightSource


@dataclass
class StrategyOutcome:
    final_option: int | None
    option_scores: dict[int, float]
    candidates: list[Candidate]
    weights: AggregationWeights | None = None
    decision_rule: str = ""
    verifier_ratings: list[float] | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def is_mapped(self) -> bool:
        return self.final_option is not None


# -- beam selection over a token lattice --------------------------------------


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[str, ...]
    token_logprobs: tuple[float, ...]
    cum_logprob: float


def select_top_beams(
    steps: Sequence[Mapping[str, float]], beam_width: int
) -> list[BeamHypothesis]:
    """Top-B sequences by cumulative log-probability under frontier pruning.

    ``steps[t]`` maps each extension token at step t to its log-probability.
    Keeps the best ``beam_width`` prefixes per step; ties break by
    lexicographic token order.
    """
    if beam_width < 1:
        raise StrategyError("beam width must be >= 1")
    frontier: list[BeamHypothesis] = [BeamHypothesis((), (), 0.0)]
    for step in steps:
        expanded = [
            BeamHypothesis(h.tokens + (tok,), h.token_logprobs + (lp,), h.cum_logprob + lp)
            for h in frontier
            for tok, lp in step.items()
        ]
        expanded.sort(key=lambda h: (-h.cum_logprob, h.tokens))
        frontier = expanded[:beam_width]
    return frontier


# -- aggregation over candidate sets ------------------------------------------


def _require_canonical(candidates: list[Candidate]) -> None:
    if not candidates:
        raise StrategyError("empty candidate list")
    for i, c in enumerate(candidates):
        if c.canonical is None:
            raise StrategyError(f"candidate {i} not canonicalized")


def _argmax_option(
    option_scores: dict[int, float],
    candidates: list[Candidate],
    options: list[str],
    tie_break: TieBreak,
) -> int:
    best = max(option_scores.values())
    tied = sorted(i for i, s in option_scores.items() if s == best)
    if len(tied) == 1:
        return tied[0]

    def first_supporter(opt: int) -> int:
        return next(
            i for i, c in enumerate(candidates) if c.canonical and c.canonical.option_index == opt
        )

    if tie_break is TieBreak.LEX_SMALLEST_OPTION:
        return min(tied, key=lambda i: options[i])
    if tie_break is TieBreak.LOWEST_TEMPERATURE:
        def min_temp(opt: int) -> float:
            temps = [
                c.temperature
                for c in candidates
                if c.canonical and c.canonical.option_index == opt and c.temperature is not None
            ]
            return min(temps) if temps else math.inf

        return min(tied, key=lambda i: (min_temp(i), first_supporter(i)))
    return min(tied, key=first_supporter)


def majority_vote(
    candidates: list[Candidate],
    options: list[str],
    tie_break: TieBreak = TieBreak.LOWEST_TEMPERATURE,
) -> StrategyOutcome:
    """Modal option over mapped candidates; unmapped ones are excluded but kept."""
    _require_canonical(candidates)
    counts: dict[int, float] = {}
    for c in candidates:
        if c.canonical.is_mapped:
            counts[c.canonical.option_index] = counts.get(c.canonical.option_index, 0.0) + 1.0
    if not counts:
        return StrategyOutcome(None, {}, candidates, decision_rule="majority(no mapped votes)")
    winner = _argmax_option(counts, candidates, options, tie_break)
    weights = AggregationWeights(
        {i: 1.0 for i, c in enumerate(candidates) if c.canonical.is_mapped},
        WeightSource.UNIFORM,
    )
    return StrategyOutcome(
        winner, counts, candidates, weights=weights,
        decision_rule=f"majority({tie_break.value})",
    )


def _softmax(scores: list[float]) -> list[float]:
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def weight_by_loglik(
    candidates: list[Candidate],
    options: list[str],
    tie_break: TieBreak = TieBreak.FIRST_CANDIDATE,
    raw_weights: bool = False,
    length_normalize: bool = False,
) -> StrategyOutcome:
    """Per-option accumulation of log-likelihood weights over the candidate set.

    Default weights are softmax(cum_logprob), a proper convex combination
    that preserves the likelihood ordering; ``raw_weights`` keeps the
    literal (non-positive) cumulative log-likelihoods instead.
    """
    _require_canonical(candidates)
    if any(c.cum_logprob is None for c in candidates):
        raise CapabilityError("log-likelihood weighting needs cum_logprob on every candidate")
    scores = [
        c.cum_logprob / max(1, len(c.tokens)) if length_normalize else c.cum_logprob
        for c in candidates
    ]
    alphas = scores if raw_weights else _softmax(scores)
    source = WeightSource.LOGLIK_RAW if raw_weights else WeightSource.LOGLIK_SOFTMAX
    option_scores: dict[int, float] = {}
    for c, a in zip(candidates, alphas):
        if c.canonical.is_mapped:
            idx = c.canonical.option_index
            option_scores[idx] = option_scores.get(idx, 0.0) + a
    if not option_scores:
        return StrategyOutcome(None, {}, candidates, decision_rule="loglik(no mapped votes)")
    winner = _argmax_option(option_scores, candidates, options, tie_break)
    return StrategyOutcome(
        winner,
        option_scores,
        candidates,
        weights=AggregationWeights(dict(enumerate(alphas)), source),
        decision_rule=f"loglik({source.value},{tie_break.value})",
    )


def verifier_select(
    candidates: list[Candidate],
    ratings: Sequence[float],
    mode: str,
    options: list[str],
    tie_break: TieBreak = TieBreak.FIRST_CANDIDATE,
) -> StrategyOutcome:
    """Aggregate judge ratings: ``top1`` picks the best-rated mapped candidate,
    ``weighted`` sums ratings per option."""
    _require_canonical(candidates)
    if len(ratings) != len(candidates):
        raise StrategyError("need exactly one rating per candidate")
    for s in ratings:
        if not 0.0 <= s <= 1.0:
            raise StrategyError(f"verifier rating {s} outside [0, 1]")
    mapped = [(i, c) for i, c in enumerate(candidates) if c.canonical.is_mapped]
    if not mapped:
        return StrategyOutcome(
            None, {}, candidates, verifier_ratings=list(ratings),
            decision_rule=f"verifier-{mode}(no mapped votes)",
        )
    weights = AggregationWeights(
        {i: float(ratings[i]) for i, _ in mapped}, WeightSource.VERIFIER_SCORE
    )
    if mode == "top1":
        option_scores: dict[int, float] = {}
        for i, c in mapped:
            idx = c.canonical.option_index
            option_scores[idx] = max(option_scores.get(idx, 0.0), float(ratings[i]))
        best = max(ratings[i] for i, _ in mapped)
        tied = [(i, c) for i, c in mapped if ratings[i] == best]
        winner_i = _pick_candidate(tied, options, tie_break)
        winner = candidates[winner_i].canonical.option_index
    elif mode == "weighted":
        option_scores = {}
        for i, c in mapped:
            idx = c.canonical.option_index
            option_scores[idx] = option_scores.get(idx, 0.0) + float(ratings[i])
        winner = _argmax_option(option_scores, candidates, options, tie_break)
    else:
        raise StrategyError(f"unknown verifier mode {mode!r}")
    return StrategyOutcome(
        winner,
        option_scores,
        candidates,
        weights=weights,
        verifier_ratings=list(ratings),
        decision_rule=f"verifier-{mode}({tie_break.value})",
    )


def _pick_candidate(
    tied: list[tuple[int, Candidate]],
    options: list[str],
    tie_break: TieBreak,
) -> int:
    if tie_break is TieBreak.LEX_SMALLEST_OPTION:
        return min(tied, key=lambda ic: options[ic[1].canonical.option_index])[0]
    if tie_break is TieBreak.LOWEST_TEMPERATURE:
        return min(tied, key=lambda ic: (ic[1].temperature if ic[1].temperature is not None else math.inf, ic[0]))[0]
    return tied[0][0]


# -- orchestration -------------------------------------------------------------


def _suffix_for(backend: Backend) -> SuffixPolicy:
    return SuffixPolicy.JUST_OUTPUT_ANSWER if backend.verbose else SuffixPolicy.NONE


def _build_request(
    trial: Trial,
    backend: Backend,
    prompt: PromptBundle,
    decode: DecodeParams,
    request_id: str,
) -> QueryRequest:
    audio_b64 = sample_rate = None
    if trial.audio is not None:
        audio_b64, sample_rate = encode_audio(trial.audio)
    return QueryRequest(
        backend_id=backend.backend_id,
        model_id=backend.model_id,
        prompt=prompt,
        decode=decode,
        audio_b64=audio_b64,
        sample_rate=sample_rate,
        want_logprobs="logprobs" in backend.capabilities,
        request_id=request_id,
        trial_ref=TrialRef(
            trial_id=trial.id,
            task_kind=trial.task_kind,
            options=tuple(trial.options),
            ground_truth=trial.ground_truth,
        ),
    )


def _canonicalize_all(candidates: list[Candidate], trial: Trial) -> None:
    for c in candidates:
        c.canonical = canonicalize_answer(c.text, trial.options)


def run_strategy(
    config: StrategyConfig,
    trial: Trial,
    gateway: Gateway,
    backend_id: str,
    verifier: Any = None,
    use_cache: bool = True,
) -> StrategyOutcome:
    """Execute one strategy on one trial through the gateway.

    ``verifier`` must provide ``score(trial, candidate) -> VerifierScore``
    for the LLM strategies. All raw candidates and weights end up in the
    returned outcome; candidate order is (temperature ascending, beam rank).
    """
    backend = gateway.backend(backend_id)
    tie = config.effective_tie_break()
    cache_hits = 0
    calls = 0

    def dispatch(prompt: PromptBundle, decode: DecodeParams, tag: str) -> list[Candidate]:
        nonlocal cache_hits, calls
        request = _build_request(trial, backend, prompt, decode, f"{trial.id}|{backend_id}|{config.label}|{tag}")
        response, meta = gateway.execute(request, use_cache=use_cache)
        cache_hits += int(meta.cache_hit)
        calls += 1
        for c in response.candidates:
            if c.temperature is None and decode.mode is DecodeMode.SAMPLE:
                c.temperature = decode.temperature
        return response.candidates

    kind = config.kind
    if kind in (StrategyKind.DIRECT, StrategyKind.COT):
        prompt = build_base_prompt(trial, _suffix_for(backend))
        if kind is StrategyKind.COT:
            prompt = apply_cot(prompt, trial.task_kind)
        tau = config.direct_temperature
        candidates = dispatch(prompt, DecodeParams(DecodeMode.SAMPLE, tau, 1, max_tokens=config.max_tokens), f"t{tau}")
        _canonicalize_all(candidates, trial)
        c = candidates[0]
        if c.canonical.is_mapped:
            outcome = StrategyOutcome(
                c.canonical.option_index,
                {c.canonical.option_index: 1.0},
                candidates,
                decision_rule=config.label,
            )
        else:
            outcome = StrategyOutcome(None, {}, candidates, decision_rule=f"{config.label}(unmapped)")
    elif kind is StrategyKind.MAJORITY:
        candidates = []
        for tau in config.temperature_grid:
            candidates.extend(
                dispatch(
                    build_base_prompt(trial, _suffix_for(backend)),
                    DecodeParams(DecodeMode.SAMPLE, tau, 1, max_tokens=config.max_tokens),
                    f"tau{tau}",
                )
            )
        _canonicalize_all(candidates, trial)
        outcome = majority_vote(candidates, trial.options, tie)
    elif kind is StrategyKind.BSW:
        candidates = dispatch(
            build_base_prompt(trial, _suffix_for(backend)),
            DecodeParams(DecodeMode.BEAM, beam_width=config.beam_width, max_tokens=config.max_tokens),
            f"beam{config.beam_width}",
        )
        _canonicalize_all(candidates, trial)
        outcome = weight_by_loglik(
            candidates,
            trial.options,
            tie,
            raw_weights=config.raw_loglik_weights,
            length_normalize=config.length_normalize,
        )
    elif kind in (StrategyKind.LLM_TOP1, StrategyKind.LLM_W):
        if verifier is None:
            raise StrategyError(f"{config.label} needs a verifier")
        source = "beam"
        prompt = build_base_prompt(trial, SuffixPolicy.NONE, request_explanation=True)
        if "beam" in backend.capabilities:
            candidates = dispatch(
                prompt,
                DecodeParams(DecodeMode.BEAM, beam_width=config.beam_width, max_tokens=config.max_tokens),
                f"beam{config.beam_width}",
            )
        else:  # capability-driven fallback: one sample per grid temperature
            source = "sample-fallback"
            candidates = []
            for tau in config.temperature_grid:
                candidates.extend(
                    dispatch(prompt, DecodeParams(DecodeMode.SAMPLE, tau, 1, max_tokens=config.max_tokens), f"tau{tau}")
                )
        _canonicalize_all(candidates, trial)
        scores = [verifier.score(trial, c) for c in candidates]
        if config.use_verifier_answer:
            for c, s in zip(candidates, scores):
                if s.selected_option is not None:
                    c.canonical = replace(c.canonical, option_index=s.selected_option)
        mode = "top1" if kind is StrategyKind.LLM_TOP1 else "weighted"
        outcome = verifier_select(candidates, [s.rating for s in scores], mode, trial.options, tie)
        outcome.extras["candidate_source"] = source
        outcome.extras["verifier_fallbacks"] = sum(1 for s in scores if s.fallback)
        if config.use_verifier_answer:
            outcome.extras["verifier_answer_mode"] = True
    else:
        raise StrategyError(f"unknown strategy kind {kind!r}")

    outcome.extras.setdefault("backend_calls", calls)
    outcome.extras.setdefault("cache_hits", cache_hits)
    return outcome
