"""Uniform access to model backends plus a persistent response cache.

Every backend (remote HTTP API, local bridge, or the simulated oracle)
answers the same request shape. The HTTP wire protocol is
POST /v1/generate with JSON
{model, audio_b64, sample_rate, prompt, decode:{mode, temperature, n,
beams, max_tokens}, want_logprobs} returning
{candidates:[{text, tokens, token_logprobs, cum_logprob}], model,
latency_ms}.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .audio import Waveform
from .trials import CanonicalAnswer, PromptBundle, TaskKind


class BackendError(RuntimeError):
    """Unrecoverable backend failure (auth, malformed payload, exhausted retries)."""


class TransientBackendError(BackendError):
    """Retryable failure: rate limit, timeout, 5xx."""


class CapabilityError(BackendError):
    """Request requires a capability the backend does not advertise."""


class DecodeMode(Enum):
    SAMPLE = "sample"
    BEAM = "beam"


@dataclass(frozen=True)
class DecodeParams:
    mode: DecodeMode = DecodeMode.SAMPLE
    temperature: float = 0.0
    num_samples: int = 1
    beam_width: int = 1
    max_tokens: int = 256

    def __post_init__(self):
        if self.mode is DecodeMode.SAMPLE and self.num_samples < 1:
            raise ValueError("sample mode needs num_samples >= 1")
        if self.mode is DecodeMode.BEAM and self.beam_width < 1:
            raise ValueError("beam mode needs beam_width >= 1")


@dataclass(frozen=True)
class TrialRef:
    """Ground-truth hint used only by simulated backends; never sent on the wire."""

    trial_id: str
    task_kind: TaskKind
    options: tuple[str, ...]
    ground_truth: int


@dataclass
class QueryRequest:
    backend_id: str
    model_id: str
    prompt: PromptBundle
    decode: DecodeParams
    audio_b64: str | None = None
    sample_rate: int | None = None
    want_logprobs: bool = True
    request_id: str = ""
    trial_ref: TrialRef | None = None


@dataclass
class Candidate:
    text: str
    tokens: list[str] = field(default_factory=list)
    token_logprobs: list[float] | None = None
    cum_logprob: float | None = None
    temperature: float | None = None
    canonical: CanonicalAnswer | None = None

    def validate(self) -> None:
        if self.token_logprobs is not None:
            if len(self.token_logprobs) != len(self.tokens):
                raise BackendError("token_logprobs length must match tokens")
            total = sum(self.token_logprobs)
            if self.cum_logprob is None or abs(total - self.cum_logprob) > 1e-6:
                raise BackendError("cum_logprob must equal the sum of token_logprobs")
            if self.cum_logprob > 1e-9:
                raise BackendError("cum_logprob must be <= 0")


@dataclass
class QueryResponse:
    candidates: list[Candidate]
    latency_ms: float = 0.0
    raw_digest: str = ""

    def sort_beams(self) -> None:
        self.candidates.sort(key=lambda c: (-(c.cum_logprob or 0.0), tuple(c.tokens)))


@dataclass
class QueryMeta:
    cache_hit: bool = False
    attempts: int = 1


class Backend:
    """Interface every backend implements."""

    backend_id: str
    model_id: str = ""
    capabilities: frozenset[str] = frozenset({"sample"})  # of {"sample","beam","logprobs"}
    temperature_range: tuple[float, float] = (0.0, 2.0)
    verbose: bool = False  # gets the "Just output the selected answer" suffix

    def generate(self, request: QueryRequest) -> QueryResponse:
        raise NotImplementedError


def encode_audio(wav: Waveform) -> tuple[str, int]:
    payload = base64.b64encode(wav.samples.astype(np.float32).tobytes()).decode("ascii")
    return payload, wav.sample_rate


def wire_request_body(request: QueryRequest) -> dict[str, Any]:
    return {
        "model": request.model_id,
        "audio_b64": request.audio_b64 or "",
        "sample_rate": request.sample_rate or 0,
        "prompt": request.prompt.user_text,
        "decode": {
            "mode": request.decode.mode.value,
            "temperature": request.decode.temperature,
            "n": request.decode.num_samples,
            "beams": request.decode.beam_width,
            "max_tokens": request.decode.max_tokens,
        },
        "want_logprobs": request.want_logprobs,
    }


def candidates_from_wire(doc: dict[str, Any], temperature: float | None) -> list[Candidate]:
    out = []
    for c in doc.get("candidates", []):
        cand = Candidate(
            text=c["text"],
            tokens=list(c.get("tokens", [])),
            token_logprobs=c.get("token_logprobs"),
            cum_logprob=c.get("cum_logprob"),
            temperature=temperature,
        )
        cand.validate()
        out.append(cand)
    return out


def cache_key(request: QueryRequest) -> str:
    """Digest of (backend, model, prompt bytes, audio digest, decode params)."""
    audio_digest = hashlib.sha256((request.audio_b64 or "").encode("ascii")).hexdigest()
    doc = {
        "backend": request.backend_id,
        "model": request.model_id,
        "prompt": request.prompt.user_text,
        "system": request.prompt.system_text,
        "audio": audio_digest,
        "decode": wire_request_body(request)["decode"],
        "want_logprobs": request.want_logprobs,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL cache, one file per backend; last entry per key wins."""

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._tables: dict[str, dict[str, dict]] = {}

    def _path(self, backend_id: str) -> Path:
        return self.cache_dir / f"{backend_id}.jsonl"

    def _table(self, backend_id: str) -> dict[str, dict]:
        if backend_id not in self._tables:
            table: dict[str, dict] = {}
            path = self._path(backend_id)
            if path.exists():
                for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        table[entry["key"]] = entry["response"]
                    except (json.JSONDecodeError, KeyError):
                        warnings.warn(f"corrupt cache line {line_no} in {path}; treated as miss")
            self._tables[backend_id] = table
        return self._tables[backend_id]

    def get(self, backend_id: str, key: str) -> QueryResponse | None:
        with self._lock:
            doc = self._table(backend_id).get(key)
        if doc is None:
            return None
        response = QueryResponse(
            candidates=[
                Candidate(
                    text=c["text"],
                    tokens=list(c.get("tokens", [])),
                    token_logprobs=c.get("token_logprobs"),
                    cum_logprob=c.get("cum_logprob"),
                    temperature=c.get("temperature"),
                )
                for c in doc["candidates"]
            ],
            latency_ms=doc.get("latency_ms", 0.0),
            raw_digest=doc.get("raw_digest", ""),
        )
        return response

    def put(self, backend_id: str, key: str, response: QueryResponse) -> None:
        doc = {
            "candidates": [
                {
                    "text": c.text,
                    "tokens": c.tokens,
                    "token_logprobs": c.token_logprobs,
                    "cum_logprob": c.cum_logprob,
                    "temperature": c.temperature,
                }
                for c in response.candidates
            ],
            "latency_ms": response.latency_ms,
            "raw_digest": response.raw_digest,
        }
        with self._lock:
            self._table(backend_id)[key] = doc
            with open(self._path(backend_id), "a", encoding="utf-8") as f:
                f.write(json.dumps({"key": key, "response": doc}) + "\n")


class TokenBucket:
    """Requests-per-minute limiter with injectable clock for tests."""

    def __init__(self, rpm: float | None, clock: Callable[[], float] = time.monotonic):
        self.rpm = rpm
        self.clock = clock
        self._lock = threading.Lock()
        self._tokens = float(rpm) if rpm else 0.0
        self._last = clock()

    def wait_time(self) -> float:
        if not self.rpm:
            return 0.0
        with self._lock:
            now = self.clock()
            self._tokens = min(self.rpm, self._tokens + (now - self._last) * self.rpm / 60.0)
            self._last = now
            if self._tokens >= 1.0:
                self._tokens -= 1.0
                return 0.0
            return (1.0 - self._tokens) * 60.0 / self.rpm


@dataclass
class RetryPolicy:
    max_attempts: int = 5
    base_delay_s: float = 1.0
    jitter: float = 0.25


class Gateway:
    """Backend registry with validation, retries, rate limits, and caching."""

    def __init__(
        self,
        cache: ResponseCache | None = None,
        retry: RetryPolicy | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng_seed: int = 0,
    ):
        self.cache = cache
        self.retry = retry or RetryPolicy()
        self.sleep = sleep
        self._backends: dict[str, Backend] = {}
        self._buckets: dict[str, TokenBucket] = {}
        self._rng = np.random.default_rng(rng_seed)
        self._lock = threading.Lock()
        self.query_count = 0
        self.cache_hits = 0

    def register(self, backend: Backend, rpm: float | None = None) -> None:
        self._backends[backend.backend_id] = backend
        self._buckets[backend.backend_id] = TokenBucket(rpm)

    def backend(self, backend_id: str) -> Backend:
        try:
            return self._backends[backend_id]
        except KeyError:
            raise BackendError(f"backend {backend_id!r} not registered")

    def _validate(self, backend: Backend, request: QueryRequest) -> None:
        decode = request.decode
        if decode.mode is DecodeMode.SAMPLE:
            lo, hi = backend.temperature_range
            if not lo <= decode.temperature <= hi:
                raise BackendError(
                    f"temperature {decode.temperature} outside {backend.backend_id!r} "
                    f"valid range [{lo}, {hi}]"
                )
            if "sample" not in backend.capabilities:
                raise CapabilityError(f"{backend.backend_id!r} cannot sample")
        else:
            if "beam" not in backend.capabilities:
                raise CapabilityError(f"{backend.backend_id!r} does not support beam decoding")
        if request.want_logprobs and "logprobs" not in backend.capabilities:
            raise CapabilityError(f"{backend.backend_id!r} does not expose logprobs")

    def query(self, request: QueryRequest) -> QueryResponse:
        """Dispatch with pre-validation, rate limiting, and retry/backoff."""
        backend = self.backend(request.backend_id)
        self._validate(backend, request)
        attempt = 0
        while True:
            wait = self._buckets[request.backend_id].wait_time()
            if wait > 0:
                self.sleep(wait)
            attempt += 1
            try:
                with self._lock:
                    self.query_count += 1
                response = backend.generate(request)
                break
            except TransientBackendError:
                if attempt >= self.retry.max_attempts:
                    raise BackendError(
                        f"{request.backend_id!r}: transient failures exhausted "
                        f"{self.retry.max_attempts} attempts"
                    )
                delay = self.retry.base_delay_s * (2 ** (attempt - 1))
                delay *= 1.0 + self.retry.jitter * float(self._rng.random())
                self.sleep(delay)
        self._check_response(request, response)
        return response

    def _check_response(self, request: QueryRequest, response: QueryResponse) -> None:
        for cand in response.candidates:
            cand.validate()
        if request.decode.mode is DecodeMode.BEAM:
            response.sort_beams()
            if len(response.candidates) > request.decode.beam_width:
                raise BackendError("beam response larger than requested width")
        elif len(response.candidates) != request.decode.num_samples:
            raise BackendError(
                f"sample mode returned {len(response.candidates)} candidates, "
                f"expected {request.decode.num_samples}"
            )

    def execute(self, request: QueryRequest, use_cache: bool = True) -> tuple[QueryResponse, QueryMeta]:
        """Cache-aware query; a hit performs zero backend operations."""
        if self.cache is None or not use_cache:
            return self.query(request), QueryMeta(cache_hit=False)
        key = cache_key(request)
        cached = self.cache.get(request.backend_id, key)
        if cached is not None:
            with self._lock:
                self.cache_hits += 1
            return cached, QueryMeta(cache_hit=True)
        response = self.query(request)
        self.cache.put(request.backend_id, key, response)
        return response, QueryMeta(cache_hit=False)


class HttpBackend(Backend):
    """Remote backend speaking the /v1/generate wire protocol.

    Credentials come from the TTC_BACKEND_<NAME>_KEY environment variable.
    """

    def __init__(
        self,
        backend_id: str,
        base_url: str,
        model_id: str,
        capabilities: frozenset[str] = frozenset({"sample", "beam", "logprobs"}),
        temperature_range: tuple[float, float] = (0.0, 2.0),
        verbose: bool = False,
        timeout_s: float = 120.0,
        require_key: bool = False,
    ):
        self.backend_id = backend_id
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.capabilities = capabilities
        self.temperature_range = temperature_range
        self.verbose = verbose
        self.timeout_s = timeout_s
        self.require_key = require_key

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(f"TTC_BACKEND_{self.backend_id.upper().replace('-', '_')}_KEY")
        if self.require_key and not key:
            raise BackendError(f"missing credential for backend {self.backend_id!r}")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, request: QueryRequest) -> QueryResponse:
        import requests

        body = wire_request_body(request)
        started = time.monotonic()
        try:
            resp = requests.post(
                f"{self.base_url}/v1/generate",
                json=body,
                headers=self._headers(),
                timeout=self.timeout_s,
            )
        except requests.RequestException as e:
            raise TransientBackendError(f"{self.backend_id}: {e}") from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"{self.backend_id}: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise BackendError(f"{self.backend_id}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            doc = resp.json()
            temperature = (
                request.decode.temperature if request.decode.mode is DecodeMode.SAMPLE else None
            )
            candidates = candidates_from_wire(doc, temperature)
        except (ValueError, KeyError) as e:
            raise BackendError(f"{self.backend_id}: malformed payload: {e}") from e
        return QueryResponse(
            candidates=candidates,
            latency_ms=(time.monotonic() - started) * 1000.0,
            raw_digest=hashlib.sha256(resp.content).hexdigest(),
        )
