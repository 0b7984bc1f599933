"""Instruction-following rewrite client with three zero-shot generation modes
and a record/replay stub so automated runs never touch the network.

Modes: prompt-style rewriting, edit-style rewriting, and grammatical cleanup
of word-replacement output.  Raw completions arrive with stray whitespace and
wrapping quotes; ``normalize`` canonicalizes them without touching interior
wording.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import CommentStore
from .lexicon import Lexicon, replace as wr_replace, _child_rng
from .pool import PairCandidate

__all__ = [
    "RewriteMode",
    "LlmConfig",
    "RewriteRequest",
    "RewriteError",
    "ReplayMissError",
    "build_request",
    "normalize",
    "ReplayClient",
    "RecordingClient",
    "HttpLlmClient",
    "GenerationBudget",
    "generate_llm_candidates",
    "METHOD_TAGS",
]

logger = logging.getLogger(__name__)


class RewriteMode(str, Enum):
    ZERO_SHOT = "zero_shot"
    EDIT = "edit"
    POSTPROCESS_WR = "postprocess_wr"


METHOD_TAGS = {
    RewriteMode.ZERO_SHOT: "gpt_zero_shot",
    RewriteMode.EDIT: "gpt_edit",
    RewriteMode.POSTPROCESS_WR: "gpt_postprocess",
}


class RewriteError(RuntimeError):
    pass


class ReplayMissError(RewriteError):
    """The replay store has no recording for this request."""


@dataclass
class LlmConfig:
    temperature: float = 0.7
    top_p: float = 1.0
    max_tokens: int = 64  # applied to the zero-shot mode only
    models: Mapping[str, str] = field(
        default_factory=lambda: {
            RewriteMode.ZERO_SHOT.value: "text-davinci-001",
            RewriteMode.EDIT.value: "text-davinci-edit-001",
            RewriteMode.POSTPROCESS_WR.value: "text-davinci-edit-001",
        }
    )
    api_key_env: str = "LLM_API_KEY"
    base_url: str = "https://api.openai.com/v1"
    rate_limit_per_minute: int = 60
    max_retries: int = 3

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class RewriteRequest:
    mode: str
    model: str
    temperature: float
    top_p: float
    prompt: str | None = None       # zero-shot
    input: str | None = None        # edit-style modes
    instruction: str | None = None  # edit-style modes
    max_tokens: int | None = None

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @property
    def request_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def build_request(
    mode: RewriteMode,
    s: str,
    j: str,
    j_prime: str,
    config: LlmConfig | None = None,
    *,
    display_names: Mapping[str, str] | None = None,
    wr_text: str | None = None,
) -> RewriteRequest:
    """Deterministically assemble the provider request for one rewrite.

    For the word-replacement postprocess mode, ``wr_text`` must carry the
    replacement output; when word replacement found nothing to change there is
    nothing to clean up and a RewriteError is raised.
    """
    config = config or LlmConfig()
    names = display_names or {}
    j_disp = names.get(j, j.lower())
    jp_disp = names.get(j_prime, j_prime.lower())
    mode = RewriteMode(mode)
    model = config.models[mode.value]
    common = {"mode": mode.value, "model": model, "temperature": config.temperature, "top_p": config.top_p}
    if mode is RewriteMode.ZERO_SHOT:
        prompt = f"Please rewrite the following sentence to be about {jp_disp} rather than {j_disp}:\n{s}"
        return RewriteRequest(prompt=prompt, max_tokens=config.max_tokens, **common)
    if mode is RewriteMode.EDIT:
        # the reference instruction carries a double space before "rather"
        return RewriteRequest(input=s, instruction=f"Rewrite the text to be about {jp_disp}  rather than {j_disp}", **common)
    if wr_text is None:
        raise RewriteError("postprocess mode requires word-replacement output, got none")
    return RewriteRequest(input=wr_text, instruction="Fix grammatical errors and logical inconsistencies", **common)


_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’"))


def normalize(raw: str) -> str:
    """Strip surrounding whitespace and wrapping quote pairs (to a fixpoint,
    so the function is idempotent), and collapse internal runs of spaces.
    Interior wording and casing are never altered.  Raises RewriteError when
    nothing remains."""
    text = raw
    while True:
        stripped = text.strip()
        for left, right in _QUOTE_PAIRS:
            if len(stripped) >= 2 and stripped.startswith(left) and stripped.endswith(right):
                stripped = stripped[1:-1]
                break
        if stripped == text:
            break
        text = stripped
    text = re.sub(r" {2,}", " ", text)
    if not text:
        raise RewriteError("completion is empty after normalization")
    return text


class ReplayClient:
    """Serves recorded completions; unrecorded requests fail loudly."""

    def __init__(self, fixtures: str | Path | Mapping[str, str] | None = None):
        self.responses: dict[str, str] = {}
        if isinstance(fixtures, (str, Path)):
            self.load(fixtures)
        elif fixtures:
            self.responses.update(fixtures)

    def load(self, path: str | Path) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                record = json.loads(line)
                self.responses[record["request_hash"]] = record["response"]

    def record(self, request: RewriteRequest, response: str) -> None:
        self.responses[request.request_hash] = response

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for h in sorted(self.responses):
                fh.write(json.dumps({"request_hash": h, "response": self.responses[h]}, sort_keys=True, ensure_ascii=False) + "\n")

    def rewrite(self, request: RewriteRequest) -> str:
        try:
            return self.responses[request.request_hash]
        except KeyError:
            raise ReplayMissError(f"no recording for request {request.request_hash[:12]} ({request.mode})") from None


class RecordingClient:
    """Wraps a live client and appends every exchange to a replay store."""

    def __init__(self, inner, store: ReplayClient, path: str | Path | None = None):
        self.inner = inner
        self.store = store
        self.path = Path(path) if path else None

    def rewrite(self, request: RewriteRequest) -> str:
        response = self.inner.rewrite(request)
        self.store.record(request, response)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"request_hash": request.request_hash, "response": response}, sort_keys=True, ensure_ascii=False) + "\n")
        return response


class _RateLimiter:
    def __init__(self, per_minute: int):
        self.interval = 60.0 / max(1, per_minute)
        self.lock = threading.Lock()
        self.next_at = 0.0

    def wait(self) -> None:
        with self.lock:
            now = time.monotonic()
            delay = max(0.0, self.next_at - now)
            self.next_at = max(now, self.next_at) + self.interval
        if delay:
            time.sleep(delay)


class HttpLlmClient:
    """Thin JSON-over-HTTPS client with retries and a request rate limit.

    Credentials come from the environment variable named in the config; they
    are never read from configuration files.
    """

    def __init__(self, config: LlmConfig | None = None):
        self.config = config or LlmConfig()
        self._limiter = _RateLimiter(self.config.rate_limit_per_minute)

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise RewriteError(f"environment variable {self.config.api_key_env} is not set")
        return key

    def rewrite(self, request: RewriteRequest) -> str:
        import httpx

        key = self._api_key()
        if request.prompt is not None:
            url = f"{self.config.base_url}/completions"
            payload = {
                "model": request.model,
                "prompt": request.prompt,
                "temperature": request.temperature,
                "top_p": request.top_p,
                "max_tokens": request.max_tokens,
            }
        else:
            url = f"{self.config.base_url}/edits"
            payload = {
                "model": request.model,
                "input": request.input,
                "instruction": request.instruction,
                "temperature": request.temperature,
                "top_p": request.top_p,
            }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries):
            self._limiter.wait()
            try:
                response = httpx.post(url, json=payload, headers={"Authorization": f"Bearer {key}"}, timeout=60.0)
                response.raise_for_status()
                body = response.json()
                text = body["choices"][0]["text"]
                if not text:
                    raise RewriteError("provider returned an empty completion")
                return text
            except Exception as exc:  # noqa: BLE001 - retry any transport failure
                last_error = exc
                time.sleep(min(8.0, 2.0**attempt))
        raise RewriteError(f"rewrite failed after {self.config.max_retries} attempts: {last_error}")


@dataclass
class GenerationBudget:
    """Attempt cap and success quota for one generation mode."""

    max_attempts: int | None
    target_successes: int


DEFAULT_BUDGETS = {
    RewriteMode.ZERO_SHOT: GenerationBudget(max_attempts=2250, target_successes=250),
    RewriteMode.EDIT: GenerationBudget(max_attempts=750, target_successes=100),
    RewriteMode.POSTPROCESS_WR: GenerationBudget(max_attempts=None, target_successes=100),
}


def generate_llm_candidates(
    store: CommentStore,
    gc,
    client,
    mode: RewriteMode,
    source_group: str,
    target_group: str,
    *,
    lexicon: Lexicon | None = None,
    config: LlmConfig | None = None,
    budget: GenerationBudget | None = None,
    seed: int = 0,
    p_threshold: float = 0.5,
) -> list[PairCandidate]:
    """Run one mode over the comments labeled with the source group, post-
    filtering with the group classifier.  Only completed responses count as
    attempts; generation stops at the attempt cap or the success quota."""
    mode = RewriteMode(mode)
    budget = budget or DEFAULT_BUDGETS[mode]
    config = config or LlmConfig()
    display_names = None
    if lexicon is not None:
        display_names = {g: lexicon.display_name(g) for g in lexicon.groups}
    tag = METHOD_TAGS[mode]
    candidates: list[PairCandidate] = []
    attempts = 0
    successes = 0
    for labeled in store.labeled():
        if source_group not in labeled.groups:
            continue
        if budget.max_attempts is not None and attempts >= budget.max_attempts:
            break
        if successes >= budget.target_successes:
            break
        s = labeled.comment.text
        wr_text = None
        if mode is RewriteMode.POSTPROCESS_WR:
            if lexicon is None:
                raise RewriteError("postprocess mode needs a lexicon")
            rng = _child_rng(seed, labeled.comment.id, source_group, target_group)
            result = wr_replace(s, source_group, target_group, lexicon, rng)
            if result is None:
                continue  # no marker: nothing to postprocess, not an attempt
            wr_text = result.modified
        request = build_request(mode, s, source_group, target_group, config, display_names=display_names, wr_text=wr_text)
        try:
            raw = client.rewrite(request)
            s_prime = normalize(raw)
        except RewriteError as exc:
            logger.warning("rewrite failed for comment %s: %s", labeled.comment.id, exc)
            continue
        attempts += 1
        if s_prime == s:
            continue
        passed = gc.transfer_success(s_prime, source_group, target_group, p_threshold)
        if passed:
            successes += 1
        candidates.append(
            PairCandidate(
                s=s,
                s_prime=s_prime,
                method=tag,
                source_group=source_group,
                target_group=target_group,
                filter_passed=passed,
                provenance={"comment_id": labeled.comment.id, "request_hash": request.request_hash},
            )
        )
    logger.info("%s %s->%s: %d attempts, %d successes", tag, source_group, target_group, attempts, successes)
    return candidates
