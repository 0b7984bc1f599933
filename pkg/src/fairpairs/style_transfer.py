"""Prototype-editing group transfer: mask the group markers, refill conditioned
on the target group, keep the best-scoring candidate.

Two masking schemes coexist on purpose.  Generator-training templates mask
attention-salient tokens (cheap, group-agnostic); transfer templates greedily
mask whichever single token most reduces the source-group probability until it
drops below the threshold, so multi-group sentences target the right group.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .backends import MASK_TOKEN, WhitespaceTokenizer
from .groups import GroupPresenceClassifier
from .pool import PairCandidate

__all__ = [
    "Template",
    "StyleTransferConfig",
    "StageError",
    "make_training_template",
    "make_inference_template",
    "generate_transfer",
    "transfer_pair",
]

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage label."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class Template:
    """A source sentence with mask sentinels over consecutive masked runs."""

    source: str
    tokens: tuple[str, ...]
    masked_positions: frozenset[int]
    mask_token: str = MASK_TOKEN
    valid: bool = True
    warning: str | None = None
    trace: tuple = ()  # greedy-masking steps, when produced by iteration

    def __post_init__(self):
        if self.valid and not self.masked_positions:
            raise ValueError("a valid template needs at least one masked position")

    @property
    def mask_spans(self) -> tuple[tuple[int, int], ...]:
        """Merged [start, end) runs of masked token positions."""
        spans = []
        run_start = None
        for i in range(len(self.tokens) + 1):
            masked = i in self.masked_positions and i < len(self.tokens)
            if masked and run_start is None:
                run_start = i
            elif not masked and run_start is not None:
                spans.append((run_start, i))
                run_start = None
        return tuple(spans)

    @property
    def text(self) -> str:
        """Template text with each masked run merged into one sentinel."""
        out = []
        i = 0
        while i < len(self.tokens):
            if i in self.masked_positions:
                out.append(self.mask_token)
                while i in self.masked_positions and i < len(self.tokens):
                    i += 1
            else:
                out.append(self.tokens[i])
                i += 1
        return " ".join(out)


@dataclass
class StyleTransferConfig:
    mask_threshold: float = 0.25
    beam_width: int = 5
    max_mask_iterations: int | None = None  # None: sentence length
    selection: str = "logit_diff"  # or "prob_diff"
    mask_token: str = MASK_TOKEN

    def __post_init__(self):
        if not 0.0 < self.mask_threshold < 1.0:
            raise ValueError("mask_threshold must be in (0, 1)")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.selection not in ("logit_diff", "prob_diff"):
            raise ValueError(f"unknown selection {self.selection!r}")


def make_training_template(s: str, gc: GroupPresenceClassifier, *, tokenizer=None, mask_token: str = MASK_TOKEN) -> Template:
    """Mask every position whose attention is at least the sentence mean.

    The attention maximum always clears the mean, so at least one position is
    masked; under uniform attention everything is masked and merges into a
    single sentinel.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    tokens = tokenizer.tokenize(s)
    if not tokens:
        raise ValueError("cannot template an empty sentence")
    attention = gc.attention(s)
    mean = sum(attention) / len(attention)
    masked = frozenset(i for i, a in enumerate(attention) if a >= mean)
    return Template(source=s, tokens=tuple(tokens), masked_positions=masked, mask_token=mask_token)


def make_inference_template(
    s: str,
    j: str,
    gc: GroupPresenceClassifier,
    config: StyleTransferConfig | None = None,
    *,
    tokenizer=None,
) -> Template:
    """Greedily mask the token whose removal lowers p(j | sentence) most,
    until the probability falls below the threshold.

    Ties go to the lowest token index.  If the sentence already sits below
    the threshold (nothing to transfer) or masking everything cannot reach
    it, the returned template is flagged invalid with a warning.
    """
    config = config or StyleTransferConfig()
    tokenizer = tokenizer or WhitespaceTokenizer()
    tokens = tokenizer.tokenize(s)
    if not tokens:
        raise ValueError("cannot template an empty sentence")
    max_iters = config.max_mask_iterations if config.max_mask_iterations is not None else len(tokens)

    def prob(masked: set[int]) -> float:
        probe = [config.mask_token if i in masked else tok for i, tok in enumerate(tokens)]
        return float(gc.predict_proba([" ".join(probe)], j)[0])

    masked: set[int] = set()
    p = prob(masked)
    trace: list[dict] = []
    if p < config.mask_threshold:
        return Template(
            source=s,
            tokens=tuple(tokens),
            masked_positions=frozenset(),
            mask_token=config.mask_token,
            valid=False,
            warning=f"p({j}) = {p:.4f} already below threshold; nothing to mask",
        )
    while p >= config.mask_threshold and len(masked) < len(tokens) and len(trace) < max_iters:
        best_idx, best_p = None, None
        for i in range(len(tokens)):
            if i in masked:
                continue
            candidate_p = prob(masked | {i})
            if best_p is None or candidate_p < best_p:
                best_idx, best_p = i, candidate_p
        masked.add(best_idx)
        p = best_p
        trace.append({"masked": best_idx, "p": p})
    if p >= config.mask_threshold:
        return Template(
            source=s,
            tokens=tuple(tokens),
            masked_positions=frozenset(masked),
            mask_token=config.mask_token,
            valid=False,
            warning=f"threshold {config.mask_threshold} unreachable (p = {p:.4f} with all maskable tokens used)",
            trace=tuple(trace),
        )
    return Template(
        source=s,
        tokens=tuple(tokens),
        masked_positions=frozenset(masked),
        mask_token=config.mask_token,
        trace=tuple(trace),
    )


def generate_transfer(
    template: Template,
    j: str,
    j_prime: str,
    gen,
    gc: GroupPresenceClassifier,
    config: StyleTransferConfig | None = None,
) -> tuple[str, float]:
    """Fill the template conditioned on the target group and return the beam
    candidate maximizing the target-minus-source score (pre-sigmoid by
    default, probabilities under selection="prob_diff")."""
    config = config or StyleTransferConfig()
    if not template.valid:
        raise StageError("template", template.warning or "invalid template")
    candidates = gen.fill(template.text, j_prime, config.beam_width)
    if not candidates:
        raise StageError("generate", "beam returned no candidates")
    if config.selection == "logit_diff":
        target = gc.logits(candidates, j_prime)
        source = gc.logits(candidates, j)
    else:
        target = gc.predict_proba(candidates, j_prime)
        source = gc.predict_proba(candidates, j)
    scores = [float(t - s) for t, s in zip(target, source)]
    best = max(range(len(candidates)), key=lambda i: (scores[i], -i))
    return candidates[best], scores[best]


def transfer_pair(
    s: str,
    j: str,
    j_prime: str,
    gen,
    gc: GroupPresenceClassifier,
    config: StyleTransferConfig | None = None,
    *,
    tokenizer=None,
    p_threshold: float = 0.5,
    filter_orientation: str = "intent",
) -> PairCandidate:
    """Template -> conditioned fill -> post-filter, returning a candidate with
    the full trace.  Template/generation failures raise StageError with the
    stage label; a failed post-filter returns the candidate with
    filter_passed=False and stage "post_filter" in its provenance."""
    config = config or StyleTransferConfig()
    template = make_inference_template(s, j, gc, config, tokenizer=tokenizer)
    if not template.valid:
        raise StageError("template", template.warning or "invalid template")
    s_prime, score = generate_transfer(template, j, j_prime, gen, gc, config)
    if s_prime == s:
        raise StageError("generate", "generator reproduced the source sentence")
    passed = gc.transfer_success(s_prime, j, j_prime, p_threshold, orientation=filter_orientation)
    provenance = {
        "template": template.text,
        "masked_positions": sorted(template.masked_positions),
        "masking_trace": list(template.trace),
        "selection": config.selection,
        "score": score,
    }
    if not passed:
        provenance["stage"] = "post_filter"
    return PairCandidate(
        s=s,
        s_prime=s_prime,
        method="style_transfer",
        source_group=j,
        target_group=j_prime,
        filter_passed=passed,
        provenance=provenance,
    )
