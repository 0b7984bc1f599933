"""Pluggable model backends.

Every learned-model capability used by the pipeline (per-group probabilities,
logits, per-token attention, feature vectors, conditioned mask infilling) is
reached through the small interfaces in this module.  The shipped stub backend
is fully deterministic and trains in closed form, so the entire pipeline runs
end to end without pretrained weights; heavyweight encoder backends can be
registered under their own names and persist however they like, as long as
save/load round-trips.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .nn import sigmoid

__all__ = [
    "BackendError",
    "Capabilities",
    "InfillCapabilities",
    "Prediction",
    "WhitespaceTokenizer",
    "StubClassifierBackend",
    "StubInfillBackend",
    "TrainPreset",
    "TRAIN_PRESETS",
    "get_tokenizer",
    "get_classifier_backend",
]

MASK_TOKEN = "<mask>"
PAD_TOKEN = "<pad>"


class BackendError(RuntimeError):
    """Raised when a backend cannot honor a request (capability or data)."""


@dataclass(frozen=True)
class Capabilities:
    n_heads: int
    provides_attention: bool = False
    provides_features: bool = False
    provides_logits: bool = False
    dropout_controllable: bool = False


@dataclass(frozen=True)
class InfillCapabilities:
    max_beam: int


@dataclass(frozen=True)
class TrainPreset:
    """Named hyperparameter bundles for classifier training."""

    epochs: int
    batch_size: int
    learning_rate: float
    loss_reweighting: bool = True


# Reference presets for full-size encoder backends; the stub ignores epochs>0
# beyond treating 0 as "leave untrained".
TRAIN_PRESETS: dict[str, TrainPreset] = {
    "group_classifier": TrainPreset(epochs=3, batch_size=16, learning_rate=1e-5),
    "downstream": TrainPreset(epochs=3, batch_size=32, learning_rate=1e-5),
}


@dataclass
class Prediction:
    probs: dict[str, float]
    logits: dict[str, float] | None = None
    attention: list[float] | None = None
    features: np.ndarray | None = None


class WhitespaceTokenizer:
    """Whitespace token splitter used by the stub backend."""

    name = "whitespace"
    pad_token = PAD_TOKEN
    mask_token = MASK_TOKEN

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)


_TOKENIZERS = {"whitespace": WhitespaceTokenizer}


def get_tokenizer(name: str):
    try:
        return _TOKENIZERS[name]()
    except KeyError:
        raise BackendError(f"unknown tokenizer {name!r}") from None


def _stable_bucket(token: str, half: int, dim: int) -> tuple[int, float]:
    digest = hashlib.sha256(f"{half}:{token}".encode("utf-8")).digest()
    index = int.from_bytes(digest[:8], "big") % dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return index, sign


def hashed_features(tokens: Sequence[str], dim: int, pad_token: str = PAD_TOKEN) -> np.ndarray:
    """Signed hashed bag of tokens; positions 64+ hash into a second namespace
    so the two halves of a concatenated pair encoding stay distinguishable."""
    vec = np.zeros(dim)
    n = 0
    for i, tok in enumerate(tokens):
        if tok == pad_token:
            continue
        idx, sign = _stable_bucket(tok, i // 64, dim)
        vec[idx] += sign
        n += 1
    if n:
        vec /= math.sqrt(n)
    return vec


class StubClassifierBackend:
    """Deterministic keyword-weight classifier.

    Training fits per-term log-odds by counting texts that contain each term,
    one head per label.  The sentence logit for a head is the head bias plus
    the summed term weights; attention over a sentence is each token's largest
    absolute weight across heads, normalized to sum to one.  Dropout sampling
    is the identity, so mask-averaged outputs equal the plain output.
    """

    name = "stub"

    def __init__(
        self,
        heads: Sequence[str] = (),
        weights: Mapping[str, Mapping[str, float]] | None = None,
        biases: Mapping[str, float] | None = None,
        feature_dim: int = 64,
        tokenizer: WhitespaceTokenizer | None = None,
        attention_layer: int = -2,
    ):
        self.heads = list(heads)
        self.weights = {h: dict((weights or {}).get(h, {})) for h in self.heads}
        self.biases = {h: float((biases or {}).get(h, 0.0)) for h in self.heads}
        self.feature_dim = feature_dim
        self.tokenizer = tokenizer or WhitespaceTokenizer()
        # Which encoder layer attention is read from in a real backend; the
        # stub has a single implicit layer but keeps the knob for parity.
        self.attention_layer = attention_layer

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(
            n_heads=len(self.heads),
            provides_attention=True,
            provides_features=True,
            provides_logits=True,
            dropout_controllable=True,
        )

    # ---- training --------------------------------------------------------
    def fit(self, data: Mapping[str, tuple[Sequence[str], Sequence[int]]], *, epochs: int = 1, smoothing: float = 0.5) -> "StubClassifierBackend":
        """Fit per-term log-odds per head from (texts, binary labels).

        epochs=0 leaves the handle untrained (all outputs 0.5).
        Raises BackendError when a head sees only one class.
        """
        self.heads = list(data.keys())
        self.weights = {h: {} for h in self.heads}
        self.biases = {h: 0.0 for h in self.heads}
        if epochs == 0:
            return self
        for head, (texts, labels) in data.items():
            labels = [int(v) for v in labels]
            n_pos = sum(labels)
            n_neg = len(labels) - n_pos
            if n_pos == 0 or n_neg == 0:
                raise BackendError(f"head {head!r} has a single class ({n_pos} pos / {n_neg} neg)")
            pos_counts: dict[str, int] = {}
            neg_counts: dict[str, int] = {}
            for text, label in zip(texts, labels):
                for term in set(self.tokenizer.tokenize(text)):
                    counts = pos_counts if label else neg_counts
                    counts[term] = counts.get(term, 0) + 1
            a = smoothing
            for term in set(pos_counts) | set(neg_counts):
                p = (pos_counts.get(term, 0) + a) / (n_pos + 2 * a)
                q = (neg_counts.get(term, 0) + a) / (n_neg + 2 * a)
                self.weights[head][term] = math.log(p / q)
            self.biases[head] = math.log(n_pos / n_neg)
        return self

    # ---- inference ---------------------------------------------------------
    def _logit(self, head: str, tokens: Sequence[str]) -> float:
        w = self.weights[head]
        return self.biases[head] + sum(w.get(tok, 0.0) for tok in tokens)

    def predict(
        self,
        texts: Sequence[str] | Sequence[Sequence[str]],
        *,
        want_logits: bool = False,
        want_attention: bool = False,
        want_features: bool = False,
        dropout_mask_seed: int | None = None,
    ) -> list[Prediction]:
        """Per-text head probabilities plus the requested extras.

        Accepts raw strings or pre-tokenized sequences.  The stub's dropout is
        the identity, so any mask seed reproduces the plain output.
        """
        del dropout_mask_seed  # identity dropout: outputs do not depend on it
        out = []
        for text in texts:
            tokens = self.tokenizer.tokenize(text) if isinstance(text, str) else list(text)
            logits = {h: self._logit(h, tokens) for h in self.heads}
            pred = Prediction(probs={h: float(sigmoid(l)) for h, l in logits.items()})
            if want_logits:
                pred.logits = logits
            if want_attention:
                pred.attention = self._attention(tokens)
            if want_features:
                pred.features = hashed_features(tokens, self.feature_dim, self.tokenizer.pad_token)
            out.append(pred)
        return out

    def _attention(self, tokens: Sequence[str]) -> list[float]:
        if not tokens:
            return []
        raw = []
        for tok in tokens:
            if tok == self.tokenizer.pad_token:
                raw.append(0.0)
            else:
                raw.append(max((abs(w.get(tok, 0.0)) for w in self.weights.values()), default=0.0))
        total = sum(raw)
        if total == 0.0:
            return [1.0 / len(tokens)] * len(tokens)
        return [v / total for v in raw]

    def features(self, texts: Sequence[str] | Sequence[Sequence[str]]) -> np.ndarray:
        rows = []
        for text in texts:
            tokens = self.tokenizer.tokenize(text) if isinstance(text, str) else list(text)
            rows.append(hashed_features(tokens, self.feature_dim, self.tokenizer.pad_token))
        return np.vstack(rows) if rows else np.zeros((0, self.feature_dim))

    # ---- persistence -------------------------------------------------------
    def save(self, path: str | Path) -> None:
        payload = {
            "backend": self.name,
            "heads": self.heads,
            "weights": self.weights,
            "biases": self.biases,
            "feature_dim": self.feature_dim,
            "attention_layer": self.attention_layer,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "StubClassifierBackend":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("backend") != cls.name:
            raise BackendError(f"not a stub backend file: {path}")
        return cls(
            heads=payload["heads"],
            weights=payload["weights"],
            biases=payload["biases"],
            feature_dim=payload["feature_dim"],
            attention_layer=payload.get("attention_layer", -2),
        )


class StubInfillBackend:
    """Table-driven mask infiller.

    ``fills`` maps (template text, condition group) to an ordered list of full
    sentences; list order is the generator's ranking.  A real seq2seq backend
    would prepend the condition as a textual prefix and beam-search instead.
    """

    name = "stub"

    def __init__(self, fills: Mapping[tuple[str, str], Sequence[str]] | None = None, max_beam: int = 5, mask_token: str = MASK_TOKEN):
        self.fills = {tuple(k): list(v) for k, v in (fills or {}).items()}
        self.max_beam = max_beam
        self.mask_token = mask_token

    @property
    def capabilities(self) -> InfillCapabilities:
        return InfillCapabilities(max_beam=self.max_beam)

    def add_fill(self, template: str, condition: str, completions: Sequence[str]) -> None:
        self.fills[(template, condition)] = list(completions)

    def fill(self, template: str, condition: str, beam_width: int) -> list[str]:
        """Up to beam_width completions, best first, all masks resolved."""
        if beam_width < 1:
            raise BackendError(f"beam width must be >= 1, got {beam_width}")
        if self.mask_token not in template:
            raise BackendError("template contains no mask span")
        try:
            completions = self.fills[(template, condition)]
        except KeyError:
            raise BackendError(f"no fill recorded for ({template!r}, {condition!r})") from None
        out = completions[: min(beam_width, self.max_beam)]
        for s in out:
            if self.mask_token in s:
                raise BackendError(f"recorded completion still contains a mask: {s!r}")
        return list(out)

    def save(self, path: str | Path) -> None:
        rows = [{"template": t, "condition": c, "completions": comps} for (t, c), comps in sorted(self.fills.items())]
        payload = {"backend": self.name, "max_beam": self.max_beam, "fills": rows}
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "StubInfillBackend":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        fills = {(row["template"], row["condition"]): row["completions"] for row in payload["fills"]}
        return cls(fills=fills, max_beam=payload.get("max_beam", 5))


_CLASSIFIER_BACKENDS = {"stub": StubClassifierBackend}


def get_classifier_backend(name: str, **kwargs) -> StubClassifierBackend:
    try:
        cls = _CLASSIFIER_BACKENDS[name]
    except KeyError:
        raise BackendError(f"unknown classifier backend {name!r}") from None
    return cls(**kwargs)
