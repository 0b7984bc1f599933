"""Pair-similarity classifier: encode (s, s_prime), predict the probability
that the pair is NOT a fairness constraint, threshold to a binary verdict.

The default encoding pads each side to 64 tokens and concatenates them, so a
backbone can attend across the two sentences; merge / feature-difference /
bilinear encodings are available for ablations.  Monte-Carlo dropout runs on
the classification head only, over features precomputed once per pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backends import PAD_TOKEN, WhitespaceTokenizer
from .nn import BilinearHead, MlpHead, sigmoid
from .pool import PairCandidate, pair_id

__all__ = [
    "PairEncoding",
    "encode_pair",
    "PairSimilarityClassifier",
    "FeatureCache",
    "THRESHOLD_PRESETS",
    "REFERENCE_PRESET",
]

logger = logging.getLogger(__name__)

# Decision thresholds referenced throughout the evaluation harness.
THRESHOLD_PRESETS = (0.5, 0.1, 0.01)

# Head hyperparameters matching the full-size reference model; the stub
# default below is desk-scale (narrow head, no dropout).
REFERENCE_PRESET = {"head_width": 768, "dropout": 0.1, "epochs": 5}

VARIANTS = ("concat", "merge", "feature_diff", "bilinear")


@dataclass(frozen=True)
class PairEncoding:
    """Both sentences tokenized and right-padded to half the total length."""

    tokens: tuple[str, ...]
    max_len: int = 64

    def __post_init__(self):
        if len(self.tokens) != 2 * self.max_len:
            raise ValueError(f"encoding must be exactly {2 * self.max_len} positions")

    @property
    def first(self) -> tuple[str, ...]:
        return self.tokens[: self.max_len]

    @property
    def second(self) -> tuple[str, ...]:
        return self.tokens[self.max_len :]


def encode_pair(s: str, s_prime: str, tokenizer=None, max_len: int = 64, pad_token: str = PAD_TOKEN) -> PairEncoding:
    tokenizer = tokenizer or WhitespaceTokenizer()
    sides = []
    for text in (s, s_prime):
        tokens = tokenizer.tokenize(text)
        if len(tokens) > max_len:
            raise ValueError(f"text tokenizes to {len(tokens)} > {max_len} tokens: {text[:50]!r}...")
        sides.append(tuple(tokens) + (pad_token,) * (max_len - len(tokens)))
    return PairEncoding(tokens=sides[0] + sides[1], max_len=max_len)


def _as_pair(pair) -> tuple[str, str]:
    if isinstance(pair, tuple):
        return pair
    return pair.s, pair.s_prime


def _key_of(pair) -> str:
    if isinstance(pair, PairCandidate):
        return pair.id
    s, s_prime = _as_pair(pair)
    return pair_id(s, s_prime, "_adhoc")


class FeatureCache:
    """Per-pair backbone features keyed by pair id; append-only."""

    def __init__(self):
        self._features: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._features)

    def __contains__(self, key: str) -> bool:
        return key in self._features

    def put(self, key: str, value) -> None:
        self._features.setdefault(key, value)

    def get(self, key: str):
        return self._features[key]

    def matrix(self, keys: Sequence[str]):
        if isinstance(self._features[keys[0]], tuple):
            a = np.vstack([self._features[k][0] for k in keys])
            b = np.vstack([self._features[k][1] for k in keys])
            return a, b
        return np.vstack([self._features[k] for k in keys])


class PairSimilarityClassifier:
    """Trainable verdict on sentence pairs (sklearn-style estimator).

    Output semantics: probability near 1 means "not a constraint"; the binary
    verdict is 1 iff the probability strictly exceeds the threshold.
    """

    def __init__(
        self,
        backend,
        *,
        variant: str = "concat",
        tokenizer=None,
        max_len: int = 64,
        head_width: int = 32,
        dropout: float = 0.0,
        threshold: float = 0.5,
        epochs: int = 5,
        learning_rate: float = 0.05,
        batch_size: int = 32,
        n_dropout_masks: int = 50,
        seed: int = 0,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
        self.backend = backend
        self.variant = variant
        self.tokenizer = tokenizer or getattr(backend, "tokenizer", None) or WhitespaceTokenizer()
        self.max_len = max_len
        self.head_width = head_width
        self.dropout = dropout
        self.threshold = threshold
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_dropout_masks = n_dropout_masks
        self.seed = seed
        self.head = None
        self._rng = np.random.default_rng(seed)

    def get_params(self) -> dict:
        return {
            "variant": self.variant,
            "max_len": self.max_len,
            "head_width": self.head_width,
            "dropout": self.dropout,
            "threshold": self.threshold,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "n_dropout_masks": self.n_dropout_masks,
            "seed": self.seed,
        }

    # ---- feature extraction -------------------------------------------------
    def encode(self, s: str, s_prime: str) -> PairEncoding:
        return encode_pair(s, s_prime, self.tokenizer, self.max_len)

    def _features_one(self, pair):
        s, s_prime = _as_pair(pair)
        if self.variant == "concat":
            return self.backend.features([self.encode(s, s_prime).tokens])[0]
        if self.variant == "merge":
            merged = self.tokenizer.tokenize(s) + self.tokenizer.tokenize(s_prime)
            return self.backend.features([merged])[0]
        fa = self.backend.features([s])[0]
        fb = self.backend.features([s_prime])[0]
        if self.variant == "feature_diff":
            return fa - fb
        return (fa, fb)  # bilinear keeps both sides

    def features(self, pairs: Sequence, cache: FeatureCache | None = None):
        keys = [_key_of(p) for p in pairs]
        if cache is None:
            rows = [self._features_one(p) for p in pairs]
            if self.variant == "bilinear":
                return np.vstack([r[0] for r in rows]), np.vstack([r[1] for r in rows])
            return np.vstack(rows)
        for key, pair in zip(keys, pairs):
            if key not in cache:
                cache.put(key, self._features_one(pair))
        return cache.matrix(keys)

    def precompute_features(self, pairs: Sequence) -> FeatureCache:
        """Backbone features for every pair, computed once.  Head-only dropout
        predictions from this cache equal full-path predictions."""
        cache = FeatureCache()
        self.features(pairs, cache)
        return cache

    # ---- training ------------------------------------------------------------
    def _new_head(self):
        dim = getattr(self.backend, "feature_dim", None)
        if dim is None:
            raise ValueError("backend does not expose feature_dim")
        seed = int(self._rng.integers(2**32))
        if self.variant == "bilinear":
            return BilinearHead(dim, self.head_width, seed=seed, lr=self.learning_rate)
        return MlpHead(dim, self.head_width, self.dropout, seed=seed, lr=self.learning_rate)

    def fit(
        self,
        pairs: Sequence,
        labels: Sequence[float],
        *,
        reset: bool = True,
        epochs: int | None = None,
        reweigh: bool = False,
        cache: FeatureCache | None = None,
    ) -> "PairSimilarityClassifier":
        """Train the head with binary cross-entropy; labels may be soft
        (0 / 0.5 / 1 vote aggregates).  reset=False continues training the
        current head on the given block only."""
        if len(pairs) != len(labels):
            raise ValueError("pairs/labels length mismatch")
        if self.head is None or reset:
            self.head = self._new_head()
        X = self.features(pairs, cache)
        y = np.asarray(labels, dtype=float)
        weights = None
        if reweigh:
            # weight classes inversely to their (soft) frequency
            p1 = float(y.mean())
            p1 = min(max(p1, 1e-6), 1 - 1e-6)
            weights = y / (2 * p1) + (1 - y) / (2 * (1 - p1))
        self.head.fit_epochs(
            X,
            y,
            epochs=epochs if epochs is not None else self.epochs,
            batch_size=self.batch_size,
            rng=self._rng,
            sample_weights=weights,
        )
        return self

    # ---- inference -------------------------------------------------------------
    def _require_fitted(self):
        if self.head is None:
            raise RuntimeError("similarity classifier is not fitted")

    def predict_proba(self, pairs: Sequence, *, cache: FeatureCache | None = None, mask_seed: int | None = None) -> np.ndarray:
        """p(not-a-constraint) per pair; deterministic with dropout off
        (mask_seed None) and reproducible for any fixed mask seed."""
        self._require_fitted()
        X = self.features(pairs, cache)
        mask = self.head.sample_mask(mask_seed) if mask_seed is not None else None
        return self.head.probs(X, mask)

    def predict(self, pairs: Sequence, *, cache: FeatureCache | None = None) -> np.ndarray:
        """Binary verdict: 1 iff probability strictly exceeds the threshold."""
        return (self.predict_proba(pairs, cache=cache) > self.threshold).astype(int)

    def predict_map(self, pairs: Sequence, *, cache: FeatureCache | None = None) -> dict[str, float]:
        probs = self.predict_proba(pairs, cache=cache)
        return {_key_of(p): float(v) for p, v in zip(pairs, probs)}

    def mc_probs(self, pairs: Sequence, *, cache: FeatureCache | None = None, n_masks: int | None = None, seed: int = 0) -> np.ndarray:
        """(n_pairs, n_masks) head probabilities, one fixed dropout mask per
        column.  With dropout 0 every column equals the plain prediction."""
        self._require_fitted()
        X = self.features(pairs, cache)
        n = n_masks if n_masks is not None else self.n_dropout_masks
        if n < 1:
            raise ValueError("need at least one dropout mask")
        cols = []
        for i in range(n):
            mask = self.head.sample_mask((seed, i))
            cols.append(self.head.probs(X, mask))
        return np.column_stack(cols)

    def clone(self, seed: int | None = None) -> "PairSimilarityClassifier":
        params = self.get_params()
        if seed is not None:
            params["seed"] = seed
        return PairSimilarityClassifier(self.backend, tokenizer=self.tokenizer, **params)

    # ---- persistence --------------------------------------------------------
    def save(self, directory) -> None:
        import json
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.backend.save(directory / "backend.json")
        (directory / "config.json").write_text(json.dumps(self.get_params(), sort_keys=True), encoding="utf-8")
        if self.head is not None:
            np.savez(directory / "head.npz", **self.head.params)

    @classmethod
    def load(cls, directory, backend_cls=None) -> "PairSimilarityClassifier":
        import json
        from pathlib import Path

        from .backends import StubClassifierBackend

        directory = Path(directory)
        backend_cls = backend_cls or StubClassifierBackend
        backend = backend_cls.load(directory / "backend.json")
        params = json.loads((directory / "config.json").read_text(encoding="utf-8"))
        model = cls(backend, **params)
        head_path = directory / "head.npz"
        if head_path.exists():
            model.head = model._new_head()
            with np.load(head_path) as data:
                for key in model.head.params:
                    model.head.params[key] = data[key]
        return model
