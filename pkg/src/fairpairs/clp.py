"""Downstream toxicity training with the counterfactual logit pairing
regularizer, plus the censoring baseline.

Per batch, every comment is paired with one partner drawn from its eligible
pool pairs (itself when none exists); the penalty is the lambda-weighted
Euclidean norm of the logit difference, averaged over the batch so the
lambda presets do not depend on batch size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace as dc_replace
from typing import Mapping, Sequence

import numpy as np

from .lexicon import Lexicon, build_matcher
from .nn import MlpHead, sigmoid
from .pool import ConstraintPool, PairCandidate

__all__ = [
    "ClpConfig",
    "clp_penalty",
    "clp_penalty_grad",
    "select_clp_pair",
    "censor",
    "ClpToxicityClassifier",
    "train_clp",
    "LAMBDA_PRESETS",
]

logger = logging.getLogger(__name__)

LAMBDA_PRESETS = (5.0, 125.0)

CENSOR_PLACEHOLDER = "[GROUP]"


@dataclass
class ClpConfig:
    lam: float = 0.0
    threshold: float = 0.5
    epochs: int = 3
    batch_size: int = 32
    learning_rate: float = 1e-5
    reweigh_loss: bool = True
    # "constraint": partners drawn from pairs the similarity model accepts
    # (p <= t); "literal": partners drawn from pairs with p > t.
    pair_orientation: str = "constraint"
    head_width: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.pair_orientation not in ("constraint", "literal"):
            raise ValueError(f"unknown pair orientation {self.pair_orientation!r}")


def clp_penalty(logits_s, logits_s_prime, lam: float) -> float:
    """lambda times the Euclidean norm of the logit difference."""
    a = np.atleast_1d(np.asarray(logits_s, dtype=float))
    b = np.atleast_1d(np.asarray(logits_s_prime, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"logit shape mismatch: {a.shape} vs {b.shape}")
    return float(lam * np.linalg.norm(a - b))


def clp_penalty_grad(logits_s, logits_s_prime, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the penalty w.r.t. both logit vectors; defined as zero at
    the norm's non-smooth point (identical logits)."""
    a = np.atleast_1d(np.asarray(logits_s, dtype=float))
    b = np.atleast_1d(np.asarray(logits_s_prime, dtype=float))
    diff = a - b
    norm = float(np.linalg.norm(diff))
    if norm == 0.0:
        zero = np.zeros_like(diff)
        return zero, zero.copy()
    g = lam * diff / norm
    return g, -g


def select_clp_pair(
    s: str,
    pairs_for_s: Sequence[PairCandidate],
    predictions: Mapping[str, float],
    t: float,
    rng,
    *,
    orientation: str = "above",
) -> str:
    """Uniform choice of a partner sentence among the eligible pairs whose
    first element is ``s``; returns ``s`` itself when none is eligible.

    orientation "above" keeps pairs with p > t, "below" keeps p <= t.
    """
    if orientation not in ("above", "below"):
        raise ValueError(f"unknown orientation {orientation!r}")
    eligible = []
    for cand in pairs_for_s:
        p = predictions[cand.id]
        keep = p > t if orientation == "above" else p <= t
        if keep:
            eligible.append(cand.s_prime)
    if not eligible:
        return s
    return eligible[int(rng.integers(0, len(eligible)))]


def censor(s: str, lexicon: Lexicon, groups: Sequence[str], placeholder: str = CENSOR_PLACEHOLDER) -> str:
    """Replace every listed term of the named groups by a fixed placeholder
    (word-boundary, longest-match-first).  Idempotent as long as the
    placeholder is not itself a listed term."""
    terms: list[tuple[str, str]] = []
    for group in groups:
        terms.extend(lexicon.group(group).all_terms())
    if not terms:
        return s
    pattern, _ = build_matcher(terms)
    return pattern.sub(placeholder, s)


class ClpToxicityClassifier:
    """Toxicity head over backbone features, trained with reweighted binary
    cross-entropy plus the logit-pairing penalty (sklearn-style estimator)."""

    def __init__(self, backend, config: ClpConfig | None = None, **overrides):
        base = config or ClpConfig()
        if overrides:
            base = dc_replace(base, **overrides)
        self.backend = backend
        self.config = base
        self.head: MlpHead | None = None
        self.history: list[dict] = []

    def get_params(self) -> dict:
        cfg = self.config
        return {
            "lam": cfg.lam,
            "threshold": cfg.threshold,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "reweigh_loss": cfg.reweigh_loss,
            "pair_orientation": cfg.pair_orientation,
            "head_width": cfg.head_width,
            "seed": cfg.seed,
        }

    # ---- training -----------------------------------------------------------
    def fit(
        self,
        store,
        pool: ConstraintPool | Sequence[PairCandidate] | None = None,
        predictions: Mapping[str, float] | None = None,
    ) -> "ClpToxicityClassifier":
        """Train on the store's binarized labels; with lambda > 0, every batch
        element is paired against a partner drawn from its pool pairs under
        the configured orientation (itself when no pair is eligible)."""
        cfg = self.config
        labeled = store.labeled()
        texts = [lc.comment.text for lc in labeled]
        y = np.array([lc.y for lc in labeled], dtype=float)
        if len(set(y.tolist())) < 2:
            raise ValueError("training store must contain both labels")
        X = self.backend.features(texts)

        weights = np.ones(len(y))
        if cfg.reweigh_loss:
            n_pos = float(y.sum())
            n_neg = float(len(y) - n_pos)
            weights = np.where(y == 1, len(y) / (2 * n_pos), len(y) / (2 * n_neg))

        pairs_by_s: dict[str, list[PairCandidate]] = {}
        partner_features: dict[str, np.ndarray] = {}
        use_pairs = cfg.lam > 0 and pool is not None
        if use_pairs:
            if predictions is None:
                raise ValueError("pool pairing needs similarity predictions")
            for cand in pool:
                pairs_by_s.setdefault(cand.s, []).append(cand)
            uniques = sorted({c.s_prime for cands in pairs_by_s.values() for c in cands})
            feats = self.backend.features(uniques)
            partner_features = {text: feats[i] for i, text in enumerate(uniques)}

        orientation = "below" if cfg.pair_orientation == "constraint" else "above"
        head_rng = np.random.default_rng(cfg.seed)
        self.head = MlpHead(X.shape[1], cfg.head_width, dropout=0.0, seed=int(head_rng.integers(2**32)), lr=cfg.learning_rate)
        shuffle_rng = np.random.default_rng(cfg.seed + 1)
        pair_rng = np.random.default_rng(cfg.seed + 2)

        n = len(y)
        for epoch in range(cfg.epochs):
            order = shuffle_rng.permutation(n)
            epoch_loss = 0.0
            epoch_penalty = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                xb, yb, wb = X[idx], y[idx], weights[idx]
                logit, cache = self.head._forward(xb, None)
                p = sigmoid(logit)
                dlogit = wb * (p - yb) / len(idx)
                grads = self.head._backward(cache, dlogit)
                eps = 1e-12
                epoch_loss += float(np.sum(wb * -(yb * np.log(p + eps) + (1 - yb) * np.log(1 - p + eps))))
                if use_pairs:
                    partner_rows = []
                    partner_slots = []
                    for slot, row in enumerate(idx):
                        s = texts[row]
                        partner = select_clp_pair(s, pairs_by_s.get(s, ()), predictions, cfg.threshold, pair_rng, orientation=orientation)
                        if partner == s:
                            continue  # self-pair: zero penalty, zero gradient
                        partner_rows.append(partner_features[partner])
                        partner_slots.append(slot)
                    if partner_slots:
                        xp = np.vstack(partner_rows)
                        logit_p, cache_p = self.head._forward(xp, None)
                        diff = logit[partner_slots] - logit_p
                        sign = np.sign(diff)
                        epoch_penalty += float(cfg.lam * np.abs(diff).sum())
                        scale = cfg.lam / len(idx)
                        d_main = np.zeros(len(idx))
                        d_main[partner_slots] = scale * sign
                        for key, g in self.head._backward(cache, d_main).items():
                            grads[key] = grads[key] + g
                        for key, g in self.head._backward(cache_p, -scale * sign).items():
                            grads[key] = grads[key] + g
                self.head.adam.step(self.head.params, grads)
            self.history.append(
                {"epoch": epoch, "mean_loss": epoch_loss / n, "mean_penalty": epoch_penalty / n}
            )
        return self

    # ---- inference ------------------------------------------------------------
    def _require_fitted(self):
        if self.head is None:
            raise RuntimeError("classifier is not fitted")

    def logits(self, texts: Sequence[str]) -> np.ndarray:
        self._require_fitted()
        return self.head.logits(self.backend.features(texts))

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return sigmoid(self.logits(texts))

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        return (self.predict_proba(texts) > 0.5).astype(int)

    # ---- persistence --------------------------------------------------------
    def save(self, directory) -> None:
        import json
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.backend.save(directory / "backend.json")
        payload = {"params": self.get_params(), "history": self.history}
        (directory / "config.json").write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        if self.head is not None:
            np.savez(directory / "head.npz", **self.head.params)

    @classmethod
    def load(cls, directory, backend_cls=None) -> "ClpToxicityClassifier":
        import json
        from pathlib import Path

        from .backends import StubClassifierBackend

        directory = Path(directory)
        backend_cls = backend_cls or StubClassifierBackend
        backend = backend_cls.load(directory / "backend.json")
        payload = json.loads((directory / "config.json").read_text(encoding="utf-8"))
        model = cls(backend, **payload["params"])
        model.history = payload.get("history", [])
        head_path = directory / "head.npz"
        if head_path.exists():
            cfg = model.config
            model.head = MlpHead(backend.feature_dim, cfg.head_width, dropout=0.0, seed=cfg.seed, lr=cfg.learning_rate)
            with np.load(head_path) as data:
                for key in model.head.params:
                    model.head.params[key] = data[key]
        return model


def train_clp(store, pool=None, predictions=None, config: ClpConfig | None = None, *, backend=None) -> ClpToxicityClassifier:
    """Functional wrapper over ClpToxicityClassifier.fit."""
    if backend is None:
        raise ValueError("a feature backend is required")
    return ClpToxicityClassifier(backend, config).fit(store, pool, predictions)
