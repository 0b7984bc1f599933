"""Multi-head group-presence classification, eligibility, transfer filtering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backends import BackendError, StubClassifierBackend, get_classifier_backend
from .corpus import CommentStore
from .metrics import balanced_accuracy
from .pool import PairCandidate

__all__ = ["EligibilityPolicy", "GroupPresenceClassifier", "apply_transfer_filter"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EligibilityPolicy:
    """Which groups are trusted enough to drive generation and filtering."""

    ba_threshold: float = 90.0
    exclusions: frozenset[str] = frozenset({"mental illness"})

    def __post_init__(self):
        if not 50.0 < self.ba_threshold <= 100.0:
            raise ValueError(f"ba_threshold must be in (50, 100], got {self.ba_threshold}")


class GroupPresenceClassifier:
    """One classifier head per demographic group mentioned in the corpus.

    sklearn-flavored estimator: construct with a backend, `fit` on an
    annotated store, then query `predict_proba`, `eligible_groups` and
    `transfer_success`.
    """

    def __init__(self, backend=None, *, backend_name: str = "stub", eval_fraction: float = 0.2, seed: int = 0, epochs: int = 1):
        self.backend = backend
        self.backend_name = backend_name
        self.eval_fraction = eval_fraction
        self.seed = seed
        self.epochs = epochs
        self.groups: list[str] = []
        self.eval_report: dict[str, float] = {}

    def get_params(self) -> dict:
        return {
            "backend_name": self.backend_name,
            "eval_fraction": self.eval_fraction,
            "seed": self.seed,
            "epochs": self.epochs,
        }

    @property
    def fitted(self) -> bool:
        return bool(self.groups)

    def _require_fitted(self):
        if not self.fitted:
            raise RuntimeError("group classifier is not fitted")

    # ---- training ----------------------------------------------------------
    def fit(self, train: CommentStore, eval_store: CommentStore | None = None) -> "GroupPresenceClassifier":
        """Train one head per group that has positive labels in ``train``.

        Only annotated comments contribute.  The balanced-accuracy report per
        head comes from ``eval_store`` if given, otherwise from a seeded
        carve-out of the training rows.
        """
        annotated = [lc for lc in train.labeled() if lc.comment.annotated]
        if not annotated:
            raise ValueError("training store has no group-annotated comments")
        if eval_store is None:
            rng = np.random.default_rng(self.seed)
            order = rng.permutation(len(annotated))
            n_eval = max(1, int(self.eval_fraction * len(annotated)))
            eval_rows = [annotated[i] for i in order[:n_eval]]
            train_rows = [annotated[i] for i in order[n_eval:]]
            if not train_rows:
                train_rows = eval_rows
        else:
            train_rows = annotated
            eval_rows = [lc for lc in eval_store.labeled() if lc.comment.annotated]

        present = sorted({g for lc in train_rows for g in lc.groups})
        data = {}
        for group in present:
            texts = [lc.comment.text for lc in train_rows]
            labels = [int(group in lc.groups) for lc in train_rows]
            data[group] = (texts, labels)
        if self.backend is None:
            self.backend = get_classifier_backend(self.backend_name)
        self.backend.fit(data, epochs=self.epochs)
        self.groups = present

        self.eval_report = {}
        for group in present:
            labels = [int(group in lc.groups) for lc in eval_rows]
            if len(set(labels)) < 2:
                logger.warning("group %s: single-class eval rows, reporting 50.0", group)
                self.eval_report[group] = 50.0
                continue
            probs = self.predict_proba([lc.comment.text for lc in eval_rows], group)
            preds = (probs > 0.5).astype(int)
            self.eval_report[group] = balanced_accuracy(preds, labels)
        return self

    # ---- inference ---------------------------------------------------------
    def predict_proba(self, texts: Sequence[str], group: str | None = None) -> np.ndarray:
        """Probabilities for ``group``; with group=None, an (n, n_heads) array
        in self.groups order."""
        self._require_fitted()
        preds = self.backend.predict(texts)
        if group is not None:
            if group not in self.groups:
                raise KeyError(f"unknown group {group!r}")
            return np.array([p.probs[group] for p in preds])
        return np.array([[p.probs[g] for g in self.groups] for p in preds])

    def logits(self, texts: Sequence[str], group: str) -> np.ndarray:
        self._require_fitted()
        if group not in self.groups:
            raise KeyError(f"unknown group {group!r}")
        preds = self.backend.predict(texts, want_logits=True)
        return np.array([p.logits[group] for p in preds])

    def attention(self, text: str) -> list[float]:
        self._require_fitted()
        return self.backend.predict([text], want_attention=True)[0].attention

    # ---- policy ------------------------------------------------------------
    def eligible_groups(self, policy: EligibilityPolicy | None = None) -> set[str]:
        """Groups whose balanced accuracy clears the bar, minus exclusions
        (matched case-insensitively)."""
        self._require_fitted()
        if not self.eval_report:
            raise RuntimeError("no evaluation report available")
        policy = policy or EligibilityPolicy()
        excluded = {e.lower() for e in policy.exclusions}
        return {
            g for g, ba in self.eval_report.items() if ba > policy.ba_threshold and g.lower() not in excluded
        }

    def transfer_success(self, s_prime: str, j: str, j_prime: str, p_threshold: float = 0.5, *, orientation: str = "intent") -> bool:
        """Did the rewrite drop group j and pick up group j_prime?

        orientation="intent": target probability above the threshold and
        source below it.  orientation="literal" swaps the two inequalities
        (reproducing the reversed wording some deployments use).
        """
        self._require_fitted()
        for g in (j, j_prime):
            if g not in self.groups:
                raise KeyError(f"unknown group {g!r}")
        pred = self.backend.predict([s_prime])[0]
        p_source, p_target = pred.probs[j], pred.probs[j_prime]
        if orientation == "intent":
            return p_target > p_threshold and p_source < p_threshold
        if orientation == "literal":
            return p_target < p_threshold and p_source > p_threshold
        raise ValueError(f"unknown orientation {orientation!r}")

    # ---- persistence -------------------------------------------------------
    def save(self, directory) -> None:
        import json
        from pathlib import Path

        self._require_fitted()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.backend.save(directory / "backend.json")
        payload = {"params": self.get_params(), "groups": self.groups, "eval_report": self.eval_report}
        (directory / "model.json").write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, directory, backend_cls=None) -> "GroupPresenceClassifier":
        import json
        from pathlib import Path

        directory = Path(directory)
        backend_cls = backend_cls or StubClassifierBackend
        backend = backend_cls.load(directory / "backend.json")
        payload = json.loads((directory / "model.json").read_text(encoding="utf-8"))
        model = cls(backend, **payload["params"])
        model.groups = payload["groups"]
        model.eval_report = payload["eval_report"]
        return model

    # ---- reporting ---------------------------------------------------------
    def eval_report_table(self) -> str:
        """Plain-text (group, BA) table."""
        self._require_fitted()
        width = max((len(g) for g in self.eval_report), default=5)
        lines = [f"{'Group':<{width}}  BA", f"{'-' * width}  ----"]
        for group, ba in self.eval_report.items():
            lines.append(f"{group:<{width}}  {ba:.1f}")
        return "\n".join(lines)


def apply_transfer_filter(
    candidates: Iterable[PairCandidate],
    gc: GroupPresenceClassifier,
    *,
    p_threshold: float = 0.5,
    orientation: str = "intent",
) -> list[PairCandidate]:
    """Stamp each candidate's filter verdict from the group classifier."""
    from dataclasses import replace as dc_replace

    out = []
    for cand in candidates:
        ok = gc.transfer_success(cand.s_prime, cand.source_group, cand.target_group, p_threshold, orientation=orientation)
        out.append(dc_replace(cand, filter_passed=ok))
    return out
