"""Pool-based active learning of the pair-similarity classifier from noisy
votes: acquisition criteria, batch selection, vote aggregation, synthetic
oracles with label-flip noise, relabeling, and the outer query loop.

All Monte-Carlo criteria share one head-dropout mask matrix per scoring pass;
with identity dropout (the stub) LC and LC-UNC coincide exactly and BALD is
exactly zero.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .metrics import balanced_accuracy
from .nn import binary_entropy
from .pool import ConstraintPool, PairCandidate
from .similarity import FeatureCache, PairSimilarityClassifier

__all__ = [
    "CRITERIA",
    "variation_ratio",
    "score_pool",
    "acquisition_score",
    "select_batch",
    "aggregate",
    "LabelStore",
    "SyntheticOracle",
    "NoiseModel",
    "noisy_oracle_vote",
    "OracleLabelSource",
    "ExportLabelSource",
    "relabel_candidates",
    "LoopConfig",
    "RoundMetrics",
    "LoopResult",
    "run_loop",
    "DEFAULT_AXIS_MAP",
]

logger = logging.getLogger(__name__)

CRITERIA = ("RANDOM", "LC", "LC_UNC", "BALD", "VARRA", "MAJORITY")

DEFAULT_AXIS_MAP: dict[str, str] = {
    "Male": "gender_sexuality",
    "Female": "gender_sexuality",
    "Transgender": "gender_sexuality",
    "Heterosexual": "gender_sexuality",
    "Homosexual": "gender_sexuality",
    "Christian": "religion",
    "Jewish": "religion",
    "Muslim": "religion",
    "Hindu": "religion",
    "Buddhist": "religion",
    "Atheist": "religion",
    "Black": "race",
    "White": "race",
    "Asian": "race",
    "Latino": "race",
}


def variation_ratio(p: float) -> float:
    """1 - max(p, 1-p): zero at certainty, 0.5 at maximal uncertainty."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability outside [0,1]: {p}")
    return 1.0 - max(p, 1.0 - p)


def _hash_uniform(*parts) -> float:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def _row_mean(matrix: np.ndarray) -> np.ndarray:
    """Row means, returning exactly the common value for constant rows (the
    identity-dropout case must not pick up accumulation error)."""
    mean = matrix.mean(axis=1)
    constant = (matrix == matrix[:, :1]).all(axis=1)
    mean[constant] = matrix[constant, 0]
    return mean


def score_pool(
    criterion: str,
    model: PairSimilarityClassifier,
    pairs: Sequence[PairCandidate],
    *,
    cache: FeatureCache | None = None,
    seed: int = 0,
    n_masks: int | None = None,
) -> dict[str, float]:
    """Acquisition score per pair id, higher = more informative.

    LC scores the dropout-off pass; LC_UNC the mask-averaged probability;
    MAJORITY the fraction of masks voting 1; VARRA averages per-mask
    variation ratios; BALD is predictive entropy minus mean per-mask entropy.
    RANDOM draws a per-pair uniform from the seed.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    ids = [p.id for p in pairs]
    if criterion == "RANDOM":
        return {pid: _hash_uniform(seed, pid) for pid in ids}
    if criterion == "LC":
        probs = model.predict_proba(pairs, cache=cache)
        return {pid: variation_ratio(float(p)) for pid, p in zip(ids, probs)}
    mc = model.mc_probs(pairs, cache=cache, seed=seed, n_masks=n_masks)
    if criterion == "LC_UNC":
        mean = _row_mean(mc)
        return {pid: variation_ratio(float(p)) for pid, p in zip(ids, mean)}
    if criterion == "MAJORITY":
        frac = _row_mean((mc > model.threshold).astype(float))
        return {pid: variation_ratio(float(p)) for pid, p in zip(ids, frac)}
    if criterion == "VARRA":
        vr = 1.0 - np.maximum(mc, 1.0 - mc)
        return {pid: float(v) for pid, v in zip(ids, _row_mean(vr))}
    # BALD: mutual information between label and mask; exactly 0 when all
    # masks agree (constant row), and never negative.
    mean = _row_mean(mc)
    info = binary_entropy(mean) - _row_mean(binary_entropy(mc))
    constant = (mc == mc[:, :1]).all(axis=1)
    info[constant] = 0.0
    info = np.maximum(info, 0.0)
    return {pid: float(v) for pid, v in zip(ids, info)}


def acquisition_score(criterion: str, model, pair, *, cache=None, seed: int = 0, n_masks: int | None = None) -> float:
    return score_pool(criterion, model, [pair], cache=cache, seed=seed, n_masks=n_masks)[pair.id]


def select_batch(
    scores: Mapping[str, float],
    already_labeled: set[str],
    k: int = 1000,
    allow_relabel: bool = False,
) -> list[str]:
    """Top-k pair ids by score, descending, ties broken by id.  Without
    relabeling, previously labeled pairs are excluded.  If fewer than k pairs
    are eligible, all of them are returned (flagged in the log)."""
    eligible = [pid for pid in scores if allow_relabel or pid not in already_labeled]
    eligible.sort(key=lambda pid: (-scores[pid], pid))
    if len(eligible) < k:
        logger.warning("select_batch: only %d eligible pair(s) for k=%d", len(eligible), k)
        return eligible
    return eligible[:k]


def aggregate(votes: Sequence[int]) -> float:
    """Strict majority of binary votes; 0.5 on an exact tie."""
    if len(votes) == 0:
        raise ValueError("cannot aggregate an empty vote list")
    ones = sum(1 for v in votes if v == 1)
    zeros = len(votes) - ones
    if ones > zeros:
        return 1.0
    if zeros > ones:
        return 0.0
    return 0.5


class LabelStore:
    """Votes per pair id plus their majority aggregates."""

    def __init__(self):
        self.votes: dict[str, list[int]] = {}

    def add_vote(self, pair_id: str, vote: int) -> None:
        self.votes.setdefault(pair_id, []).append(int(vote))

    def __contains__(self, pair_id: str) -> bool:
        return pair_id in self.votes

    def __len__(self) -> int:
        return len(self.votes)

    def aggregated_label(self, pair_id: str) -> float:
        return aggregate(self.votes[pair_id])

    def aggregated(self) -> dict[str, float]:
        return {pid: aggregate(v) for pid, v in self.votes.items()}

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    def to_jsonl(self) -> str:
        lines = []
        for pid in sorted(self.votes):
            lines.append(json.dumps({"pair_id": pid, "votes": self.votes[pid]}, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "LabelStore":
        store = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                record = json.loads(line)
                for vote in record["votes"]:
                    store.add_vote(record["pair_id"], vote)
        return store


@dataclass(frozen=True)
class SyntheticOracle:
    """Programmatic stand-in for human judgments.

    variant "phi1_method": a pair is a constraint (label 0) iff it came from
    word replacement.  variant "phi2_axis": a pair is a constraint iff source
    and target group fall in the same category (gender/sexuality, race,
    religion).
    """

    variant: str
    axis_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_AXIS_MAP))
    wr_methods: frozenset[str] = frozenset({"word_replacement"})

    def __post_init__(self):
        if self.variant not in ("phi1_method", "phi2_axis"):
            raise ValueError(f"unknown oracle variant {self.variant!r}")

    def _category(self, group: str) -> str:
        for name, category in self.axis_map.items():
            if name.lower() == group.lower():
                return category
        raise KeyError(f"group {group!r} has no axis category")

    def label(self, pair: PairCandidate) -> int:
        if self.variant == "phi1_method":
            return 0 if pair.method in self.wr_methods else 1
        same = self._category(pair.source_group) == self._category(pair.target_group)
        return 0 if same else 1


@dataclass(frozen=True)
class NoiseModel:
    """Independent label flips, each vote flipped with probability p."""

    flip_probability: float = 0.3
    votes_per_pair: int = 1

    def __post_init__(self):
        if not 0.0 <= self.flip_probability < 0.5:
            raise ValueError("flip probability must be in [0, 0.5)")
        if self.votes_per_pair < 1:
            raise ValueError("votes_per_pair must be >= 1")


def noisy_oracle_vote(oracle: SyntheticOracle, pair: PairCandidate, noise: NoiseModel, rng) -> int:
    """The oracle's true label, flipped with the configured probability."""
    true = oracle.label(pair)
    if float(rng.random()) < noise.flip_probability:
        return 1 - true
    return true


class OracleLabelSource:
    """Label source backed by a synthetic oracle with flip noise.

    Votes are deterministic per (seed, pair, query index), so repeated
    queries of one pair give fresh independent votes that replay exactly.
    """

    def __init__(self, oracle: SyntheticOracle, noise: NoiseModel | None = None, seed: int = 0, failure_rate: float = 0.0):
        self.oracle = oracle
        self.noise = noise or NoiseModel(flip_probability=0.0)
        self.seed = seed
        self.failure_rate = failure_rate
        self._query_counts: dict[str, int] = {}

    def query(self, pair: PairCandidate) -> int | None:
        index = self._query_counts.get(pair.id, 0)
        self._query_counts[pair.id] = index + 1
        if self.failure_rate and _hash_uniform(self.seed, "fail", pair.id, index) < self.failure_rate:
            return None
        rng = np.random.default_rng(
            int.from_bytes(hashlib.sha256(f"{self.seed}:{pair.id}:{index}".encode()).digest()[:8], "big")
        )
        return noisy_oracle_vote(self.oracle, pair, self.noise, rng)


class ExportLabelSource:
    """Label source reading an exported vote store (e.g. a closed campaign);
    each query consumes the pair's next unused vote."""

    def __init__(self, store: LabelStore):
        self._votes = {pid: list(votes) for pid, votes in store.votes.items()}
        self._cursor: dict[str, int] = {}

    def query(self, pair: PairCandidate) -> int | None:
        votes = self._votes.get(pair.id, [])
        used = self._cursor.get(pair.id, 0)
        if used >= len(votes):
            return None
        self._cursor[pair.id] = used + 1
        return votes[used]


def relabel_candidates(
    model: PairSimilarityClassifier,
    store: LabelStore,
    pairs: Sequence[PairCandidate],
    k: int = 500,
    *,
    cache: FeatureCache | None = None,
) -> list[str]:
    """Pairs most worth a second opinion: both the vote aggregate and the
    model agree on 0, ranked by LC score.  Returns up to k ids (all eligible
    ones, flagged in the log, when fewer exist)."""
    labeled = [p for p in pairs if p.id in store and store.aggregated_label(p.id) == 0.0]
    if not labeled:
        return []
    verdicts = model.predict(labeled, cache=cache)
    eligible = [p for p, v in zip(labeled, verdicts) if v == 0]
    if not eligible:
        return []
    scores = score_pool("LC", model, eligible, cache=cache)
    ranked = sorted(scores, key=lambda pid: (-scores[pid], pid))
    if len(ranked) < k:
        logger.warning("relabel_candidates: only %d eligible pair(s) for k=%d", len(ranked), k)
        return ranked
    return ranked[:k]


@dataclass
class LoopConfig:
    rounds: int = 6
    batch_size: int = 1000
    criterion: str = "LC"
    allow_relabel: bool = False
    initial_random_batch: bool = True  # first block selected uniformly
    regime: str = "per_round"  # per_round | retrain | retrain_reweigh | from_scratch | from_scratch_reweigh
    epochs_per_round: int = 5
    votes_per_query: int = 1  # >1 trades pool coverage for per-pair majority votes
    seed: int = 0

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.regime not in ("per_round", "retrain", "retrain_reweigh", "from_scratch", "from_scratch_reweigh"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.votes_per_query < 1:
            raise ValueError("votes_per_query must be >= 1")


@dataclass
class RoundMetrics:
    round: int
    criterion: str
    queried: int
    labeled: int
    failed: int
    total_labeled: int
    balanced_accuracy: float | None = None


@dataclass
class LoopResult:
    model: PairSimilarityClassifier
    store: LabelStore
    rounds: list[RoundMetrics]
    queried_ids: set[str]

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["round", "criterion", "queried", "labeled", "failed", "total_labeled", "balanced_accuracy"])
        for r in self.rounds:
            ba = "" if r.balanced_accuracy is None else f"{r.balanced_accuracy:.1f}"
            writer.writerow([r.round, r.criterion, r.queried, r.labeled, r.failed, r.total_labeled, ba])
        return buf.getvalue()


def run_loop(
    pool: ConstraintPool | Sequence[PairCandidate],
    model_factory: Callable[[], PairSimilarityClassifier],
    label_source,
    config: LoopConfig | None = None,
    *,
    eval_pairs: Sequence[PairCandidate] | None = None,
    eval_labels: Sequence[int] | None = None,
) -> LoopResult:
    """Iterate: score the pool, select a batch, query one vote per pair,
    train on the round's labeled block.  Failed queries consume budget and
    are dropped; a round that yields no label at all aborts the loop.
    The regime selects an optional finalization pass over all labels.
    """
    config = config or LoopConfig()
    pairs = list(pool)
    by_id = {p.id: p for p in pairs}
    model = model_factory()
    cache = model.precompute_features(pairs)
    store = LabelStore()
    queried: set[str] = set()
    rounds: list[RoundMetrics] = []

    if model.head is None:
        model.head = model._new_head()

    for round_index in range(config.rounds):
        criterion = "RANDOM" if (round_index == 0 and config.initial_random_batch) else config.criterion
        scores = score_pool(criterion, model, pairs, cache=cache, seed=hash_seed(config.seed, round_index))
        batch = select_batch(scores, queried, k=config.batch_size, allow_relabel=config.allow_relabel)
        block_pairs: list[PairCandidate] = []
        failed = 0
        for pid in batch:
            queried.add(pid)
            got_any = False
            for _ in range(config.votes_per_query):
                vote = label_source.query(by_id[pid])
                if vote is None:
                    failed += 1
                    continue
                store.add_vote(pid, vote)
                got_any = True
            if got_any:
                block_pairs.append(by_id[pid])
        if not block_pairs:
            raise RuntimeError(f"label source exhausted in round {round_index}")
        labels = [store.aggregated_label(p.id) for p in block_pairs]
        model.fit(block_pairs, labels, reset=False, epochs=config.epochs_per_round, cache=cache)
        ba = None
        if eval_pairs is not None and eval_labels is not None:
            preds = model.predict(eval_pairs)
            ba = balanced_accuracy(preds, eval_labels)
        rounds.append(
            RoundMetrics(
                round=round_index,
                criterion=criterion,
                queried=len(batch),
                labeled=len(block_pairs),
                failed=failed,
                total_labeled=len(store),
                balanced_accuracy=ba,
            )
        )

    if config.regime != "per_round" and len(store):
        all_pairs = [by_id[pid] for pid in sorted(store.votes)]
        all_labels = [store.aggregated_label(p.id) for p in all_pairs]
        reweigh = config.regime.endswith("reweigh")
        if config.regime.startswith("from_scratch"):
            model = model_factory()
            model.fit(all_pairs, all_labels, reset=True, epochs=config.epochs_per_round, reweigh=reweigh, cache=cache)
        else:
            model.fit(all_pairs, all_labels, reset=False, epochs=1, reweigh=reweigh, cache=cache)

    return LoopResult(model=model, store=store, rounds=rounds, queried_ids=queried)


def hash_seed(*parts) -> int:
    return int.from_bytes(hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()[:8], "big")
