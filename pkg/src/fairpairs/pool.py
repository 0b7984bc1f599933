"""Candidate constraint pools: assembly, partitioning, persistence.

A pool is a named, seeded, reproducible collection of sentence pairs.  Pair
identity is a content hash of (s, s_prime, method), so regenerating the same
pair never duplicates a constraint and manifests round-trip byte-identically
(members are kept in id order).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CommentStore

__all__ = [
    "PairCandidate",
    "ConstraintPool",
    "PoolShortfallError",
    "pair_id",
    "assemble",
    "make_test_pool",
    "make_adverse",
    "filter_pool",
    "save_candidates",
    "load_candidates",
    "save_pool",
    "load_pool",
]

logger = logging.getLogger(__name__)

LLM_METHODS = ("gpt_zero_shot", "gpt_edit", "gpt_postprocess")
# Default allocation of an llm sample budget over the three modes, proportional
# to the reference full-scale pool composition (6200 / 3500 / 5300).
LLM_MODE_RATIOS: dict[str, int] = {"gpt_zero_shot": 6200, "gpt_edit": 3500, "gpt_postprocess": 5300}


class PoolShortfallError(ValueError):
    """A source cannot supply the requested number of candidates."""


def pair_id(s: str, s_prime: str, method: str) -> str:
    payload = "\x1f".join((s, s_prime, method)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class PairCandidate:
    s: str
    s_prime: str
    method: str
    source_group: str = ""
    target_group: str = ""
    filter_passed: bool = False
    provenance: Mapping = field(default_factory=dict)
    id: str = ""

    def __post_init__(self):
        expected = pair_id(self.s, self.s_prime, self.method)
        if not self.id:
            object.__setattr__(self, "id", expected)
        elif self.id != expected:
            raise ValueError(f"pair id {self.id} does not match content hash {expected}")
        if self.s == self.s_prime and self.method != "identity_placeholder":
            raise ValueError("s and s_prime are identical; only identity_placeholder pairs may coincide")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "s": self.s,
            "s_prime": self.s_prime,
            "method": self.method,
            "source_group": self.source_group,
            "target_group": self.target_group,
            "filter_passed": self.filter_passed,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "PairCandidate":
        return cls(
            s=record["s"],
            s_prime=record["s_prime"],
            method=record["method"],
            source_group=record.get("source_group", ""),
            target_group=record.get("target_group", ""),
            filter_passed=record.get("filter_passed", False),
            provenance=record.get("provenance", {}),
            id=record.get("id", ""),
        )


class ConstraintPool:
    """Immutable-by-convention set of candidates with a manifest."""

    def __init__(self, name: str, candidates: Iterable[PairCandidate], *, split: str = "train", seed: int | None = None, notes: Mapping | None = None):
        unique: dict[str, PairCandidate] = {}
        duplicates = 0
        for cand in candidates:
            if cand.id in unique:
                duplicates += 1
                continue
            unique[cand.id] = cand
        if duplicates:
            logger.info("pool %s: deduplicated %d candidate(s)", name, duplicates)
        self.name = name
        self.pairs = {pid: unique[pid] for pid in sorted(unique)}
        self.split = split
        self.seed = seed
        self.notes = dict(notes or {})
        if duplicates:
            self.notes.setdefault("deduplicated", duplicates)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs.values())

    def __contains__(self, pid: str) -> bool:
        return pid in self.pairs

    @property
    def members(self) -> list[str]:
        return list(self.pairs)

    @property
    def composition(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for cand in self.pairs.values():
            counts[cand.method] = counts.get(cand.method, 0) + 1
        return dict(sorted(counts.items()))

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "split": self.split,
            "seed": self.seed,
            "composition": self.composition,
            "size": len(self),
            "members": self.members,
            "notes": self.notes,
        }


def _sample(cands: Sequence[PairCandidate], k: int, rng: np.random.Generator, source: str) -> list[PairCandidate]:
    if len(cands) < k:
        raise PoolShortfallError(f"shortfall {source}: {len(cands)} < {k}")
    idx = rng.choice(len(cands), size=k, replace=False)
    return [cands[i] for i in sorted(idx)]


def _allocate_llm_quota(available: Mapping[str, int], total: int) -> dict[str, int]:
    """Largest-remainder allocation over the modes that actually have
    candidates, proportional to the reference mode ratios."""
    modes = [m for m in LLM_METHODS if available.get(m, 0) > 0]
    if not modes:
        if total == 0:
            return {}
        raise PoolShortfallError(f"shortfall llm: 0 < {total}")
    weights = {m: LLM_MODE_RATIOS[m] for m in modes}
    denom = sum(weights.values())
    raw = {m: total * weights[m] / denom for m in modes}
    quota = {m: int(raw[m]) for m in modes}
    leftover = total - sum(quota.values())
    for m in sorted(modes, key=lambda m: (raw[m] - quota[m], m), reverse=True):
        if leftover == 0:
            break
        quota[m] += 1
        leftover -= 1
    return quota


def assemble(
    wr: Sequence[PairCandidate],
    st: Sequence[PairCandidate],
    llm: Sequence[PairCandidate],
    sizes: Mapping[str, int] | None = None,
    seed: int = 0,
    *,
    name: str = "C",
    split: str = "train",
    require_filter_passed: bool = True,
) -> ConstraintPool:
    """Uniform random sample without replacement per source.

    Default sizes reproduce the reference pool: 42500 word-replacement pairs,
    42500 style-transfer pairs and 15000 llm pairs (allocated over the llm
    modes by the reference ratios).  Raises PoolShortfallError naming the
    short source.
    """
    sizes = dict(sizes or {"wr": 42500, "st": 42500, "llm": 15000})
    rng = np.random.default_rng(seed)

    def eligible(cands):
        ordered = sorted(cands, key=lambda c: c.id)
        if require_filter_passed:
            ordered = [c for c in ordered if c.filter_passed]
        return ordered

    selected: list[PairCandidate] = []
    selected.extend(_sample(eligible(wr), sizes.get("wr", 0), rng, "wr"))
    selected.extend(_sample(eligible(st), sizes.get("st", 0), rng, "st"))
    llm_eligible = eligible(llm)
    by_mode: dict[str, list[PairCandidate]] = {m: [] for m in LLM_METHODS}
    for cand in llm_eligible:
        if cand.method not in by_mode:
            raise ValueError(f"unexpected llm method {cand.method!r}")
        by_mode[cand.method].append(cand)
    quota = _allocate_llm_quota({m: len(v) for m, v in by_mode.items()}, sizes.get("llm", 0))
    for mode, k in quota.items():
        selected.extend(_sample(by_mode[mode], k, rng, mode))
    return ConstraintPool(name, selected, split=split, seed=seed)


def make_test_pool(
    pool: ConstraintPool,
    wr: Sequence[PairCandidate],
    st: Sequence[PairCandidate],
    llm: Sequence[PairCandidate],
    *,
    fraction: float = 0.25,
    seed: int = 0,
    name: str | None = None,
) -> ConstraintPool:
    """Test-split pool with the same composition ratios as ``pool``, scaled by
    ``fraction``; the total is floored, per-source counts by largest remainder."""
    composition = pool.composition
    grouped = {"wr": 0, "st": 0, "llm": 0}
    for method, count in composition.items():
        if method in LLM_METHODS:
            grouped["llm"] += count
        elif method == "word_replacement":
            grouped["wr"] += count
        else:
            grouped["st"] += count
    total = int(fraction * len(pool))
    raw = {k: fraction * v for k, v in grouped.items()}
    sizes = {k: int(v) for k, v in raw.items()}
    leftover = total - sum(sizes.values())
    for k in sorted(raw, key=lambda k: (raw[k] - sizes[k], k), reverse=True):
        if leftover == 0:
            break
        sizes[k] += 1
        leftover -= 1
    return assemble(wr, st, llm, sizes, seed, name=name or f"{pool.name}_test", split="test")


def make_adverse(pool: ConstraintPool, corpus: CommentStore, n: int = 10000, seed: int = 0, *, name: str | None = None) -> ConstraintPool:
    """Union of ``pool`` with n label-contrast pairs: s drawn uniformly among
    toxic comments, s_prime among non-toxic ones.  These bypass the group
    transfer filter by construction."""
    labeled = corpus.labeled()
    toxic = [lc.comment.text for lc in labeled if lc.y == 1]
    benign = [lc.comment.text for lc in labeled if lc.y == 0]
    if n > 0 and (not toxic or not benign):
        raise ValueError("corpus must contain both toxic and non-toxic comments")
    if n > 0 and len(toxic) * len(benign) < n:
        raise ValueError(f"insufficient comments for {n} distinct adverse pairs ({len(toxic)} toxic x {len(benign)} non-toxic)")
    rng = np.random.default_rng(seed)
    adverse: list[PairCandidate] = []
    taken: set[str] = set(pool.members)
    while len(adverse) < n:
        s = toxic[int(rng.integers(len(toxic)))]
        s_prime = benign[int(rng.integers(len(benign)))]
        pid = pair_id(s, s_prime, "adverse")
        if pid in taken:
            continue
        taken.add(pid)
        adverse.append(
            PairCandidate(s=s, s_prime=s_prime, method="adverse", filter_passed=True, provenance={"seed": seed})
        )
    return ConstraintPool(name or f"{pool.name}_adverse", list(pool) + adverse, split=pool.split, seed=seed)


def filter_pool(pool: ConstraintPool, predictions: Mapping[str, float], threshold: float, *, name: str | None = None) -> ConstraintPool:
    """Keep pairs the similarity model accepts as constraints (p <= threshold;
    the complement p > threshold is the model's 'not a constraint' verdict).
    Retention rate is recorded in the pool notes."""
    missing = [pid for pid in pool.members if pid not in predictions]
    if missing:
        raise KeyError(f"missing similarity predictions for {len(missing)} pair(s), e.g. {missing[0]}")
    kept = [cand for cand in pool if predictions[cand.id] <= threshold]
    retention = 100.0 * len(kept) / len(pool) if len(pool) else 0.0
    notes = {"threshold": threshold, "retention_percent": retention, "filtered_from": pool.name}
    return ConstraintPool(name or f"{pool.name}_filtered", kept, split=pool.split, seed=pool.seed, notes=notes)


def save_candidates(candidates: Iterable[PairCandidate], path: str | Path) -> int:
    """Write candidates as JSONL in input order; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for cand in candidates:
            fh.write(json.dumps(cand.to_record(), sort_keys=True, ensure_ascii=False) + "\n")
            n += 1
    return n


def load_candidates(path: str | Path) -> list[PairCandidate]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            out.append(PairCandidate.from_record(json.loads(line)))
    return out


def save_pool(pool: ConstraintPool, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "pairs.jsonl", "w", encoding="utf-8") as fh:
        for cand in pool:
            fh.write(json.dumps(cand.to_record(), sort_keys=True, ensure_ascii=False) + "\n")
    manifest = json.dumps(pool.manifest(), sort_keys=True, ensure_ascii=False, indent=2)
    (directory / "manifest.json").write_text(manifest + "\n", encoding="utf-8")


def load_pool(directory: str | Path) -> ConstraintPool:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    candidates = []
    with open(directory / "pairs.jsonl", "r", encoding="utf-8") as fh:
        for line in fh:
            candidates.append(PairCandidate.from_record(json.loads(line)))
    return ConstraintPool(
        manifest["name"], candidates, split=manifest.get("split", "train"), seed=manifest.get("seed"), notes=manifest.get("notes")
    )
