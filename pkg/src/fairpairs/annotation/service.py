"""Labeling-campaign engine: qualification, task blocks, vote collection,
quality control, aggregation, export.

Quota discipline works through reservations: a pair handed to a worker counts
against its vote quota until the block is accepted, approved, or rejected, so
concurrent workers can never oversubscribe a pair, and no worker ever sees a
pair twice.  Flagged blocks (failed attention check or blank explanation)
park their votes in a review queue and contribute nothing unless approved;
rejected blocks return their pairs to the needing-votes set.
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..active_learning import LabelStore, aggregate
from ..pool import PairCandidate
from .battery import Battery, get_battery

__all__ = [
    "AnnotationError",
    "CampaignExhausted",
    "IncompleteSubmission",
    "QualificationItem",
    "AttentionItem",
    "BlockItem",
    "TaskBlock",
    "Campaign",
    "Worker",
    "AnnotationService",
    "BLOCK_SIZE",
    "CAMPAIGN_ITEMS_PER_BLOCK",
    "QUALIFICATION_SIZE",
    "QUALIFICATION_PASS",
]

BLOCK_SIZE = 11
CAMPAIGN_ITEMS_PER_BLOCK = 10
QUALIFICATION_SIZE = 10
QUALIFICATION_PASS = 9


class AnnotationError(RuntimeError):
    pass


class CampaignExhausted(AnnotationError):
    pass


class IncompleteSubmission(AnnotationError):
    pass


@dataclass(frozen=True)
class QualificationItem:
    a: str
    b: str
    correct_option: int
    note: str = ""  # provenance of the gold answer


@dataclass(frozen=True)
class AttentionItem:
    a: str
    b: str
    correct_option: int


@dataclass(frozen=True)
class BlockItem:
    index: int
    a: str
    b: str
    group_a: str = ""
    group_b: str = ""
    pair_id: str | None = None  # None for the attention item


@dataclass
class TaskBlock:
    id: str
    campaign_id: str
    worker_id: str
    items: list[BlockItem]
    attention_index: int
    attention_correct: int
    explanation_index: int
    status: str = "open"  # open | accepted | flagged | approved | rejected
    responses: list[dict] | None = None

    def public_view(self) -> dict:
        """What the worker sees: no attention markers."""
        return {
            "block_id": self.id,
            "campaign_id": self.campaign_id,
            "worker_id": self.worker_id,
            "explanation_index": self.explanation_index,
            "items": [
                {"index": it.index, "a": it.a, "b": it.b, "group_a": it.group_a, "group_b": it.group_b}
                for it in self.items
            ],
        }


@dataclass
class Worker:
    id: str
    qualification: str = "unqualified"  # unqualified | qualified | blocked
    blocks: list[str] = field(default_factory=list)


@dataclass
class Campaign:
    id: str
    battery: Battery
    votes_per_pair: int
    pairs: dict[str, PairCandidate]
    attention_items: list[AttentionItem]
    state: str = "open"  # open | closed
    # consent texts rendered by the front end before the first block
    notices: dict[str, str] = field(default_factory=dict)
    # accepted fairness votes per pair: list of (worker_id, vote)
    votes: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    # accepted full-battery judgments: pair_id -> list of answer maps
    judgments: dict[str, list[dict]] = field(default_factory=dict)
    reserved: dict[str, int] = field(default_factory=dict)
    # pairs assigned to or judged by each worker (never re-issued)
    worker_pairs: dict[str, set[str]] = field(default_factory=dict)
    # scheduling index: load level -> insertion-ordered pair ids, only pairs
    # still below the vote quota appear
    buckets: dict[int, dict[str, None]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.buckets:
            self.buckets = {0: {pid: None for pid in self.pairs}}

    def accepted_count(self, pair_id: str) -> int:
        return len(self.votes.get(pair_id, ()))

    def load(self, pair_id: str) -> int:
        return self.accepted_count(pair_id) + self.reserved.get(pair_id, 0)

    def shift_load(self, pair_id: str, delta: int) -> None:
        """Move a pair between scheduling buckets as its load changes."""
        new = self.load(pair_id)
        old = new - delta
        bucket = self.buckets.get(old)
        if bucket is not None:
            bucket.pop(pair_id, None)
            if not bucket:
                del self.buckets[old]
        if new < self.votes_per_pair:
            self.buckets.setdefault(new, {})[pair_id] = None


class AnnotationService:
    """Thread-safe in-memory campaign service."""

    def __init__(self, qualification_items: Sequence[QualificationItem] = (), *, seed: int = 0):
        if qualification_items and len(qualification_items) != QUALIFICATION_SIZE:
            raise ValueError(f"need exactly {QUALIFICATION_SIZE} qualification items")
        self.qualification_items = list(qualification_items)
        self.workers: dict[str, Worker] = {}
        self.campaigns: dict[str, Campaign] = {}
        self.blocks: dict[str, TaskBlock] = {}
        self._rng = np.random.default_rng(seed)
        self._ids = itertools.count(1)
        self._lock = threading.RLock()

    # ---- workers / qualification -------------------------------------------
    def worker(self, worker_id: str) -> Worker:
        with self._lock:
            if worker_id not in self.workers:
                self.workers[worker_id] = Worker(id=worker_id)
            return self.workers[worker_id]

    def qualification_view(self) -> list[dict]:
        return [{"index": i, "a": q.a, "b": q.b} for i, q in enumerate(self.qualification_items)]

    def run_qualification(self, worker_id: str, answers: Sequence[int]) -> str:
        """Grade a qualification attempt; one attempt per worker.

        Passing needs at least 9 of the 10 gold answers.
        """
        with self._lock:
            worker = self.worker(worker_id)
            if worker.qualification != "unqualified":
                raise AnnotationError(f"worker {worker_id} already attempted qualification")
            if len(answers) != len(self.qualification_items):
                raise IncompleteSubmission(
                    f"expected {len(self.qualification_items)} answers, got {len(answers)}"
                )
            correct = sum(1 for a, item in zip(answers, self.qualification_items) if a == item.correct_option)
            worker.qualification = "qualified" if correct >= QUALIFICATION_PASS else "blocked"
            return worker.qualification

    # ---- campaigns ------------------------------------------------------------
    def create_campaign(
        self,
        pairs: Iterable[PairCandidate],
        *,
        votes_per_pair: int = 9,
        battery: str = "fairness_only",
        attention_items: Sequence[AttentionItem] = (),
        notices: Mapping[str, str] | None = None,
    ) -> Campaign:
        if votes_per_pair < 1:
            raise ValueError("votes_per_pair must be >= 1")
        if not attention_items:
            raise ValueError("a campaign needs at least one attention-check item")
        with self._lock:
            cid = f"campaign-{next(self._ids)}"
            campaign = Campaign(
                id=cid,
                battery=get_battery(battery),
                votes_per_pair=votes_per_pair,
                pairs={p.id: p for p in pairs},
                attention_items=list(attention_items),
                notices=dict(notices or {}),
            )
            if not campaign.pairs:
                raise ValueError("campaign needs at least one pair")
            self.campaigns[cid] = campaign
            return campaign

    def campaign(self, campaign_id: str) -> Campaign:
        try:
            return self.campaigns[campaign_id]
        except KeyError:
            raise AnnotationError(f"unknown campaign {campaign_id!r}") from None

    def close_campaign(self, campaign_id: str) -> None:
        with self._lock:
            self.campaign(campaign_id).state = "closed"

    # ---- task blocks ------------------------------------------------------------
    def next_block(self, campaign_id: str, worker_id: str) -> TaskBlock:
        """Ten lowest-vote-count pairs the worker has not seen, plus one
        attention check at a uniformly random position."""
        with self._lock:
            campaign = self.campaign(campaign_id)
            if campaign.state != "open":
                raise AnnotationError(f"campaign {campaign_id} is closed")
            worker = self.worker(worker_id)
            if worker.qualification != "qualified":
                raise AnnotationError(f"worker {worker_id} is not qualified")
            seen = campaign.worker_pairs.setdefault(worker_id, set())
            chosen: list[str] = []
            for load in sorted(campaign.buckets):
                for pid in campaign.buckets[load]:
                    if pid in seen:
                        continue
                    chosen.append(pid)
                    if len(chosen) == CAMPAIGN_ITEMS_PER_BLOCK:
                        break
                if len(chosen) == CAMPAIGN_ITEMS_PER_BLOCK:
                    break
            if len(chosen) < CAMPAIGN_ITEMS_PER_BLOCK:
                raise CampaignExhausted(
                    f"campaign {campaign_id} has {len(chosen)} assignable pair(s) left for {worker_id}"
                )
            attention = campaign.attention_items[int(self._rng.integers(len(campaign.attention_items)))]
            slot = int(self._rng.integers(BLOCK_SIZE))
            explanation_index = int(self._rng.integers(BLOCK_SIZE))
            items: list[BlockItem] = []
            queue = list(chosen)
            for index in range(BLOCK_SIZE):
                if index == slot:
                    items.append(BlockItem(index=index, a=attention.a, b=attention.b))
                else:
                    pid = queue.pop(0)
                    pair = campaign.pairs[pid]
                    items.append(
                        BlockItem(
                            index=index,
                            a=pair.s,
                            b=pair.s_prime,
                            group_a=pair.source_group,
                            group_b=pair.target_group,
                            pair_id=pid,
                        )
                    )
            block = TaskBlock(
                id=f"block-{next(self._ids)}",
                campaign_id=campaign_id,
                worker_id=worker_id,
                items=items,
                attention_index=slot,
                attention_correct=attention.correct_option,
                explanation_index=explanation_index,
            )
            self.blocks[block.id] = block
            worker.blocks.append(block.id)
            for pid in chosen:
                seen.add(pid)
                campaign.reserved[pid] = campaign.reserved.get(pid, 0) + 1
                campaign.shift_load(pid, +1)
            return block

    def submit_block(self, block_id: str, responses: Sequence[Mapping]) -> str:
        """Grade a submitted block.

        ``responses`` holds one entry per item, in order: {"answers":
        {question_key: option_index}, "explanation": str (required at the
        block's explanation index)}.  Missing answers or a missing explanation
        field are an IncompleteSubmission error; a wrong attention answer or
        a blank explanation flags the block for review.
        Returns "accepted" or "flagged".
        """
        with self._lock:
            block = self._open_block(block_id)
            campaign = self.campaign(block.campaign_id)
            battery = campaign.battery
            if len(responses) != BLOCK_SIZE:
                raise IncompleteSubmission(f"expected {BLOCK_SIZE} item responses, got {len(responses)}")
            for index, response in enumerate(responses):
                answers = response.get("answers")
                if answers is None:
                    raise IncompleteSubmission(f"item {index} has no answers")
                battery.validate_answers(answers)
            required = responses[block.explanation_index]
            if "explanation" not in required or required["explanation"] is None:
                raise IncompleteSubmission(f"item {block.explanation_index} requires an explanation")

            explanation = str(required["explanation"])
            attention_answers = responses[block.attention_index]["answers"]
            attention_vote_ok = attention_answers[battery.fairness_question.key] == block.attention_correct
            block.responses = [dict(r) for r in responses]
            if attention_vote_ok and explanation.strip():
                self._accept(block)
                return "accepted"
            block.status = "flagged"
            return "flagged"

    def _open_block(self, block_id: str) -> TaskBlock:
        try:
            block = self.blocks[block_id]
        except KeyError:
            raise AnnotationError(f"unknown block {block_id!r}") from None
        if block.status != "open":
            raise AnnotationError(f"block {block_id} already {block.status}")
        return block

    def _accept(self, block: TaskBlock) -> None:
        campaign = self.campaign(block.campaign_id)
        battery = campaign.battery
        for item, response in zip(block.items, block.responses):
            if item.pair_id is None:
                continue
            answers = response["answers"]
            vote = battery.fairness_vote(answers)
            campaign.votes.setdefault(item.pair_id, []).append((block.worker_id, vote))
            campaign.judgments.setdefault(item.pair_id, []).append(dict(answers))
            campaign.reserved[item.pair_id] -= 1
        block.status = "accepted"

    # ---- review queue -------------------------------------------------------------
    def review_queue(self) -> list[TaskBlock]:
        with self._lock:
            return [b for b in self.blocks.values() if b.status == "flagged"]

    def review(self, block_id: str, approve: bool) -> str:
        """Resolve a flagged block: approve counts its votes, reject releases
        its pairs back to the needing-votes set."""
        with self._lock:
            try:
                block = self.blocks[block_id]
            except KeyError:
                raise AnnotationError(f"unknown block {block_id!r}") from None
            if block.status != "flagged":
                raise AnnotationError(f"block {block_id} is not flagged")
            campaign = self.campaign(block.campaign_id)
            if approve:
                self._accept(block)
                block.status = "approved"
            else:
                for item in block.items:
                    if item.pair_id is None:
                        continue
                    # quota slot released: other workers may pick the pair up
                    campaign.reserved[item.pair_id] -= 1
                    campaign.shift_load(item.pair_id, -1)
                block.status = "rejected"
            return block.status

    # ---- aggregation / export ------------------------------------------------------
    def _require_aggregatable(self, campaign: Campaign) -> None:
        if campaign.state == "closed":
            return
        incomplete = [pid for pid in campaign.pairs if campaign.accepted_count(pid) < campaign.votes_per_pair]
        if incomplete:
            raise AnnotationError(
                f"campaign {campaign.id} is open and {len(incomplete)} pair(s) lack their vote quota"
            )

    def aggregate_campaign(self, campaign_id: str) -> dict:
        """Majority labels per pair plus, for full batteries, per-question
        affirmative rates (overall and majority-vote)."""
        with self._lock:
            campaign = self.campaign(campaign_id)
            self._require_aggregatable(campaign)
            labels: dict[str, float] = {}
            unlabeled: list[str] = []
            for pid in sorted(campaign.pairs):
                votes = [v for _, v in campaign.votes.get(pid, ())]
                if not votes:
                    unlabeled.append(pid)
                    continue
                labels[pid] = aggregate(votes)
            result: dict = {
                "campaign_id": campaign_id,
                "labels": labels,
                "votes": {pid: [v for _, v in campaign.votes.get(pid, ())] for pid in sorted(campaign.votes)},
                "unlabeled": unlabeled,
            }
            rates: dict[str, dict[str, float]] = {}
            for question in campaign.battery.questions:
                total = 0
                affirmative = 0
                majority_pairs = 0
                scored_pairs = 0
                for pid, answer_sets in campaign.judgments.items():
                    choices = [a[question.key] for a in answer_sets if question.key in a]
                    if not choices:
                        continue
                    scored_pairs += 1
                    hits = sum(1 for c in choices if c == question.affirmative_index)
                    total += len(choices)
                    affirmative += hits
                    if hits * 2 > len(choices):
                        majority_pairs += 1
                if total:
                    rates[question.key] = {
                        "overall_percent": 100.0 * affirmative / total,
                        "majority_percent": 100.0 * majority_pairs / scored_pairs,
                    }
            if rates:
                result["question_rates"] = rates
            return result

    def export_label_store(self, campaign_id: str) -> LabelStore:
        with self._lock:
            campaign = self.campaign(campaign_id)
            self._require_aggregatable(campaign)
            store = LabelStore()
            for pid in sorted(campaign.votes):
                for _, vote in campaign.votes[pid]:
                    store.add_vote(pid, vote)
            return store

    def export_jsonl(self, campaign_id: str) -> str:
        """Byte-stable vote export consumed by the active-learning loop."""
        return self.export_label_store(campaign_id).to_jsonl()
