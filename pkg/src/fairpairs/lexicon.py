"""Word-replacement pair generation from curated per-group word lists.

Matching is case-insensitive, word-boundary anchored, and longest-match-first
("trans female" wins over "trans" and is never split by the shorter term), so
list entries that are substrings of other entries cannot produce partial
replacements.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .corpus import CommentStore, binarize
from .pool import PairCandidate

__all__ = [
    "Lexicon",
    "GroupTerms",
    "Replacement",
    "ReplacementResult",
    "LexiconError",
    "load_lexicon",
    "packaged_lexicon",
    "replace",
    "enumerate_wr_candidates",
    "build_matcher",
]

logger = logging.getLogger(__name__)

KINDS = ("descriptors", "nouns")


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class GroupTerms:
    descriptors: tuple[str, ...] = ()
    nouns: tuple[str, ...] = ()
    display: str | None = None

    def terms(self, kind: str) -> tuple[str, ...]:
        if kind not in KINDS:
            raise LexiconError(f"unknown kind {kind!r}")
        return getattr(self, kind)

    def all_terms(self) -> list[tuple[str, str]]:
        return [(t, "descriptors") for t in self.descriptors] + [(t, "nouns") for t in self.nouns]


@dataclass(frozen=True)
class Lexicon:
    groups: Mapping[str, GroupTerms]

    def __post_init__(self):
        for name, entry in self.groups.items():
            if not entry.descriptors and not entry.nouns:
                raise LexiconError(f"group {name!r} has no terms")

    def __contains__(self, group: str) -> bool:
        return group in self.groups

    def group(self, name: str) -> GroupTerms:
        try:
            return self.groups[name]
        except KeyError:
            raise LexiconError(f"unknown group {name!r}") from None

    def display_name(self, group: str) -> str:
        entry = self.group(group)
        return entry.display or group.lower()

    def to_dict(self) -> dict:
        out: dict = {"groups": {}}
        for name, entry in self.groups.items():
            record = {"descriptors": list(entry.descriptors), "nouns": list(entry.nouns)}
            if entry.display:
                record["display"] = entry.display
            out["groups"][name] = record
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _parse_lexicon(payload: Mapping) -> Lexicon:
    groups = {}
    for name, entry in payload["groups"].items():
        unknown = set(entry) - {"descriptors", "nouns", "display"}
        if unknown:
            raise LexiconError(f"group {name!r} has unknown kind key(s): {sorted(unknown)}")
        groups[name] = GroupTerms(
            descriptors=tuple(entry.get("descriptors", ())),
            nouns=tuple(entry.get("nouns", ())),
            display=entry.get("display"),
        )
    return Lexicon(groups=groups)


def load_lexicon(path: str | Path) -> Lexicon:
    """Load a lexicon file; serializing and reloading yields an equal lexicon."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return _parse_lexicon(payload)


def packaged_lexicon() -> Lexicon:
    """The word lists shipped with the package."""
    payload = json.loads(resources.files("fairpairs.data").joinpath("wordlists.json").read_text(encoding="utf-8"))
    return _parse_lexicon(payload)


@dataclass(frozen=True)
class Replacement:
    span: tuple[int, int]
    source_term: str
    target_term: str
    kind: str


@dataclass(frozen=True)
class ReplacementResult:
    original: str
    modified: str
    replacements: tuple[Replacement, ...]


def build_matcher(terms: Iterable[tuple[str, str]]) -> tuple[re.Pattern, dict[str, str]]:
    """Compile a case-insensitive word-boundary matcher over (term, kind)
    pairs.  Alternatives are ordered longest-first so regex alternation
    implements longest-match-first at each position."""
    pairs = sorted(terms, key=lambda tk: (-len(tk[0]), tk[0]))
    kind_by_term = {t.lower(): k for t, k in pairs}
    pattern = re.compile(
        r"(?<!\w)(" + "|".join(re.escape(t) for t, _ in pairs) + r")(?!\w)",
        flags=re.IGNORECASE,
    )
    return pattern, kind_by_term


def _match_case(target: str, source: str) -> str:
    if source[:1].isupper():
        return target[:1].upper() + target[1:]
    return target[:1].lower() + target[1:]


def replace(s: str, j: str, j_prime: str, lexicon: Lexicon, rng) -> ReplacementResult | None:
    """Replace every occurrence of a group-j term in ``s`` by a uniformly drawn
    group-j_prime term of the same kind (falling back to the other kind when
    the matching one is empty).  Returns None when no j term occurs.

    ``rng`` needs an ``integers(low, high)`` method (numpy Generator works).
    The first letter of each emitted term is capitalized iff the matched
    source occurrence was.
    """
    if j == j_prime:
        raise LexiconError("source and target group must differ")
    source_entry = lexicon.group(j)
    target_entry = lexicon.group(j_prime)
    pattern, kind_by_term = build_matcher(source_entry.all_terms())

    pieces: list[str] = []
    replacements: list[Replacement] = []
    cursor = 0
    for match in pattern.finditer(s):
        matched = match.group(0)
        kind = kind_by_term[matched.lower()]
        pool = target_entry.terms(kind) or target_entry.terms("descriptors" if kind == "nouns" else "nouns")
        target = pool[int(rng.integers(0, len(pool)))]
        target = _match_case(target, matched)
        pieces.append(s[cursor : match.start()])
        pieces.append(target)
        cursor = match.end()
        replacements.append(Replacement(span=(match.start(), match.end()), source_term=matched, target_term=target, kind=kind))
    if not replacements:
        return None
    pieces.append(s[cursor:])
    modified = "".join(pieces)
    if modified == s:
        # every draw coincided with its source (overlapping lists); a no-op
        # result would break the modified-iff-replaced invariant
        return None
    return ReplacementResult(original=s, modified=modified, replacements=tuple(replacements))


def _child_rng(seed: int, *parts: str):
    import hashlib

    import numpy as np

    digest = hashlib.sha256((str(seed) + ":" + ":".join(parts)).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def enumerate_wr_candidates(
    store: CommentStore,
    lexicon: Lexicon,
    eligible: set[str],
    seed: int = 0,
    *,
    method: str = "word_replacement",
) -> Iterator[PairCandidate]:
    """One candidate per (comment, source group, target group) triple for
    which replacement finds something to do.  Deterministic per triple: each
    draws from its own seed-derived generator, so iteration order and store
    size never change an individual candidate."""
    n_candidates = 0
    n_skipped = 0
    for labeled in store.labeled():
        sources = sorted(labeled.groups & eligible)
        for j in sources:
            for j_prime in sorted(eligible - {j}):
                rng = _child_rng(seed, labeled.comment.id, j, j_prime)
                result = replace(labeled.comment.text, j, j_prime, lexicon, rng)
                if result is None:
                    n_skipped += 1
                    continue
                n_candidates += 1
                yield PairCandidate(
                    s=result.original,
                    s_prime=result.modified,
                    method=method,
                    source_group=j,
                    target_group=j_prime,
                    provenance={
                        "comment_id": labeled.comment.id,
                        "replacements": [
                            [r.span[0], r.span[1], r.source_term, r.target_term, r.kind] for r in result.replacements
                        ],
                    },
                )
    logger.info("word replacement: %d candidate(s), %d skipped (no marker)", n_candidates, n_skipped)
