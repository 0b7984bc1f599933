"""Corpus ingestion: CSV loading, label binarization, filtering, splitting.

Rows with missing required values or any partially filled group annotation
are dropped (the nan-free subset is what downstream stages consume); rows
whose group columns are all empty form the unannotated subset and are kept
for toxicity training only.  Binarization is strict: a fraction of exactly
0.5 maps to label 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .backends import get_tokenizer

__all__ = [
    "Comment",
    "LabeledComment",
    "CorpusConfig",
    "CommentStore",
    "MalformedRowError",
    "binarize",
    "load_corpus",
    "split",
]

BINARIZE_THRESHOLD = 0.5


class MalformedRowError(ValueError):
    """A CSV row that cannot be parsed into a valid comment."""

    def __init__(self, row_index: int, message: str):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


@dataclass(frozen=True)
class Comment:
    id: str
    text: str
    toxicity_fraction: float
    group_fractions: Mapping[str, float] | None = None
    split: str = "unassigned"

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"comment {self.id}: text is empty")
        if not 0.0 <= self.toxicity_fraction <= 1.0:
            raise ValueError(f"comment {self.id}: toxicity fraction {self.toxicity_fraction} outside [0,1]")
        for group, frac in (self.group_fractions or {}).items():
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"comment {self.id}: fraction for {group!r} outside [0,1]")

    @property
    def annotated(self) -> bool:
        return self.group_fractions is not None


@dataclass(frozen=True)
class LabeledComment:
    comment: Comment
    y: int
    groups: frozenset[str]


def binarize(comment: Comment) -> LabeledComment:
    """y = 1 iff toxicity fraction strictly exceeds 0.5; same rule per group."""
    y = int(comment.toxicity_fraction > BINARIZE_THRESHOLD)
    groups = frozenset(
        g for g, frac in (comment.group_fractions or {}).items() if frac > BINARIZE_THRESHOLD
    )
    return LabeledComment(comment=comment, y=y, groups=groups)


@dataclass
class CorpusConfig:
    max_tokens: int = 64
    train_ratio: float = 0.75
    seed: int = 0
    tokenizer: str = "whitespace"
    # Column mapping; any CSV column not mapped here is read as a group
    # fraction named by its header.
    id_column: str = "id"
    text_column: str = "text"
    toxicity_column: str = "toxicity"

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not 0.0 < self.train_ratio <= 1.0:
            raise ValueError(f"train_ratio must be in (0, 1], got {self.train_ratio}")

    @classmethod
    def with_header_mapping(cls, mapping_path: str | Path, **kwargs) -> "CorpusConfig":
        mapping = json.loads(Path(mapping_path).read_text(encoding="utf-8"))
        fields = {}
        for key in ("id_column", "text_column", "toxicity_column"):
            if key in mapping:
                fields[key] = mapping[key]
        fields.update(kwargs)
        return cls(**fields)


class CommentStore:
    """Read-only collection of comments, loadable from / dumpable to JSONL."""

    def __init__(self, comments: Iterable[Comment]):
        self.comments = list(comments)
        self.by_id = {c.id: c for c in self.comments}
        if len(self.by_id) != len(self.comments):
            raise ValueError("duplicate comment ids")

    def __len__(self) -> int:
        return len(self.comments)

    def __iter__(self) -> Iterator[Comment]:
        return iter(self.comments)

    def labeled(self) -> list[LabeledComment]:
        return [binarize(c) for c in self.comments]

    def annotated(self) -> "CommentStore":
        return CommentStore(c for c in self.comments if c.annotated)

    def groups_present(self) -> set[str]:
        present: set[str] = set()
        for lc in self.labeled():
            present |= lc.groups
        return present

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for c in self.comments:
                record = {
                    "id": c.id,
                    "text": c.text,
                    "toxicity_fraction": c.toxicity_fraction,
                    "group_fractions": dict(c.group_fractions) if c.group_fractions is not None else None,
                    "split": c.split,
                }
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "CommentStore":
        comments = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                r = json.loads(line)
                comments.append(
                    Comment(
                        id=r["id"],
                        text=r["text"],
                        toxicity_fraction=r["toxicity_fraction"],
                        group_fractions=r["group_fractions"],
                        split=r.get("split", "unassigned"),
                    )
                )
        return cls(comments)


def _parse_fraction(raw: str, row_index: int, what: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRowError(row_index, f"{what} is not a number: {raw!r}") from None
    if not 0.0 <= value <= 1.0:
        raise MalformedRowError(row_index, f"{what} {value} outside [0,1]")
    return value


def load_corpus(path: str | Path, config: CorpusConfig) -> CommentStore:
    """Load the CSV at ``path``, keeping rows that are complete and short.

    Kept rows have id, text, toxicity present, every group column either all
    present or all empty, and at most ``config.max_tokens`` tokens under the
    configured tokenizer.  Structurally bad values raise MalformedRowError
    with the offending row index.
    """
    tokenizer = get_tokenizer(config.tokenizer)
    required = (config.id_column, config.text_column, config.toxicity_column)
    comments: list[Comment] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedRowError(0, "no header row")
        for col in required:
            if col not in reader.fieldnames:
                raise MalformedRowError(0, f"missing required column {col!r}")
        group_columns = [c for c in reader.fieldnames if c not in required]
        for index, row in enumerate(reader, start=1):
            values = {k: (v or "").strip() for k, v in row.items() if k is not None}
            if any(not values.get(col) for col in required):
                continue  # incomplete row: not part of the nan-free subset
            group_values = {c: values.get(c, "") for c in group_columns}
            n_empty = sum(1 for v in group_values.values() if not v)
            if group_columns and 0 < n_empty < len(group_columns):
                continue  # partially annotated row: treated as nan-containing
            toxicity = _parse_fraction(values[config.toxicity_column], index, "toxicity fraction")
            if group_columns and n_empty == 0:
                fractions = {
                    c: _parse_fraction(group_values[c], index, f"group fraction {c!r}") for c in group_columns
                }
            else:
                fractions = None
            text = values[config.text_column]
            if len(tokenizer.tokenize(text)) > config.max_tokens:
                continue
            comments.append(
                Comment(
                    id=values[config.id_column],
                    text=text,
                    toxicity_fraction=toxicity,
                    group_fractions=fractions,
                )
            )
    return CommentStore(comments)


def split(store: CommentStore, config: CorpusConfig) -> tuple[CommentStore, CommentStore]:
    """Uniform random split; train gets round(train_ratio * N) comments."""
    import numpy as np

    if len(store) == 0:
        raise ValueError("cannot split an empty store")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(store))
    n_train = int(round(config.train_ratio * len(store)))
    train_idx = set(order[:n_train].tolist())
    train = [replace(store.comments[i], split="train") for i in sorted(train_idx)]
    test = [replace(store.comments[i], split="test") for i in range(len(store)) if i not in train_idx]
    return CommentStore(train), CommentStore(test)
