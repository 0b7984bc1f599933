from __future__ import annotations

import numpy as np
import pytest

from fairpairs.backends import StubClassifierBackend
from fairpairs.corpus import Comment, CommentStore
from fairpairs.groups import GroupPresenceClassifier
from fairpairs.lexicon import packaged_lexicon


class FixedIndexRng:
    """Deterministic stand-in for a numpy Generator: integers() returns the
    next value from a fixed sequence (repeating the last one)."""

    def __init__(self, *indices: int):
        self.indices = list(indices) or [0]
        self.cursor = 0

    def integers(self, low, high=None):
        value = self.indices[min(self.cursor, len(self.indices) - 1)]
        self.cursor += 1
        return value


@pytest.fixture
def fixed_rng():
    return FixedIndexRng


@pytest.fixture(scope="session")
def lexicon():
    return packaged_lexicon()


@pytest.fixture
def keyword_backend():
    """Hand-weighted two-head stub: 'woman'/'women' mark Female, 'man'/'men'
    mark Male; context words carry no weight."""
    return StubClassifierBackend(
        heads=["Female", "Male"],
        weights={
            "Female": {"woman": 2.0, "women": 2.0, "man": -1.0, "men": -1.0},
            "Male": {"man": 2.0, "men": 2.0, "woman": -1.0, "women": -1.0},
        },
    )


@pytest.fixture
def keyword_gc(keyword_backend):
    gc = GroupPresenceClassifier(keyword_backend)
    gc.groups = ["Female", "Male"]
    gc.eval_report = {"Female": 97.8, "Male": 96.5}
    return gc


def make_group_store(n_per_group: int = 12, seed: int = 0) -> CommentStore:
    """Toy annotated corpus where each group has its marker word plus shared
    context words appearing in every comment."""
    rng = np.random.default_rng(seed)
    comments = []
    uid = 0
    for group, marker in (("Female", "woman"), ("Male", "man"), ("Muslim", "imam")):
        for _ in range(n_per_group):
            toxic = float(rng.random() < 0.4)
            text = f"the {marker} said something about topic{rng.integers(4)}"
            fractions = {"Female": 0.0, "Male": 0.0, "Muslim": 0.0}
            fractions[group] = 1.0
            comments.append(
                Comment(id=f"c{uid}", text=text, toxicity_fraction=0.9 if toxic else 0.1, group_fractions=fractions)
            )
            uid += 1
    for _ in range(n_per_group):
        comments.append(
            Comment(
                id=f"c{uid}",
                text=f"plain talk about topic{rng.integers(4)}",
                toxicity_fraction=0.1,
                group_fractions={"Female": 0.0, "Male": 0.0, "Muslim": 0.0},
            )
        )
        uid += 1
    return CommentStore(comments)


@pytest.fixture
def group_store():
    return make_group_store()
