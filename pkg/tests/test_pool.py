from __future__ import annotations

import numpy as np
import pytest

from fairpairs.corpus import Comment, CommentStore
from fairpairs.pool import (
    ConstraintPool,
    PairCandidate,
    PoolShortfallError,
    assemble,
    filter_pool,
    load_candidates,
    load_pool,
    make_adverse,
    make_test_pool,
    pair_id,
    save_candidates,
    save_pool,
)


def make_candidates(method, n, start=0, passed=True):
    return [
        PairCandidate(s=f"{method} source {start + i}", s_prime=f"{method} target {start + i}", method=method, filter_passed=passed)
        for i in range(n)
    ]


def test_pair_id_is_content_hash():
    a = PairCandidate(s="x", s_prime="y", method="word_replacement")
    b = PairCandidate(s="x", s_prime="y", method="word_replacement", provenance={"extra": 1})
    assert a.id == b.id == pair_id("x", "y", "word_replacement")
    c = PairCandidate(s="x", s_prime="y", method="gpt_edit")
    assert c.id != a.id


def test_identical_sides_rejected():
    with pytest.raises(ValueError):
        PairCandidate(s="x", s_prime="x", method="word_replacement")
    # the explicit training placeholder is the one sanctioned exception
    PairCandidate(s="x", s_prime="x", method="identity_placeholder")


def test_assemble_composition():
    pool = assemble(
        make_candidates("word_replacement", 30),
        make_candidates("style_transfer", 30),
        make_candidates("gpt_zero_shot", 10) + make_candidates("gpt_edit", 10) + make_candidates("gpt_postprocess", 10),
        sizes={"wr": 20, "st": 15, "llm": 12},
        seed=0,
    )
    composition = pool.composition
    assert composition["word_replacement"] == 20
    assert composition["style_transfer"] == 15
    assert sum(composition.get(m, 0) for m in ("gpt_zero_shot", "gpt_edit", "gpt_postprocess")) == 12
    # llm quota follows the reference mode ratios (6200/3500/5300 of 15000)
    assert composition["gpt_zero_shot"] == 5
    assert composition["gpt_edit"] == 3
    assert composition["gpt_postprocess"] == 4
    assert len(pool) == 47


def test_assemble_default_sizes_reference_composition():
    # reference-scale pool: 42500 + 42500 + 15000 = 100000 with the llm
    # bucket split 6200 / 3500 / 5300 across the three modes
    pool = assemble(
        make_candidates("word_replacement", 43000),
        make_candidates("style_transfer", 43000),
        make_candidates("gpt_zero_shot", 6300) + make_candidates("gpt_edit", 3600) + make_candidates("gpt_postprocess", 5400),
        seed=0,
    )
    assert len(pool) == 100_000
    composition = pool.composition
    assert composition["word_replacement"] == 42500
    assert composition["style_transfer"] == 42500
    assert composition["gpt_zero_shot"] == 6200
    assert composition["gpt_edit"] == 3500
    assert composition["gpt_postprocess"] == 5300


def test_assemble_singletons():
    pool = assemble(
        make_candidates("word_replacement", 1),
        make_candidates("style_transfer", 1),
        make_candidates("gpt_edit", 1),
        sizes={"wr": 1, "st": 1, "llm": 1},
    )
    assert len(pool) == 3


def test_assemble_shortfall_message():
    with pytest.raises(PoolShortfallError, match="shortfall wr: 10 < 20"):
        assemble(make_candidates("word_replacement", 10), [], [], sizes={"wr": 20, "st": 0, "llm": 0})


def test_assemble_ignores_filter_failures():
    wr = make_candidates("word_replacement", 5) + make_candidates("word_replacement", 5, start=100, passed=False)
    pool = assemble(wr, [], [], sizes={"wr": 5, "st": 0, "llm": 0})
    assert all(c.filter_passed for c in pool)


def test_assemble_reproducible(tmp_path):
    sources = (
        make_candidates("word_replacement", 40),
        make_candidates("style_transfer", 40),
        make_candidates("gpt_zero_shot", 20),
    )
    a = assemble(*sources, sizes={"wr": 10, "st": 10, "llm": 5}, seed=7)
    b = assemble(*sources, sizes={"wr": 10, "st": 10, "llm": 5}, seed=7)
    save_pool(a, tmp_path / "a")
    save_pool(b, tmp_path / "b")
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    assert (tmp_path / "a" / "pairs.jsonl").read_bytes() == (tmp_path / "b" / "pairs.jsonl").read_bytes()


def test_pool_round_trip_byte_identical(tmp_path):
    pool = assemble(
        make_candidates("word_replacement", 8),
        make_candidates("style_transfer", 8),
        [],
        sizes={"wr": 4, "st": 4, "llm": 0},
        seed=3,
    )
    save_pool(pool, tmp_path / "p1")
    again = load_pool(tmp_path / "p1")
    save_pool(again, tmp_path / "p2")
    assert (tmp_path / "p1" / "pairs.jsonl").read_bytes() == (tmp_path / "p2" / "pairs.jsonl").read_bytes()
    assert (tmp_path / "p1" / "manifest.json").read_bytes() == (tmp_path / "p2" / "manifest.json").read_bytes()


def test_candidate_jsonl_round_trip(tmp_path):
    candidates = make_candidates("word_replacement", 5)
    save_candidates(candidates, tmp_path / "c.jsonl")
    assert load_candidates(tmp_path / "c.jsonl") == candidates


def full_pool():
    return assemble(
        make_candidates("word_replacement", 50),
        make_candidates("style_transfer", 50),
        make_candidates("gpt_zero_shot", 10) + make_candidates("gpt_edit", 6) + make_candidates("gpt_postprocess", 8),
        sizes={"wr": 34, "st": 34, "llm": 12},
        seed=1,
    )


def test_make_test_pool_scales_composition():
    pool = full_pool()
    test = make_test_pool(
        pool,
        make_candidates("word_replacement", 40, start=500),
        make_candidates("style_transfer", 40, start=500),
        make_candidates("gpt_zero_shot", 10, start=500) + make_candidates("gpt_edit", 10, start=500) + make_candidates("gpt_postprocess", 10, start=500),
        fraction=0.25,
        seed=2,
    )
    assert len(test) == int(0.25 * len(pool))
    assert test.split == "test"
    # ratio preservation: wr share stays 34/80
    assert test.composition["word_replacement"] == round(0.25 * 34) == 8 or test.composition["word_replacement"] in (8, 9)


def test_make_test_pool_floor_total():
    pool = assemble(
        make_candidates("word_replacement", 2),
        make_candidates("style_transfer", 1),
        make_candidates("gpt_zero_shot", 1),
        sizes={"wr": 2, "st": 1, "llm": 1},
    )
    test = make_test_pool(pool, make_candidates("word_replacement", 3, start=9), [], [], fraction=0.25)
    assert len(test) == 1  # floor(0.25 * 4)
    assert test.composition == {"word_replacement": 1}


def toxic_store():
    comments = []
    for i in range(10):
        comments.append(Comment(id=f"t{i}", text=f"toxic comment {i}", toxicity_fraction=0.9))
        comments.append(Comment(id=f"b{i}", text=f"benign comment {i}", toxicity_fraction=0.1))
    return CommentStore(comments)


def test_make_adverse_label_contrast():
    pool = full_pool()
    store = toxic_store()
    labeled = {lc.comment.text: lc.y for lc in store.labeled()}
    adverse = make_adverse(pool, store, n=25, seed=0)
    added = [c for c in adverse if c.method == "adverse"]
    assert len(added) == 25
    for cand in added:
        assert labeled[cand.s] == 1
        assert labeled[cand.s_prime] == 0
        assert cand.filter_passed


def test_make_adverse_zero_is_identity():
    pool = full_pool()
    adverse = make_adverse(pool, toxic_store(), n=0)
    assert adverse.members == pool.members


def test_make_adverse_size():
    pool = full_pool()
    adverse = make_adverse(pool, toxic_store(), n=15, seed=4)
    assert len(adverse) == len(pool) + 15


def test_make_adverse_needs_both_labels():
    pool = full_pool()
    only_toxic = CommentStore([Comment(id="x", text="bad", toxicity_fraction=0.9)])
    with pytest.raises(ValueError):
        make_adverse(pool, only_toxic, n=5)


def test_filter_pool_threshold_semantics():
    pool = ConstraintPool("p", make_candidates("word_replacement", 2))
    ids = pool.members
    predictions = {ids[0]: 0.4, ids[1]: 0.6}
    kept = filter_pool(pool, predictions, 0.5)
    assert kept.members == [ids[0]]
    assert kept.notes["retention_percent"] == pytest.approx(50.0)


def test_filter_pool_t1_keeps_all():
    pool = ConstraintPool("p", make_candidates("word_replacement", 4))
    predictions = {pid: 1.0 for pid in pool.members}
    assert len(filter_pool(pool, predictions, 1.0)) == 4


def test_filter_pool_missing_prediction():
    pool = ConstraintPool("p", make_candidates("word_replacement", 2))
    with pytest.raises(KeyError):
        filter_pool(pool, {}, 0.5)


def test_filter_pool_monotone_in_threshold():
    rng = np.random.default_rng(0)
    pool = ConstraintPool("p", make_candidates("word_replacement", 200))
    predictions = {pid: float(rng.random()) for pid in pool.members}
    previous = None
    for threshold in (0.1, 0.3, 0.5, 0.7, 0.9):
        kept = set(filter_pool(pool, predictions, threshold).members)
        if previous is not None:
            assert previous <= kept
        previous = kept
