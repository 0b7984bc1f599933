from __future__ import annotations

import itertools

import pytest

from fairpairs.backends import StubClassifierBackend
from fairpairs.groups import EligibilityPolicy, GroupPresenceClassifier, apply_transfer_filter
from fairpairs.pool import PairCandidate
from tests.conftest import make_group_store

# Balanced accuracies reported for the reference group classifier; used here
# as an eligibility fixture.
REFERENCE_EVAL_REPORT = {
    "Male": 96.5,
    "Female": 97.8,
    "Transgender": 99.3,
    "Other gender": 50.0,
    "Heterosexual": 98.1,
    "Homosexual": 99.3,
    "Bisexual": 65.4,
    "Other sexuality": 50.0,
    "Christian": 96.6,
    "Jewish": 98.9,
    "Muslim": 98.9,
    "Hindu": 98.2,
    "Buddhist": 99.2,
    "Atheist": 99.6,
    "Other religion": 50.0,
    "Other disability": 50.0,
    "Physical disability": 54.9,
    "Intellectual disability": 54.3,
    "Mental illness": 98.3,
    "Black": 99.2,
    "White": 99.5,
    "Asian": 98.3,
    "Latino": 96.6,
    "Other race": 55.5,
}


def reference_classifier():
    gc = GroupPresenceClassifier(StubClassifierBackend(heads=list(REFERENCE_EVAL_REPORT)))
    gc.groups = list(REFERENCE_EVAL_REPORT)
    gc.eval_report = dict(REFERENCE_EVAL_REPORT)
    return gc


def test_fit_trains_one_head_per_present_group(group_store):
    gc = GroupPresenceClassifier().fit(group_store)
    assert set(gc.groups) == {"Female", "Male", "Muslim"}
    assert float(gc.predict_proba(["the woman said something about topic0"], "Female")[0]) > 0.5


def test_fit_omits_absent_groups(group_store):
    # group columns exist but "Muslim" never crosses 0.5 in this store
    from fairpairs.corpus import Comment, CommentStore

    comments = [
        Comment(id=f"x{i}", text=f"the {'woman' if i % 2 else 'man'} spoke", toxicity_fraction=0.1,
                group_fractions={"Female": 1.0 if i % 2 else 0.0, "Male": 0.0 if i % 2 else 1.0, "Muslim": 0.0})
        for i in range(10)
    ]
    gc = GroupPresenceClassifier(seed=3).fit(CommentStore(comments))
    assert "Muslim" not in gc.groups


def test_eval_report_in_range(group_store):
    gc = GroupPresenceClassifier().fit(group_store)
    assert gc.eval_report
    assert all(0.0 <= ba <= 100.0 for ba in gc.eval_report.values())


def test_reference_eligibility():
    gc = reference_classifier()
    eligible = gc.eligible_groups(EligibilityPolicy())
    assert "Male" in eligible  # 96.5 > 90
    assert "Other gender" not in eligible  # 50.0
    assert "Bisexual" not in eligible  # 65.4
    assert "Mental illness" not in eligible  # excluded by policy despite 98.3
    assert eligible == {
        "Male", "Female", "Transgender", "Heterosexual", "Homosexual",
        "Christian", "Jewish", "Muslim", "Hindu", "Buddhist", "Atheist",
        "Black", "White", "Asian", "Latino",
    }


def test_threshold_100_leaves_nothing():
    gc = reference_classifier()
    assert gc.eligible_groups(EligibilityPolicy(ba_threshold=100.0)) == set()


def test_eligibility_monotone_in_threshold():
    gc = reference_classifier()
    previous = None
    for threshold in (60.0, 75.0, 90.0, 99.0):
        eligible = gc.eligible_groups(EligibilityPolicy(ba_threshold=threshold))
        if previous is not None:
            assert eligible <= previous
        previous = eligible


def test_policy_threshold_range():
    with pytest.raises(ValueError):
        EligibilityPolicy(ba_threshold=50.0)
    with pytest.raises(ValueError):
        EligibilityPolicy(ba_threshold=101.0)


def probe_classifier(p_source, p_target):
    """Stub classifier whose two heads output the given probabilities for any
    input (weights empty; bias chosen via logit)."""
    import math

    def logit(p):
        return math.log(p / (1 - p))

    gc = GroupPresenceClassifier(
        StubClassifierBackend(heads=["J", "K"], biases={"J": logit(p_source), "K": logit(p_target)})
    )
    gc.groups = ["J", "K"]
    gc.eval_report = {"J": 99.0, "K": 99.0}
    return gc


def test_transfer_success_clear_case():
    assert probe_classifier(0.1, 0.9).transfer_success("text", "J", "K") is True


def test_transfer_failure_source_still_present():
    assert probe_classifier(0.9, 0.9).transfer_success("text", "J", "K") is False


def test_transfer_truth_table_matches_oracle():
    # oracle over the four threshold regions: success iff target above AND source below
    for p_source, p_target in itertools.product((0.4, 0.5, 0.6), repeat=2):
        expected = (p_target > 0.5) and (p_source < 0.5)
        got = probe_classifier(p_source, p_target).transfer_success("text", "J", "K")
        assert got == expected, (p_source, p_target)


def test_transfer_strict_inequality_on_target():
    assert probe_classifier(0.4, 0.5).transfer_success("text", "J", "K") is False


def test_transfer_literal_orientation_swaps_inequalities():
    gc = probe_classifier(0.9, 0.1)
    assert gc.transfer_success("text", "J", "K") is False
    assert gc.transfer_success("text", "J", "K", orientation="literal") is True


def test_transfer_success_antisymmetric():
    for p_source, p_target in itertools.product((0.2, 0.5, 0.8), repeat=2):
        gc = probe_classifier(p_source, p_target)
        assert not (gc.transfer_success("t", "J", "K") and gc.transfer_success("t", "K", "J"))


def test_transfer_unknown_group():
    with pytest.raises(KeyError):
        probe_classifier(0.5, 0.5).transfer_success("text", "J", "Nope")


def test_apply_transfer_filter_stamps_verdicts():
    gc = probe_classifier(0.1, 0.9)
    cands = [PairCandidate(s="a", s_prime="b", method="word_replacement", source_group="J", target_group="K")]
    out = apply_transfer_filter(cands, gc)
    assert out[0].filter_passed is True
    assert out[0].id == cands[0].id  # identity unchanged by the stamp


def test_eval_report_table_layout():
    table = reference_classifier().eval_report_table()
    lines = table.splitlines()
    assert lines[0].split() == ["Group", "BA"]
    assert any(line.startswith("Male") and line.endswith("96.5") for line in lines)


def test_save_load_round_trip(tmp_path, group_store):
    gc = GroupPresenceClassifier().fit(group_store)
    gc.save(tmp_path / "gc")
    again = GroupPresenceClassifier.load(tmp_path / "gc")
    assert again.groups == gc.groups
    assert again.eval_report == gc.eval_report
    text = ["the woman said something about topic1"]
    assert float(again.predict_proba(text, "Female")[0]) == float(gc.predict_proba(text, "Female")[0])
