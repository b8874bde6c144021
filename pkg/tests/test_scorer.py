import json
import random
import warnings
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambicoref.corpus import Gender
from ambicoref.scorer import (
    ClusterMode,
    Confusion,
    CoverageWarning,
    Difficulty,
    PronounClusterItem,
    bias,
    bucket,
    confusion_from_pairs,
    difficulty_buckets,
    f1,
    last_word_head,
    pair_verdicts,
    round_half_even,
    score,
    score_clusters,
)

from scoring_oracle import naive_f1, naive_tally, random_set

SWAP = {"he": "she", "him": "her", "his": "hers", "she": "he", "her": "him", "hers": "his"}


def test_f1_examples():
    assert f1(Confusion(0, 3, 4))[2] == 0
    p, r, f = f1(Confusion(2, 1, 2))
    assert (round(p, 4), r, round(f, 4)) == (0.6667, 0.5, 0.5714)
    assert f1(Confusion(5, 0, 0))[2] == 1


def test_bias_examples():
    assert round_half_even(bias(67.1, 63.1), 2) == 0.94
    assert bias(40.0, 40.0) == 1.0
    assert bias(50, 25) == 0.5
    assert bias(0, 10) is None


def test_round_half_even():
    assert round_half_even(0.125, 2) == 0.12
    assert round_half_even(0.135, 2) == 0.14
    assert round_half_even(66.25, 1) == 66.2


@given(st.integers(0, 10**6), st.integers(1, 150))
@settings(max_examples=100, deadline=None)
def test_matches_naive_tally(seed, size):
    gold, preds = random_set(random.Random(seed), size)
    got = confusion_from_pairs(gold, preds)
    want = naive_tally(gold, preds)
    for g, key in ((Gender.MASCULINE, "M"), (Gender.FEMININE, "F")):
        assert [got[g].tp, got[g].fp, got[g].fn] == want[key]
        assert abs(f1(got[g])[2] - naive_f1(*want[key])) < 1e-12


@given(st.integers(0, 10**6), st.integers(1, 80))
@settings(max_examples=50, deadline=None)
def test_recall_denominator_is_gold_true_pairs(seed, size):
    gold, preds = random_set(random.Random(seed), size)
    conf = confusion_from_pairs(gold, preds)
    total = sum(conf.values(), Confusion())
    assert total.tp + total.fn == sum(ex.a_coref + ex.b_coref for ex in gold)
    rep = score(gold, preds)
    assert rep.confusion["O"] == conf[Gender.MASCULINE] + conf[Gender.FEMININE]


@given(st.integers(0, 10**6), st.integers(2, 80))
@settings(max_examples=50, deadline=None)
def test_gender_swap_symmetry(seed, size):
    gold, preds = random_set(random.Random(seed), size)
    swapped = [replace(ex, pronoun=SWAP[ex.pronoun],
                       text=ex.text.replace(f" {ex.pronoun} ", f" {SWAP[ex.pronoun]} ")) for ex in gold]
    a, b = score(gold, preds), score(swapped, preds)
    assert a.masculine == b.feminine and a.feminine == b.masculine
    if a.masculine[2] > 0 and a.feminine[2] > 0:
        assert abs(a.bias * b.bias - 1) < 1e-12


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_f1_monotone_in_tp(tp, fp, fn):
    assert f1(Confusion(tp + 1, fp, fn))[2] >= f1(Confusion(tp, fp, fn))[2]


def test_missing_prediction_warns():
    gold, preds = random_set(random.Random(1), 10)
    preds.pop("x3")
    with pytest.warns(CoverageWarning):
        conf = confusion_from_pairs(gold, preds)
    full = dict(preds, x3=(False, False))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert conf == confusion_from_pairs(gold, full)


def test_unknown_prediction_id():
    gold, preds = random_set(random.Random(1), 3)
    with pytest.raises(KeyError):
        confusion_from_pairs(gold, dict(preds, zzz=(True, False)))


def test_report_formats():
    gold, _ = random_set(random.Random(2), 20)
    perfect = {ex.id: (ex.a_coref, ex.b_coref) for ex in gold}
    rep = score(gold, perfect)
    lines = rep.to_tsv().decode().splitlines()
    assert lines[0] == "\tP\tR\tF1"
    assert lines[3].split("\t")[0] == "O" and lines[3].endswith("100.0")
    obj = json.loads(rep.to_json())
    assert obj["O"]["f1"] == 100.0 and obj["B"] == 1.0


# --------------------------------------------------------------------------
# Cluster scoring
# --------------------------------------------------------------------------

def gap_example(a_coref=True, b_coref=False):
    from ambicoref.ingestion import ExampleRecord

    text = "Emi Tanaka met Yuki Sato before she left"
    return ExampleRecord("g", text, "she", text.index("she"), "Emi Tanaka", 0, a_coref,
                         "Yuki Sato", text.index("Yuki"), b_coref, "")


def test_last_word_head():
    assert last_word_head("Yuki Sato's farm", (0, 9)) == (5, 9)
    assert last_word_head("Tanaka", (0, 6)) == (0, 6)


def test_gap_align_correct_name():
    ex = gap_example()
    fuji = (ex.text.index("Tanaka"), ex.text.index("Tanaka") + 6)
    conf = score_clusters({"g": [[ex.pronoun_span, fuji]]}, [ex], ClusterMode.GAP_ALIGN)
    assert conf[Gender.FEMININE] == Confusion(tp=1)


def test_gap_align_unclustered_pronoun():
    ex = gap_example()
    conf = score_clusters({"g": [[ex.pronoun_span]]}, [ex])
    assert conf[Gender.FEMININE] == Confusion(fn=1)
    conf = score_clusters({}, [ex])
    assert conf[Gender.FEMININE] == Confusion(fn=1)


def test_gap_align_wrong_name():
    ex = gap_example()
    conf = score_clusters({"g": [[ex.pronoun_span, ex.b_span]]}, [ex])
    assert conf[Gender.FEMININE] == Confusion(fp=1, fn=1)


def test_pronoun_in_two_clusters_is_error():
    ex = gap_example()
    with pytest.raises(ValueError):
        score_clusters({"g": [[ex.pronoun_span], [ex.pronoun_span, ex.a_span]]}, [ex])


def test_ontonotes_pair_rules():
    item = PronounClusterItem(Gender.MASCULINE, (50, 52), frozenset({(0, 5)}), frozenset({(10, 15)}))
    both = score_clusters([[(50, 52), (0, 5), (10, 15)]], [item], ClusterMode.ONTONOTES_PAIR)
    assert both[Gender.MASCULINE] == Confusion(tp=1, fp=1)
    wrong = score_clusters([[(50, 52), (10, 15)]], [item], ClusterMode.ONTONOTES_PAIR)
    assert wrong[Gender.MASCULINE] == Confusion(fp=1, fn=1)
    alone = score_clusters([], [item], ClusterMode.ONTONOTES_PAIR)
    assert alone[Gender.MASCULINE] == Confusion(fn=1)


# --------------------------------------------------------------------------
# Difficulty
# --------------------------------------------------------------------------

def test_buckets():
    assert bucket(4) == Difficulty.GREEN
    assert bucket(0) == Difficulty.RED
    assert all(bucket(k) == Difficulty.YELLOW for k in (1, 2, 3))
    with pytest.raises(ValueError):
        bucket(5)
    with pytest.raises(ValueError):
        difficulty_buckets([(True, True)])


def test_pair_verdicts_scoring_rule():
    from ambicoref.ingestion import ExampleRecord

    text = "Ann met Bea and she left"
    pos = ExampleRecord("p", text, "she", 16, "Ann", 0, True, "Bea", 8, False)
    neither = ExampleRecord("n", text, "she", 16, "Ann", 0, False, "Bea", 8, False)
    systems = [{"p": (True, False), "n": (False, False)}, {"p": (False, True), "n": (True, False)},
               {"p": (True, True), "n": (False, True)}, {}]
    v = pair_verdicts([pos, neither], systems)
    # one row for the positive pair, two for Neither
    assert v == [(True, False, True, False), (True, False, True, True), (True, True, False, True)]
    assert difficulty_buckets(v)["levels"] == {0: 0, 1: 0, 2: 1, 3: 2, 4: 0}
