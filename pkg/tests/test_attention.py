import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambicoref.attention import (
    AttentionError,
    AttentionRecord,
    HeadId,
    TrainingSet,
    all_heads,
    chi2_scores,
    chi2_select,
    dump_attention,
    fit_forest,
    fit_multi,
    head_features,
    load_attention,
    per_head_selections,
    resolve_multi,
    resolve_single_head,
    span_attention,
)
from ambicoref.extraction import name_mentions, pronoun_mentions

from builders import doc

H00 = HeadId(0, 0)


def record(subtokens, entries, layers=1, heads=1, rid="r"):
    """Tensor with the given (query, key) -> weight entries on head (0, 0);
    each row's remaining mass sits on a key not named in ``entries``."""
    n = len(subtokens)
    w = np.zeros((layers, heads, n, n))
    for l in range(layers):
        for h in range(heads):
            w[l, h] = np.eye(n)
    used_cols = {j for _, j in entries}
    for i in {i for i, _ in entries}:
        w[0, 0, i] = 0
        for (qi, kj), v in entries.items():
            if qi == i:
                w[0, 0, i, kj] = v
        spare = next(j for j in range(n) if j not in used_cols)
        w[0, 0, i, spare] += 1 - w[0, 0, i].sum()
    offsets, pos = [], 0
    for s in subtokens:
        offsets.append((pos, pos + len(s)))
        pos += len(s) + 1
    return AttentionRecord(rid, subtokens, offsets, w, layers, heads)


def span(rec, i, j=None):
    j = i if j is None else j
    return (rec.offsets[i][0], rec.offsets[j][1])


def test_single_occurrence():
    rec = record(["x", "Ann", "she"], {(1, 2): 0.6})
    assert abs(span_attention(rec, H00, span(rec, 1), span(rec, 2)) - 0.6) < 1e-9


def test_repeated_subtoken_sums():
    rec = record(["Ann", "x", "Ann", "she", "y"], {(0, 3): 0.2, (2, 3): 0.3})
    assert abs(span_attention(rec, H00, span(rec, 0), span(rec, 3)) - 0.5) < 1e-9


def test_multi_subtoken_mean():
    rec = record(["Yuki", "moto", "x", "she"], {(0, 3): 0.5, (1, 3): 0.3})
    assert abs(span_attention(rec, H00, span(rec, 0, 1), span(rec, 3)) - 0.4) < 1e-9


def random_record(rng, n, layers=2, heads=3, unique=True, rid="r"):
    w = rng.random((layers, heads, n, n))
    w /= w.sum(axis=-1, keepdims=True)
    subs = [f"t{i}" for i in range(n)] if unique else [f"t{rng.integers(3)}" for _ in range(n)]
    offs = [(3 * i, 3 * i + 2) for i in range(n)]
    return AttentionRecord(rid, subs, offs, w, layers, heads)


def naive_unique(rec, head, names, prons):
    w = rec.weights[head.layer, head.head]
    return float(np.mean([w[i, j] for i in names for j in prons]))


def naive_occurrences(rec, head, names, prons):
    """Explicit quadruple loop over positions and occurrences."""
    w = rec.weights[head.layer, head.head]
    total = 0.0
    for i in names:
        for j in prons:
            for a, sa in enumerate(rec.subtokens):
                for b, sb in enumerate(rec.subtokens):
                    if sa == rec.subtokens[i] and sb == rec.subtokens[j]:
                        total += w[a, b]
    return total / (len(names) * len(prons))


@given(st.integers(0, 2**31), st.integers(3, 9), st.booleans())
@settings(max_examples=60, deadline=None)
def test_span_attention_oracles(seed, n, unique):
    rng = np.random.default_rng(seed)
    rec = random_record(rng, n, unique=unique)
    a = int(rng.integers(0, n - 1))
    b = int(rng.integers(a, n - 1))
    p = int(rng.integers(b + 1, n))
    head = HeadId(int(rng.integers(2)), int(rng.integers(3)))
    got = span_attention(rec, head, (rec.offsets[a][0], rec.offsets[b][1]), rec.offsets[p])
    names = list(range(a, b + 1))
    if unique:
        assert abs(got - naive_unique(rec, head, names, [p])) < 1e-12
    assert abs(got - naive_occurrences(rec, head, names, [p])) < 1e-12


def test_validation_errors():
    with pytest.raises(AttentionError):
        AttentionRecord("r", ["a", "b"], [(0, 1), (2, 3)], np.full((1, 1, 2, 2), 0.4), 1, 1)
    with pytest.raises(AttentionError):
        AttentionRecord("r", ["a", "b"], [(0, 1), (2, 3)], np.full((1, 1, 3, 3), 1 / 3), 1, 1)
    with pytest.raises(AttentionError):
        AttentionRecord("r", ["a", "b"], [(0, 1)], np.full((1, 1, 2, 2), 0.5), 1, 1)
    rec = record(["a", "b", "c"], {})
    with pytest.raises(AttentionError):
        span_attention(rec, H00, (40, 50), (0, 1))


def test_load_round_trip_6x8():
    rng = np.random.default_rng(0)
    recs = [random_record(rng, 5, 6, 8, rid="a"), random_record(rng, 2, 6, 8, rid="b")]
    back = load_attention(dump_attention(recs))
    assert [r.id for r in back] == ["a", "b"]
    assert back[0].weights.shape == (6, 8, 5, 5)
    assert np.array_equal(back[0].weights, recs[0].weights)
    minimal = {"id": "m", "subtokens": ["a", "b"], "offsets": [[0, 1], [2, 3]],
               "layers": 1, "heads": 1, "weights": [[[[0.5, 0.5], [1.0, 0.0]]]]}
    assert load_attention(json.dumps(minimal))[0].subtokens == ["a", "b"]
    minimal["weights"] = [[[[0.5, 0.3], [1.0, 0.0]]]]
    with pytest.raises(AttentionError, match="line 1"):
        load_attention(json.dumps(minimal))


def test_head_ids():
    assert HeadId.parse("L3H7") == HeadId(3, 7)
    assert str(HeadId(3, 7)) == "L3H7"
    assert len(all_heads()) == 48
    assert all_heads()[9] == HeadId(1, 1)
    with pytest.raises(ValueError):
        HeadId.parse("X1")


# --------------------------------------------------------------------------
# Single-head resolution on a real document
# --------------------------------------------------------------------------

SENT = ["Ann PROPN 4 nsubj B-PERSON", "and CCONJ 3 cc", "Bea PROPN 1 conj B-PERSON",
        "met VERB 0 root", "Cy PROPN 4 obj B-PERSON", "before SCONJ 8 mark", "she PRON 8 nsubj",
        "left VERB 4 advcl"]


def doc_record(d, entries, layers=1, heads=1):
    toks = list(d.tokens())
    rec = record([t.text for t in toks], entries, layers, heads)
    rec.offsets = [(t.char_start, t.char_end) for t in toks]
    return rec


def test_resolve_single_head_fixture():
    d = doc([SENT])
    names = sorted(name_mentions(d), key=lambda m: m.char_start)
    (p,) = pronoun_mentions(d)
    rec = doc_record(d, {(0, 6): 0.25, (2, 6): 0.4, (4, 6): 0.1})
    assert resolve_single_head(rec, H00, names, p).selected.text == "Bea"
    rec = doc_record(d, {(0, 6): 0.3, (2, 6): 0.3, (4, 6): 0.3})
    assert resolve_single_head(rec, H00, names[::-1], p).selected.text == "Ann"
    assert resolve_single_head(rec, H00, [], p).selected is None


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_single_head_scale_invariance(seed):
    d = doc([SENT])
    names = name_mentions(d)
    (p,) = pronoun_mentions(d)
    rng = np.random.default_rng(seed)
    rec = random_record(rng, 8, 2, 2)
    rec.subtokens = [t.text for t in d.tokens()]
    rec.offsets = [(t.char_start, t.char_end) for t in d.tokens()]
    scaled = AttentionRecord(rec.id, rec.subtokens, rec.offsets, rec.weights, 2, 2)
    c = float(rng.uniform(0.1, 10))
    scaled.weights = rec.weights * c  # bypasses the row-sum check on purpose
    for h in all_heads(2, 2):
        assert resolve_single_head(rec, h, names, p).selected == \
            resolve_single_head(scaled, h, names, p).selected


def test_head_features():
    sel = ["Yuki", "Emi Tanaka", None, "Yuki Sato"]
    assert head_features(sel, "Yuki Sato").tolist() == [True, False, False, True]


# --------------------------------------------------------------------------
# Chi-squared and forest
# --------------------------------------------------------------------------

def chi2_oracle(x, y):
    """Sum of (O - E)^2 / E over the four cells, in exact rationals."""
    n = len(y)
    total = Fraction(0)
    for xv in (True, False):
        for yv in (True, False):
            obs = sum(1 for a, b in zip(x, y) if a == xv and b == yv)
            row = sum(1 for a in x if a == xv)
            col = sum(1 for b in y if b == yv)
            if row == 0 or col == 0:
                return Fraction(0)
            exp = Fraction(row * col, n)
            total += (obs - exp) ** 2 / exp
    return total


@given(st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_chi2_matches_cell_formula(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((30, 6)) < rng.random(6)
    y = rng.random(30) < 0.5
    got = chi2_scores(X, y)
    assert got == [chi2_oracle(list(X[:, f]), list(y)) for f in range(6)]


def test_chi2_examples():
    y = np.array([1, 0, 1, 0, 1, 1], dtype=bool)
    X = np.stack([np.ones(6, bool), y, y, ~y], axis=1)
    assert chi2_select(X, y, 1) == [1]
    assert chi2_select(X, y, 3) == [1, 2, 3]
    assert sorted(chi2_select(X, y, 4)) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        chi2_select(X, y, 0)
    with pytest.raises(ValueError):
        chi2_select(X, y, 5)


@given(st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_chi2_row_shuffle_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((25, 8)) < 0.5
    y = rng.random(25) < 0.5
    perm = rng.permutation(25)
    assert chi2_select(X, y, 3) == chi2_select(X[perm], y[perm], 3)


def test_forest_identity_target():
    X = np.array([[(i >> b) & 1 for b in range(6)] for i in range(64)], dtype=bool)
    y = X[:, 0]
    m = fit_forest(X, y, n_trees=25, seed=3)
    assert (m.predict(X) == y).all()


def test_forest_uses_only_selected():
    rng = np.random.default_rng(1)
    X = rng.random((80, 10)) < 0.5
    y = X[:, 2] ^ X[:, 7]
    m = fit_forest(X, y, n_trees=30, seed=0, selected=[2, 7])
    assert m.used_features() <= {2, 7}
    assert (m.predict(X) == y).all()


def test_forest_constant_and_deterministic():
    X = np.random.default_rng(0).random((10, 3)) < 0.5
    m = fit_forest(X, np.ones(10, bool))
    assert m.predict(X).all()
    y = X[:, 1]
    a = fit_forest(X, y, seed=9).predict(X)
    b = fit_forest(X, y, seed=9).predict(X)
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        fit_forest(X[:0], y[:0])


def test_resolve_multi_prefers_matching_candidate():
    d = doc([SENT])
    names = sorted(name_mentions(d), key=lambda m: m.char_start)
    rng = np.random.default_rng(4)
    X = rng.random((200, 48)) < 0.3
    y = X[:, 5] & X[:, 11]
    X[:, 20] = y
    model = fit_multi(TrainingSet(X, y), k=3, n_trees=50, seed=0)
    assert set(model.selected_features) >= {20}
    sel = [None] * 48
    for h in (5, 11, 20):
        sel[h] = "Cy"
    assert resolve_multi(model, names, sel).selected.text == "Cy"
    assert resolve_multi(model, names[:1], sel).selected.text == "Ann"
    assert resolve_multi(model, [], sel).selected is None


def test_per_head_selections_length():
    d = doc([SENT])
    names = name_mentions(d)
    (p,) = pronoun_mentions(d)
    rec = random_record(np.random.default_rng(2), 8, 6, 8)
    rec.subtokens = [t.text for t in d.tokens()]
    rec.offsets = [(t.char_start, t.char_end) for t in d.tokens()]
    sel = per_head_selections(rec, names, p)
    assert len(sel) == 48 and all(s in names for s in sel)
