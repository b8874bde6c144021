"""Resolvers driven by exported self-attention weights.

Attention is read from JSON-lines files, one record per snippet::

    {"id": ..., "subtokens": [...], "offsets": [[s, e], ...],
     "layers": L, "heads": H, "weights": [L][H][n][n]}

``weights[l][h][i][j]`` is the attention of query subtoken ``i`` on key
subtoken ``j``; every query row is a softmax distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .resolvers import Resolution, overlap_size, surfaces_overlap

ROW_SUM_TOL = 1e-4


class AttentionError(ValueError):
    pass


@dataclass(frozen=True)
class HeadId:
    layer: int
    head: int

    def index(self, n_heads: int = 8) -> int:
        return self.layer * n_heads + self.head

    @classmethod
    def parse(cls, text: str) -> "HeadId":
        """Parse ``L3H7`` style labels."""
        t = text.upper()
        if not (t.startswith("L") and "H" in t):
            raise ValueError(f"bad head label {text!r}")
        layer, head = t[1:].split("H")
        return cls(int(layer), int(head))

    def __str__(self):
        return f"L{self.layer}H{self.head}"


def all_heads(n_layers: int = 6, n_heads: int = 8) -> list:
    """Heads in (layer, head) row-major order."""
    return [HeadId(l, h) for l in range(n_layers) for h in range(n_heads)]


@dataclass
class AttentionRecord:
    id: str
    subtokens: list
    offsets: list
    weights: np.ndarray
    n_layers: int = 6
    n_heads: int = 8

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        n = len(self.subtokens)
        if len(self.offsets) != n:
            raise AttentionError(f"{self.id}: {len(self.offsets)} offsets for {n} subtokens")
        expected = (self.n_layers, self.n_heads, n, n)
        if self.weights.shape != expected:
            raise AttentionError(f"{self.id}: weights shape {self.weights.shape}, expected {expected}")
        if (self.weights < 0).any():
            raise AttentionError(f"{self.id}: negative attention weight")
        sums = self.weights.sum(axis=-1)
        if n and np.abs(sums - 1.0).max() > ROW_SUM_TOL:
            raise AttentionError(
                f"{self.id}: attention rows must sum to 1 (worst {sums.flat[np.abs(sums - 1).argmax()]:.4f})"
            )

    def subtokens_in(self, char_start: int, char_end: int) -> list:
        idx = [i for i, (s, e) in enumerate(self.offsets) if s < char_end and char_start < e]
        if not idx:
            raise AttentionError(f"{self.id}: span {char_start}:{char_end} aligns to no subtoken")
        return idx

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "subtokens": list(self.subtokens),
            "offsets": [list(o) for o in self.offsets],
            "layers": self.n_layers,
            "heads": self.n_heads,
            "weights": self.weights.tolist(),
        }


def load_attention(data) -> list:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    out = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = AttentionRecord(
                id=str(obj["id"]),
                subtokens=list(obj["subtokens"]),
                offsets=[tuple(o) for o in obj["offsets"]],
                weights=np.asarray(obj["weights"], dtype=float),
                n_layers=int(obj.get("layers", 6)),
                n_heads=int(obj.get("heads", 8)),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise AttentionError(f"line {lineno}: malformed record ({e})") from None
        except AttentionError as e:
            raise AttentionError(f"line {lineno}: {e}") from None
        out.append(rec)
    return out


def dump_attention(records) -> bytes:
    return "".join(json.dumps(r.to_json()) + "\n" for r in records).encode("utf-8")


def span_attention(rec: AttentionRecord, head: HeadId, name_span: tuple, pronoun_span: tuple) -> float:
    """Attention of a name span on a pronoun span under one head.

    Between two subtoken strings the attention is the summed weight over all
    their occurrences in the snippet; the span score is the mean of that
    quantity over every (name subtoken, pronoun subtoken) position pair.
    """
    w = rec.weights[head.layer, head.head]
    names = rec.subtokens_in(*name_span)
    prons = rec.subtokens_in(*pronoun_span)
    where = {}
    for i, s in enumerate(rec.subtokens):
        where.setdefault(s, []).append(i)
    total = 0.0
    for i in names:
        rows = where[rec.subtokens[i]]
        for j in prons:
            cols = where[rec.subtokens[j]]
            total += w[np.ix_(rows, cols)].sum()
    return total / (len(names) * len(prons))


def _argmax_earliest(cands, scores):
    best = None
    for c, s in sorted(zip(cands, scores), key=lambda cs: cs[0].char_start):
        if best is None or s > best[1]:
            best = (c, s)
    return best[0] if best else None


def _pronoun_chars(pronoun) -> tuple:
    return (pronoun.char_start, pronoun.char_end)


def resolve_single_head(rec: AttentionRecord, head: HeadId, cands, pronoun) -> Resolution:
    """Candidate whose span attends most to the pronoun (tie: earliest)."""
    if not cands:
        return Resolution(None)
    scores = [
        span_attention(rec, head, (c.char_start, c.char_end), _pronoun_chars(pronoun)) for c in cands
    ]
    return Resolution(_argmax_earliest(cands, scores))


def per_head_selections(rec: AttentionRecord, cands, pronoun) -> list:
    """Selected mention (or None) for every head, row-major."""
    return [
        resolve_single_head(rec, h, cands, pronoun).selected
        for h in all_heads(rec.n_layers, rec.n_heads)
    ]


def head_features(selections, candidate) -> np.ndarray:
    """One boolean per head: does the head's pick overlap the candidate?"""
    surface = candidate if isinstance(candidate, str) else candidate.text
    return np.array(
        [
            sel is not None
            and surfaces_overlap(surface, sel if isinstance(sel, str) else sel.text)
            for sel in selections
        ],
        dtype=bool,
    )


# --------------------------------------------------------------------------
# Chi-squared selection
# --------------------------------------------------------------------------

def chi2_scores(features, labels) -> list:
    """Exact 2x2 chi-squared statistic (no continuity correction) per feature.

    Degenerate tables (a constant feature or constant labels) score 0.
    """
    X = np.asarray(features, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    n = len(y)
    out = []
    for f in range(X.shape[1]):
        x = X[:, f]
        a = int(np.sum(x & y))
        b = int(np.sum(x & ~y))
        c = int(np.sum(~x & y))
        d = int(np.sum(~x & ~y))
        denom = (a + b) * (c + d) * (a + c) * (b + d)
        out.append(Fraction(0) if denom == 0 else Fraction(n * (a * d - b * c) ** 2, denom))
    return out


def chi2_select(features, labels, k: int) -> list:
    """Indices of the k highest-scoring features; ties go to the lower index."""
    X = np.asarray(features, dtype=bool)
    if k <= 0:
        raise ValueError("k must be positive")
    if X.ndim != 2 or k > X.shape[1]:
        raise ValueError(f"k={k} exceeds the {X.shape[-1]} available features")
    scores = chi2_scores(X, labels)
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]


# --------------------------------------------------------------------------
# Extremely randomized trees over boolean features
# --------------------------------------------------------------------------

@dataclass
class _Node:
    positive: float  # fraction of positive training samples reaching the node
    feature: Optional[int] = None
    flip: bool = False  # orientation: which branch is taken on True
    on_true: Optional["_Node"] = None
    on_false: Optional["_Node"] = None

    def vote(self, x) -> bool:
        node = self
        while node.feature is not None:
            branch = bool(x[node.feature]) != node.flip
            node = node.on_true if branch else node.on_false
        return node.positive > 0.5


def _grow(X, y, available, rng, parent_positive) -> _Node:
    if len(y) == 0:
        return _Node(parent_positive)
    pos = float(y.mean())
    if pos == 0.5:
        pos = parent_positive  # a tied leaf defers to its parent
    if y.all() or not y.any() or not available:
        return _Node(pos)
    feature = available[int(rng.integers(len(available)))]
    flip = bool(rng.integers(2))
    rest = [f for f in available if f != feature]
    mask = X[:, feature] != flip
    return _Node(
        pos,
        feature,
        flip,
        on_true=_grow(X[mask], y[mask], rest, rng, pos),
        on_false=_grow(X[~mask], y[~mask], rest, rng, pos),
    )


@dataclass
class ForestModel:
    trees: list
    selected_features: list
    seed: int
    n_trees: int
    constant: Optional[bool] = None

    def vote_fraction(self, x) -> float:
        """Share of trees voting for the positive class on a full feature vector."""
        if self.constant is not None:
            return float(self.constant)
        x = np.asarray(x, dtype=bool)
        return sum(t.vote(x) for t in self.trees) / len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=bool))
        return np.array([self.vote_fraction(x) > 0.5 for x in X])

    def used_features(self) -> set:
        out, stack = set(), list(self.trees)
        while stack:
            node = stack.pop()
            if node.feature is not None:
                out.add(node.feature)
                stack += [node.on_true, node.on_false]
        return out


def fit_forest(features, labels, n_trees: int = 100, seed: int = 0, selected=None) -> ForestModel:
    """Fit fully randomized trees on boolean features.

    Each node splits on a feature drawn uniformly from those not yet used on
    its path, with a random branch orientation, until the node is pure or
    no features remain.  Single-class training data yields a constant model.
    """
    X = np.asarray(features, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    selected = list(range(X.shape[1])) if selected is None else [int(i) for i in selected]
    if len(y) == 0:
        raise ValueError("no training samples")
    if y.all() or not y.any():
        return ForestModel([], selected, seed, n_trees, constant=bool(y[0]))
    rng = np.random.default_rng(seed)
    prior = float(y.mean())
    trees = [_grow(X, y, selected, rng, prior) for _ in range(n_trees)]
    return ForestModel(trees, selected, seed, n_trees)


def resolve_multi(model: ForestModel, cands, selections) -> Resolution:
    """Candidate with the highest positive vote fraction (tie: earliest)."""
    if not cands:
        return Resolution(None)
    scores = [model.vote_fraction(head_features(selections, c)) for c in cands]
    return Resolution(_argmax_earliest(cands, scores))


@dataclass
class TrainingSet:
    features: np.ndarray
    labels: np.ndarray
    groups: list = field(default_factory=list)


def training_rows(example, cands, selections) -> tuple:
    """Feature rows and labels for every candidate of one example.

    A candidate is positive when it aligns to the gold-coreferent name.
    """
    rows, labels = [], []
    for c in cands:
        rows.append(head_features(selections, c))
        gold = [n for n, t in ((example.a, example.a_coref), (example.b, example.b_coref)) if t]
        labels.append(any(overlap_size(c.text, g) for g in gold))
    return rows, labels


def fit_multi(training: TrainingSet, k: int = 3, n_trees: int = 100, seed: int = 0) -> ForestModel:
    """Chi-squared selection of k heads, then a forest over those heads."""
    selected = chi2_select(training.features, training.labels, k)
    return fit_forest(training.features, training.labels, n_trees=n_trees, seed=seed, selected=selected)
