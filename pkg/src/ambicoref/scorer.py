"""Gender-disaggregated pairwise scoring, Bias, cluster scoring and
difficulty bucketing."""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum
from typing import Optional

from .corpus import Gender

GENDERS = (Gender.MASCULINE, Gender.FEMININE)


class CoverageWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _tally(gold: bool, pred: bool) -> Confusion:
    if gold and pred:
        return Confusion(tp=1)
    if pred:
        return Confusion(fp=1)
    if gold:
        return Confusion(fn=1)
    return Confusion()


def confusion_from_pairs(gold, predictions: dict) -> dict:
    """Per-gender confusion over every (example, name) decision.

    ``gold`` is an iterable of example records; ``predictions`` maps example
    id to ``(a_pred, b_pred)``.  Missing predictions count as (False, False)
    and raise a CoverageWarning.
    """
    gold = list(gold)
    known = {g.id for g in gold}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise KeyError(f"predictions for unknown ids: {unknown[:5]}")
    out = {g: Confusion() for g in GENDERS}
    missing = 0
    for ex in gold:
        if ex.id not in predictions:
            missing += 1
        a, b = predictions.get(ex.id, (False, False))
        g = ex.gender
        out[g] = out.get(g, Confusion()) + _tally(ex.a_coref, a) + _tally(ex.b_coref, b)
    if missing:
        warnings.warn(f"{missing} of {len(gold)} examples have no prediction", CoverageWarning)
    return out


def f1(conf: Confusion) -> tuple:
    p = conf.tp / (conf.tp + conf.fp) if conf.tp + conf.fp else 0.0
    r = conf.tp / (conf.tp + conf.fn) if conf.tp + conf.fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return (p, r, f)


def bias(masc_f1: float, fem_f1: float) -> Optional[float]:
    """Feminine over masculine F1; None when masculine F1 is zero."""
    if masc_f1 < 0 or fem_f1 < 0:
        raise ValueError("F1 scores must be non-negative")
    if masc_f1 == 0:
        return None
    return fem_f1 / masc_f1


def round_half_even(x: float, places: int) -> float:
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class ScoreReport:
    masculine: tuple
    feminine: tuple
    overall: tuple
    bias: Optional[float]
    confusion: dict

    @classmethod
    def from_confusions(cls, confusions: dict) -> "ScoreReport":
        m = confusions.get(Gender.MASCULINE, Confusion())
        f = confusions.get(Gender.FEMININE, Confusion())
        o = sum(confusions.values(), Confusion())
        fm, ff, fo = f1(m), f1(f), f1(o)
        return cls(fm, ff, fo, bias(fm[2], ff[2]), {"M": m, "F": f, "O": o})

    def table(self) -> dict:
        """Rounded presentation values: x100 at 1 d.p., bias at 2 d.p."""
        rows = {}
        for key, prf in (("M", self.masculine), ("F", self.feminine), ("O", self.overall)):
            rows[key] = tuple(round_half_even(v * 100, 1) for v in prf)
        b = None if self.bias is None else round_half_even(self.bias, 2)
        return {"rows": rows, "B": b}

    def to_tsv(self) -> bytes:
        t = self.table()
        lines = ["\tP\tR\tF1"]
        for key in ("M", "F", "O"):
            lines.append(key + "\t" + "\t".join(f"{v:.1f}" for v in t["rows"][key]))
        lines.append("B\t" + ("NA" if t["B"] is None else f"{t['B']:.2f}"))
        return ("\n".join(lines) + "\n").encode("utf-8")

    def to_json(self) -> bytes:
        t = self.table()
        obj = {
            key: dict(zip(("precision", "recall", "f1"), t["rows"][key])) for key in ("M", "F", "O")
        }
        obj["B"] = t["B"]
        obj["confusion"] = {k: vars(c) for k, c in self.confusion.items()}
        return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def score(gold, predictions: dict) -> ScoreReport:
    return ScoreReport.from_confusions(confusion_from_pairs(gold, predictions))


# --------------------------------------------------------------------------
# Cluster scoring
# --------------------------------------------------------------------------

class ClusterMode(str, Enum):
    GAP_ALIGN = "gap-align"
    ONTONOTES_PAIR = "ontonotes-pair"


def last_word_head(text: str, span: tuple) -> tuple:
    """Character span of a mention's head when no parse is available.

    English names are head-final, so the last word of the span is used.
    """
    s, e = span
    chunk = text[s:e].rstrip()
    words = chunk.split()
    if not words:
        return span
    last = words[-1]
    start = s + chunk.rfind(last)
    # a trailing possessive marker is not part of the head
    for suffix in ("'s", "’s", "'", "’"):
        if last.endswith(suffix) and len(last) > len(suffix):
            return (start, start + len(last) - len(suffix))
    return (start, start + len(last))


def _inside(inner: tuple, outer: tuple) -> bool:
    return outer[0] <= inner[0] and inner[1] <= outer[1]


def _head_aligned(member: tuple, name: tuple, text: str, head_fn) -> bool:
    """A cluster member matches a name when either head falls inside the other span."""
    return _inside(head_fn(text, member), name) or _inside(head_fn(text, name), member)


def cluster_predictions(clusters: dict, examples, head_fn=last_word_head) -> dict:
    """(a_pred, b_pred) per example from system clusters over its snippet.

    ``clusters`` maps example id to a list of clusters, each a collection of
    ``(char_start, char_end)`` spans.  A name is predicted coreferent when
    the cluster holding the pronoun contains a mention head-aligned to it.
    """
    out = {}
    for ex in examples:
        holding = [
            c for c in clusters.get(ex.id, []) if any(tuple(m) == ex.pronoun_span for m in c)
        ]
        if len(holding) > 1:
            raise ValueError(f"{ex.id}: pronoun appears in {len(holding)} clusters")
        if not holding:
            out[ex.id] = (False, False)
            continue
        members = [tuple(m) for m in holding[0] if tuple(m) != ex.pronoun_span]
        out[ex.id] = (
            any(_head_aligned(m, ex.a_span, ex.text, head_fn) for m in members),
            any(_head_aligned(m, ex.b_span, ex.text, head_fn) for m in members),
        )
    return out


@dataclass(frozen=True)
class PronounClusterItem:
    """One gendered pronoun from a gold cluster, for pronoun-name scoring.

    ``gold_names`` are the named-entity mentions in the pronoun's gold
    cluster; ``other_names`` are all other named-entity mentions.
    """

    gender: Gender
    pronoun: tuple
    gold_names: frozenset
    other_names: frozenset


def score_clusters(system_clusters, items, mode=ClusterMode.GAP_ALIGN, head_fn=last_word_head) -> dict:
    """Per-gender confusion for an external system's clusters.

    GAP_ALIGN: ``items`` are example records and ``system_clusters`` maps
    example id to clusters; scoring is pairwise after head alignment.

    ONTONOTES_PAIR: ``items`` are PronounClusterItem and ``system_clusters``
    is a list of clusters for the same document.  TP when the pronoun's
    system cluster holds a gold-coreferent name, FP when it holds any other
    name, FN when it holds no gold-coreferent name.
    """
    mode = ClusterMode(mode)
    if mode == ClusterMode.GAP_ALIGN:
        items = list(items)
        return confusion_from_pairs(items, cluster_predictions(system_clusters, items, head_fn))
    out = {g: Confusion() for g in GENDERS}
    clusters = [{tuple(m) for m in c} for c in system_clusters]
    for item in items:
        holding = [c for c in clusters if tuple(item.pronoun) in c]
        if len(holding) > 1:
            raise ValueError(f"pronoun {item.pronoun} appears in {len(holding)} clusters")
        members = holding[0] if holding else set()
        gold_hit = bool(members & {tuple(m) for m in item.gold_names})
        other_hit = bool(members & {tuple(m) for m in item.other_names})
        out[item.gender] = out.get(item.gender, Confusion()) + Confusion(
            tp=int(gold_hit), fp=int(other_hit), fn=int(not gold_hit)
        )
    return out


# --------------------------------------------------------------------------
# Difficulty analysis
# --------------------------------------------------------------------------

class Difficulty(str, Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    RED = "Red"


N_SYSTEMS = 4


def bucket(agreement: int) -> Difficulty:
    if not 0 <= agreement <= N_SYSTEMS:
        raise ValueError(f"agreement {agreement} outside 0..{N_SYSTEMS}")
    if agreement == N_SYSTEMS:
        return Difficulty.GREEN
    if agreement == 0:
        return Difficulty.RED
    return Difficulty.YELLOW


def difficulty_buckets(verdicts) -> dict:
    """Histogram of how many of the four systems got each scored pair right.

    ``verdicts`` holds one tuple of 4 booleans per scored pair.
    """
    levels = Counter()
    for v in verdicts:
        if len(v) != N_SYSTEMS:
            raise ValueError(f"expected {N_SYSTEMS} verdicts per pair, got {len(v)}")
        levels[sum(bool(x) for x in v)] += 1
    by_level = {k: levels.get(k, 0) for k in range(N_SYSTEMS + 1)}
    rollup = Counter()
    for k, n in by_level.items():
        rollup[bucket(k)] += n
    return {"levels": by_level, "buckets": {d.value: rollup.get(d, 0) for d in Difficulty}}


def pair_verdicts(examples, system_predictions) -> list:
    """Per-pair correctness of each system.

    For a NameA/NameB gold label only the positive pair is scored; for
    Neither both pairs are.  Missing predictions count as (False, False).
    """
    system_predictions = list(system_predictions)
    if len(system_predictions) != N_SYSTEMS:
        raise ValueError(f"expected {N_SYSTEMS} systems, got {len(system_predictions)}")
    out = []
    for ex in examples:
        preds = [p.get(ex.id, (False, False)) for p in system_predictions]
        if ex.a_coref or ex.b_coref:
            k = 0 if ex.a_coref else 1
            out.append(tuple(p[k] for p in preds))
        else:
            out.append(tuple(not p[0] for p in preds))
            out.append(tuple(not p[1] for p in preds))
    return out
