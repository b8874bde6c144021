"""Rater aggregation, agreement statistics, final filtering and
diversity-balanced sub-sampling of candidate contexts."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .corpus import Gender

log = logging.getLogger(__name__)


class RaterLabel(str, Enum):
    NAME_A = "NameA"
    NAME_B = "NameB"
    NEITHER = "Neither"
    BOTH = "Both"
    NOT_SURE = "NotSure"


LABEL_PAIRS = {
    RaterLabel.NAME_A: (True, False),
    RaterLabel.NAME_B: (False, True),
    RaterLabel.NEITHER: (False, False),
}


def consensus(labels: Sequence[RaterLabel]) -> Optional[RaterLabel]:
    if len(labels) != 3:
        raise ValueError(f"consensus needs exactly 3 labels, got {len(labels)}")
    label, count = Counter(RaterLabel(x) for x in labels).most_common(1)[0]
    return label if count >= 2 else None


def fleiss_kappa(counts, n_raters: int) -> float:
    """Fleiss' kappa for an items x categories tally matrix.

    Every row must sum to ``n_raters``.  When expected agreement is 1 (every
    rating in one category) kappa is defined as 1.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] < 2:
        raise ValueError("need an items x categories matrix with at least 2 items")
    if n_raters < 2:
        raise ValueError("need at least 2 raters")
    if (counts < 0).any() or not np.all(counts.sum(axis=1) == n_raters):
        raise ValueError(f"every row must be a non-negative tally summing to {n_raters}")
    n = n_raters
    p_items = ((counts**2).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_items.mean()
    p_cats = counts.sum(axis=0) / counts.sum()
    p_e = float((p_cats**2).sum())
    if p_e >= 1.0:
        return 1.0
    return float((p_bar - p_e) / (1.0 - p_e))


@dataclass(frozen=True)
class AgreementStats:
    kappa: float
    full_agreement_fraction: float
    two_of_three_fraction: float
    no_consensus_count: int
    n_items: int

    @property
    def no_consensus_fraction(self) -> float:
        return self.no_consensus_count / self.n_items if self.n_items else 0.0


def agreement_stats(label_triples) -> AgreementStats:
    cats = list(RaterLabel)
    rows, full, two, none = [], 0, 0, 0
    for triple in label_triples:
        c = Counter(RaterLabel(x) for x in triple)
        if len(triple) != 3:
            raise ValueError("agreement statistics expect 3 labels per item")
        rows.append([c[k] for k in cats])
        top = max(c.values())
        if top == 3:
            full += 1
        elif top == 2:
            two += 1
        else:
            none += 1
    n = len(rows)
    return AgreementStats(
        kappa=fleiss_kappa(rows, 3) if n >= 2 else float("nan"),
        full_agreement_fraction=full / n if n else 0.0,
        two_of_three_fraction=two / n if n else 0.0,
        no_consensus_count=none,
        n_items=n,
    )


@dataclass
class SamplerTargets:
    """Diversity ratios; set a ratio to None to leave that dimension free."""

    gender: Optional[dict] = field(
        default_factory=lambda: {Gender.MASCULINE.value: 1, Gender.FEMININE.value: 1}
    )
    pattern: Optional[dict] = field(
        default_factory=lambda: {"FinalPro": 6, "MedialPro": 1, "InitialPro": 1}
    )
    page_entity: Optional[dict] = field(default_factory=lambda: {True: 1, False: 1})
    label: Optional[dict] = field(
        default_factory=lambda: {RaterLabel.NAME_A.value: 1, RaterLabel.NAME_B.value: 1}
    )
    page_gender_cap: Optional[int] = 3
    page_pronoun_cap: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("gender", "pattern", "page_entity", "label"):
            ratio = getattr(self, name)
            if ratio is not None and (not ratio or any(v <= 0 for v in ratio.values())):
                raise ValueError(f"{name} ratios must be positive")
        if self.page_gender_cap is not None and self.page_gender_cap < 1:
            raise ValueError("page_gender_cap must be >= 1")
        if self.page_pronoun_cap < 1:
            raise ValueError("page_pronoun_cap must be >= 1")

    def dimensions(self) -> list:
        """(name, ratio) in priority order, skipping disabled ones."""
        dims = [
            ("gender", self.gender),
            ("pattern", self.pattern),
            ("page_entity", self.page_entity),
            ("label", self.label),
        ]
        return [(n, r) for n, r in dims if r is not None]


def _page_key(item) -> str:
    return item.url or item.id.rsplit("-", 1)[0]


def _value(item, dim: str):
    if dim == "gender":
        g = item.gender
        return g.value if isinstance(g, Gender) else g
    if dim == "pattern":
        p = item.pattern
        return p.value if isinstance(p, Enum) else p
    if dim == "page_entity":
        return bool(item.page_entity)
    lab = getattr(item, "label", None)
    return lab.value if isinstance(lab, Enum) else lab


def _item_label(item):
    """NameA/NameB from the pair booleans when an explicit label is absent."""
    lab = getattr(item, "label", None)
    if lab is not None:
        return lab
    a, b = getattr(item, "a_coref", False), getattr(item, "b_coref", False)
    if a and not b:
        return RaterLabel.NAME_A.value
    if b and not a:
        return RaterLabel.NAME_B.value
    return None


@dataclass
class Shortfall:
    stratum: str
    target: float
    achieved: int


@dataclass
class SampleResult:
    items: list
    shortfalls: list

    def report_rows(self) -> list:
        return [(s.stratum, f"{s.target:.2f}", s.achieved) for s in self.shortfalls]


class _Cells:
    """Items grouped by their joint stratum (one cell per value combination)."""

    def __init__(self, items, dims):
        self.dims = dims
        self.groups = defaultdict(list)
        for it in items:
            key = tuple(_dimension_value(it, d) for d, _ in dims)
            self.groups[key].append(it)
        self.keys = sorted(self.groups, key=repr)
        self.avail = np.array([len(self.groups[k]) for k in self.keys], dtype=float)

    def marginal(self, counts, d_idx, value) -> float:
        return sum(c for k, c in zip(self.keys, counts) if k[d_idx] == value)

    def indicator(self, d_idx, value) -> np.ndarray:
        return np.array([1.0 if k[d_idx] == value else 0.0 for k in self.keys])


def _dimension_value(item, dim):
    if dim == "label":
        lab = _item_label(item)
        return lab.value if isinstance(lab, Enum) else lab
    return _value(item, dim)


_SLACK = 1 - 1e-3  # strict bound, kept well outside the solver tolerance


def _ratio_constraints(cells: _Cells, d_idx: int, ratio: dict) -> list:
    """Linear constraints tying one dimension's strata to its ratio.

    For every pair of strata, x_v < (r_v / r_w) * x_w + 1: no stratum
    exceeds what the scarcer strata support by a whole item.  Each stratum
    also stays within one item of its exact share of the constrained total.
    """
    out = []
    total_r = float(sum(ratio.values()))
    constrained = sum(cells.indicator(d_idx, v) for v in ratio)
    for v, r_v in ratio.items():
        ind_v = cells.indicator(d_idx, v)
        for w, r_w in ratio.items():
            if v != w:
                out.append(LinearConstraint(r_w * ind_v - r_v * cells.indicator(d_idx, w),
                                            -np.inf, r_w * _SLACK))
        out.append(LinearConstraint(ind_v - (r_v / total_r) * constrained, -1, 1))
    return out


def _satisfies(cells: _Cells, constraints) -> bool:
    for c in constraints:
        val = float((np.asarray(c.A) @ cells.avail).item())
        if not (c.lb - 1e-9 <= val <= c.ub + 1e-9):
            return False
    return True


def _solve(cells: _Cells, constraints):
    n = len(cells.keys)
    res = milp(
        c=-np.ones(n),
        constraints=constraints or None,
        integrality=np.ones(n),
        bounds=Bounds(np.zeros(n), cells.avail),
    )
    if not res.success:
        raise RuntimeError(f"sampler integer program failed: {res.message}")
    return np.round(res.x).astype(int)


def _cap(items, key, cap):
    counts = Counter()
    out = []
    for it in items:
        k = key(it)
        if counts[k] < cap:
            counts[k] += 1
            out.append(it)
    return out


def _split_dimensions(items, dims):
    """Separate dimensions that can be balanced from those with an empty stratum.

    The label dimension is skipped silently when no item carries a label.
    """
    cells = _Cells(items, dims)
    active, empty = [], []
    for d_idx, (name, ratio) in enumerate(dims):
        avail = {v: cells.marginal(cells.avail, d_idx, v) for v in ratio}
        if name == "label" and not any(avail.values()):
            continue
        (active if all(avail.values()) else empty).append((name, ratio))
    return active, empty


def _shortfalls(items, dims) -> list:
    cells = _Cells(items, dims)
    out = []
    for d_idx, (name, ratio) in enumerate(dims):
        total_r = float(sum(ratio.values()))
        n = sum(cells.marginal(cells.avail, d_idx, v) for v in ratio)
        for v, r in ratio.items():
            out.append(
                Shortfall(f"{name}={v}", r / total_r * n, int(cells.marginal(cells.avail, d_idx, v)))
            )
    return out


def sample_diverse(pool, targets: SamplerTargets, seed: Optional[int] = None) -> SampleResult:
    """Stratified sub-sample of ``pool`` honouring ``targets``.

    Priority: per-page-gender cap, then gender, pattern, page-entity and label
    ratios, all solved jointly as a small integer program over strata.  Each
    stratum ends within one item of its ratio target.  A ratio that cannot be met (an empty stratum,
    or a conflict with a higher-priority ratio) is relaxed and reported as a
    shortfall rather than silently ignored.
    """
    pool = list(pool)
    if not pool:
        raise ValueError("empty pool")
    seed = targets.seed if seed is None else seed
    dims, empty = _split_dimensions(pool, targets.dimensions())
    if empty:
        log.warning("unattainable ratios (empty stratum): %s", [n for n, _ in empty])
    page_gender = lambda it: (_page_key(it), _value(it, "gender"))  # noqa: E731
    cap = targets.page_gender_cap
    whole = _Cells(pool, dims)
    if (cap is None or max(Counter(map(page_gender, pool)).values()) <= cap) and _satisfies(
        whole, [c for d in range(len(dims)) for c in _ratio_constraints(whole, d, dims[d][1])]
    ):
        return SampleResult(pool, _shortfalls(pool, empty))

    rng = np.random.default_rng(seed)
    shuffled = [pool[i] for i in rng.permutation(len(pool))]
    if cap is not None:
        shuffled = _cap(shuffled, page_gender, cap)

    cells = _Cells(shuffled, dims)
    fixed, relaxed = [], []
    counts = cells.avail.astype(int)
    for d_idx, (name, ratio) in enumerate(dims):
        trial = fixed + _ratio_constraints(cells, d_idx, ratio)
        trial_counts = _solve(cells, trial)
        if trial_counts.sum() == 0:
            log.warning("relaxing %s ratio: conflicts with higher-priority targets", name)
            relaxed.append((name, ratio))
            continue
        fixed, counts = trial, trial_counts
    chosen = []
    for k, c in zip(cells.keys, counts):
        chosen.extend(cells.groups[k][:c])
    position = {id(it): i for i, it in enumerate(pool)}
    chosen.sort(key=lambda it: position[id(it)])
    return SampleResult(chosen, _shortfalls(chosen, empty + relaxed))


def final_filter(candidates, labels: dict, seed: int = 0) -> list:
    """Turn consensus-labelled candidates into the final example list.

    ``labels`` maps candidate id to its consensus RaterLabel (or None).
    Drops unlabelled/Both/NotSure, keeps one example per page and pronoun
    form, then discards randomly chosen examples of the larger gender until
    masculine and feminine counts match.
    """
    from .ingestion import ExampleRecord

    rng = np.random.default_rng(seed)
    kept = []
    for c in candidates:
        lab = labels.get(c.id)
        lab = RaterLabel(lab) if lab is not None else None
        if lab not in LABEL_PAIRS:
            continue
        kept.append((c, lab))
    order = rng.permutation(len(kept))
    seen, unique = set(), []
    for i in order:
        c, lab = kept[i]
        key = (_page_key(c), c.pronoun.lower())
        if key in seen:
            continue
        seen.add(key)
        unique.append((c, lab))
    by_gender = defaultdict(list)
    for c, lab in unique:
        by_gender[c.gender].append((c, lab))
    masc, fem = by_gender[Gender.MASCULINE], by_gender[Gender.FEMININE]
    n = min(len(masc), len(fem))
    if len(masc) > n:
        log.info("discarding %d masculine examples for gender parity", len(masc) - n)
    if len(fem) > n:
        log.info("discarding %d feminine examples for gender parity", len(fem) - n)
    chosen = []
    for group in (masc, fem):
        picks = sorted(rng.choice(len(group), size=n, replace=False)) if n else []
        chosen.extend(group[i] for i in picks)
    out = []
    for c, lab in chosen:
        a, b = LABEL_PAIRS[lab]
        out.append(
            ExampleRecord(
                id=c.id, text=c.text, pronoun=c.pronoun, pronoun_offset=c.pronoun_offset,
                a=c.a, a_offset=c.a_offset, a_coref=a, b=c.b, b_offset=c.b_offset,
                b_coref=b, url=c.url,
            )
        )
    return sorted(out, key=lambda r: r.id)


def with_labels(candidates, labels: dict) -> list:
    """Candidates with pair booleans filled in from consensus labels (others dropped)."""
    out = []
    for c in candidates:
        lab = labels.get(c.id)
        if lab is None or RaterLabel(lab) not in LABEL_PAIRS:
            continue
        a, b = LABEL_PAIRS[RaterLabel(lab)]
        out.append(replace(c, a_coref=a, b_coref=b))
    return out
