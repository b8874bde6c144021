"""Heuristic pronoun resolvers and name alignment.

Each resolver picks one candidate mention (or None); ``align_to_pair`` then
maps that pick onto the example's two annotated names.  Every argmin/argmax
breaks ties in favour of candidates preceding the pronoun, then the smaller
start offset.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Optional
from urllib.parse import unquote, urlparse

import numpy as np

from .corpus import (
    Document,
    Mention,
    MentionKind,
    Role,
    make_mention,
    pronoun_gender,
    syntactic_distance,
    token_distance,
)
from .extraction import name_mentions

CORE_ARG_RELS = frozenset({"nsubj", "nsubj:pass", "nsubjpass", "obj", "dobj", "iobj"})
_WORD = re.compile(r"\w+")


class AlignmentError(ValueError):
    pass


class Strategy(str, Enum):
    RANDOM = "random"
    TOKEN_DISTANCE = "token-distance"
    TOPICAL_ENTITY = "topical"
    SYNTACTIC_DISTANCE = "syntactic"
    PARALLELISM = "parallelism"
    URL = "url"


class Mode(str, Enum):
    STANDARD = "standard"
    GOLD_TWO_MENTION = "gold-two-mention"


class Setting(str, Enum):
    SNIPPET = "snippet"
    PAGE = "page"


@dataclass(frozen=True)
class ResolverConfig:
    strategy: Strategy = Strategy.PARALLELISM
    mode: Mode = Mode.STANDARD
    setting: Setting = Setting.SNIPPET
    seed: int = 0

    def __post_init__(self):
        for name, enum in (("strategy", Strategy), ("mode", Mode), ("setting", Setting)):
            object.__setattr__(self, name, enum(getattr(self, name)))
        if self.strategy == Strategy.URL and self.setting != Setting.PAGE:
            raise ValueError("the url strategy is only allowed in the page-context setting")


@dataclass(frozen=True)
class Resolution:
    selected: Optional[Mention]
    a_pred: bool = False
    b_pred: bool = False


# --------------------------------------------------------------------------
# Candidate generation
# --------------------------------------------------------------------------

def _align_chars(doc: Document, start: int, end: int, what: str) -> tuple:
    try:
        return doc.char_to_tokens(start, end)
    except ValueError as e:
        raise AlignmentError(f"{what}: {e}") from None


def pronoun_mention(example, doc: Document) -> Mention:
    s, a, b = _align_chars(doc, *example.pronoun_span, f"{example.id} pronoun")
    return make_mention(doc, s, a, b, MentionKind.PRONOUN, pronoun_gender(example.pronoun))


def gold_names(example, doc: Document) -> tuple:
    out = []
    for label, span in (("A", example.a_span), ("B", example.b_span)):
        s, a, b = _align_chars(doc, *span, f"{example.id} name {label}")
        out.append(make_mention(doc, s, a, b, MentionKind.NAME))
    return tuple(out)


def _co_argument(doc: Document, cand: Mention, pronoun: Mention) -> bool:
    if cand.sentence_index != pronoun.sentence_index:
        return False
    toks = doc.sentences[cand.sentence_index].tokens
    c, p = toks[cand.head_index], toks[pronoun.head_index]
    return (
        c.head == p.head
        and c.deprel.split(":")[0] in {r.split(":")[0] for r in CORE_ARG_RELS}
        and p.deprel.split(":")[0] in {r.split(":")[0] for r in CORE_ARG_RELS}
    )


def candidate_antecedents(example, doc: Document, mode=Mode.STANDARD, pronoun=None) -> list:
    """Candidate name mentions for the example's pronoun, in document order."""
    pronoun = pronoun or pronoun_mention(example, doc)
    if Mode(mode) == Mode.GOLD_TWO_MENTION:
        return sorted(gold_names(example, doc), key=lambda m: doc.flat_span(m))
    out = []
    for m in name_mentions(doc):
        if m.overlaps(pronoun) or _co_argument(doc, m, pronoun):
            continue
        out.append(m)
    return sorted(out, key=lambda m: doc.flat_span(m))


# --------------------------------------------------------------------------
# Selection heuristics
# --------------------------------------------------------------------------

def _tie_key(doc: Document, cand: Mention, pronoun: Mention) -> tuple:
    c0 = doc.flat_span(cand)[0]
    precedes = c0 < doc.flat_span(pronoun)[0]
    return (0 if precedes else 1, c0)


def _tok_dist(doc, cand, pronoun) -> int:
    return token_distance(doc.flat_span(cand), doc.flat_span(pronoun))


def _syn_dist(doc, cand, pronoun) -> int:
    return syntactic_distance(
        doc.flat(cand.sentence_index, cand.head_index),
        doc.flat(pronoun.sentence_index, pronoun.head_index),
        doc,
    )


def resolve_random(cands, seed=0) -> Resolution:
    """Uniform pick; ``seed`` may be an int or a numpy Generator."""
    if not cands:
        return Resolution(None)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Resolution(cands[int(rng.integers(len(cands)))])


def resolve_token_distance(cands, pronoun: Mention, doc: Document) -> Resolution:
    if not cands:
        return Resolution(None)
    best = min(cands, key=lambda c: (_tok_dist(doc, c, pronoun), *_tie_key(doc, c, pronoun)))
    return Resolution(best)


def resolve_topical_entity(cands, pronoun: Mention, doc: Document) -> Resolution:
    if not cands:
        return Resolution(None)
    words = [
        [t.text for t in doc.sentences[c.sentence_index].tokens[c.start : c.end]] for c in cands
    ]
    freq = Counter(w for ws in words for w in ws)
    top = max(freq.values())
    frequent = {w for w, n in freq.items() if n == top}
    pool = [c for c, ws in zip(cands, words) if frequent & set(ws)]
    return resolve_token_distance(pool, pronoun, doc)


def resolve_syntactic_distance(cands, pronoun: Mention, doc: Document) -> Resolution:
    if not cands:
        return Resolution(None)
    best = min(
        cands,
        key=lambda c: (
            _syn_dist(doc, c, pronoun),
            _tok_dist(doc, c, pronoun),
            *_tie_key(doc, c, pronoun),
        ),
    )
    return Resolution(best)


def resolve_parallelism(cands, pronoun: Mention, doc: Document) -> Resolution:
    if pronoun.role in (Role.SUBJECT, Role.DIRECT_OBJECT):
        same = [c for c in cands if c.role == pronoun.role]
        if same:
            return resolve_token_distance(same, pronoun, doc)
    return resolve_syntactic_distance(cands, pronoun, doc)


def _words(s: str) -> list:
    return _WORD.findall(s)


def title_from_url(url: str) -> str:
    """Page title recovered from the last path segment of a page URL."""
    if not url:
        return ""
    return unquote(urlparse(url).path.rstrip("/").rsplit("/", 1)[-1]).replace("_", " ")


def resolve_url(cands, pronoun: Mention, doc: Document, page_title: Optional[str] = None) -> Resolution:
    title = doc.page_title if page_title is None else page_title
    title_words = {w.lower() for w in _words(title or "")}
    overlapping = [c for c in cands if title_words & {w.lower() for w in _words(c.text)}]
    if overlapping:
        return resolve_syntactic_distance(overlapping, pronoun, doc)
    return resolve_parallelism(cands, pronoun, doc)


# --------------------------------------------------------------------------
# Alignment
# --------------------------------------------------------------------------

def _contains(seq: list, sub: list) -> bool:
    n = len(sub)
    return n > 0 and any(seq[i : i + n] == sub for i in range(len(seq) - n + 1))


def overlap_size(x: str, y: str) -> int:
    """Word count of the shorter string when it occurs inside the other on
    word boundaries; 0 otherwise."""
    wx, wy = _words(x), _words(y)
    if _contains(wy, wx):
        return len(wx)
    if _contains(wx, wy):
        return len(wy)
    return 0


def surfaces_overlap(x: str, y: str) -> bool:
    return overlap_size(x, y) > 0


def align_to_pair(selected, name_a: str, name_b: str) -> tuple:
    """Map a selected mention (or surface string) onto the (A, B) names.

    Substring matches in either direction count, on word boundaries.  When
    both names match, the larger overlap wins, then the larger share of the
    name covered, then A.
    """
    if selected is None:
        return (False, False)
    surface = selected if isinstance(selected, str) else selected.text
    oa, ob = overlap_size(surface, name_a), overlap_size(surface, name_b)
    if oa and ob:
        ka = (oa, oa / max(len(_words(name_a)), 1))
        kb = (ob, ob / max(len(_words(name_b)), 1))
        return (True, False) if ka >= kb else (False, True)
    return (bool(oa), bool(ob))


def finish(res: Resolution, example) -> Resolution:
    a, b = align_to_pair(res.selected, example.a, example.b)
    return Resolution(res.selected, a, b)


def resolve_example(example, doc: Document, config: ResolverConfig, rng=None) -> Resolution:
    """Run one configured heuristic end to end on an example."""
    pronoun = pronoun_mention(example, doc)
    cands = candidate_antecedents(example, doc, config.mode, pronoun)
    strategy = config.strategy
    if strategy == Strategy.RANDOM:
        res = resolve_random(cands, rng if rng is not None else config.seed)
    elif strategy == Strategy.TOKEN_DISTANCE:
        res = resolve_token_distance(cands, pronoun, doc)
    elif strategy == Strategy.TOPICAL_ENTITY:
        res = resolve_topical_entity(cands, pronoun, doc)
    elif strategy == Strategy.SYNTACTIC_DISTANCE:
        res = resolve_syntactic_distance(cands, pronoun, doc)
    elif strategy == Strategy.PARALLELISM:
        res = resolve_parallelism(cands, pronoun, doc)
    else:
        res = resolve_url(cands, pronoun, doc, doc.page_title or title_from_url(example.url))
    return finish(res, example)
