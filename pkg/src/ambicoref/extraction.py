"""Mention detection and ambiguous-pronoun context extraction.

A context is a gendered pronoun plus two person names in one of three
textual orders (FinalPro, MedialPro, InitialPro).  Each order has its own
sentence-placement constraints, and no other compatible person mention may
sit between the three.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .corpus import (
    POSSESSIVE_RELS,
    REFLEXIVE_FORMS,
    Document,
    Gender,
    Mention,
    MentionKind,
    Sentence,
    make_mention,
    pronoun_form,
)

PERSON = "PERSON"
PROPER_NOUN = "PROPN"
CLAUSAL_RELS = ("advcl",)
PREPOSITION_RELS = frozenset({"case"})


class PatternKind(str, Enum):
    FINAL = "FinalPro"
    MEDIAL = "MedialPro"
    INITIAL = "InitialPro"


@dataclass(frozen=True)
class CandidateContext:
    document: Document
    pronoun: Mention
    name_a: Mention
    name_b: Mention
    pattern: PatternKind
    gender: Gender
    page_entity_mentioned: bool

    @property
    def page_entity(self) -> bool:
        return self.page_entity_mentioned

    @property
    def url(self) -> str:
        return self.document.url

    @property
    def label(self):
        return None

    def key(self) -> tuple:
        return (self.pronoun.span, frozenset({self.name_a.span, self.name_b.span}))


def _is_plural(doc: Document, sentence_index: int, start: int, end: int) -> bool:
    toks = doc.sentences[sentence_index].tokens
    return any(
        toks[i].deprel == "cc" or (toks[i].deprel == "conj" and start <= toks[i].head < end)
        for i in range(start, end)
    )


def name_mentions(doc: Document, proper_only: bool = True) -> list:
    """PERSON entity spans as Name mentions (optionally only PROPN-headed ones)."""
    out = []
    for ent in doc.entities:
        if ent.label != PERSON:
            continue
        m = make_mention(doc, ent.sentence_index, ent.start, ent.end, MentionKind.NAME)
        if proper_only and doc.sentences[m.sentence_index].tokens[m.head_index].pos != PROPER_NOUN:
            continue
        out.append(m)
    return out


def pronoun_mentions(doc: Document, include_reflexive: bool = False) -> list:
    out = []
    for sent in doc.sentences:
        for tok in sent.tokens:
            form = pronoun_form(tok.text)
            if form is not None:
                out.append(
                    make_mention(doc, sent.index, tok.index, tok.index + 1,
                                 MentionKind.PRONOUN, form.gender)
                )
            elif include_reflexive and tok.text.lower() in REFLEXIVE_FORMS:
                out.append(
                    make_mention(doc, sent.index, tok.index, tok.index + 1, MentionKind.PRONOUN,
                                 REFLEXIVE_FORMS[tok.text.lower()], is_reflexive=True)
                )
    return out


def find_mentions(doc: Document) -> list:
    """Proper-noun PERSON names and gendered non-reflexive singular pronouns,
    in document order."""
    mentions = name_mentions(doc) + pronoun_mentions(doc)
    return sorted(mentions, key=lambda m: doc.flat_span(m))


def has_intruder(doc: Document, pronoun: Mention, names: tuple, gender: Gender) -> bool:
    """True iff a compatible person mention lies strictly between the three spans."""
    spans = [doc.flat_span(m) for m in (pronoun, *names)]
    lo = min(s[0] for s in spans)
    hi = max(s[1] for s in spans)
    own = {m.span for m in (pronoun, *names)}

    def inside(m):
        s, e = doc.flat_span(m)
        return lo <= s and e <= hi and m.span not in own and not any(
            s < b and a < e for a, b in spans
        )

    for ent in doc.entities:
        if ent.label != PERSON:
            continue
        if _is_plural(doc, ent.sentence_index, ent.start, ent.end):
            continue
        m = make_mention(doc, ent.sentence_index, ent.start, ent.end, MentionKind.NAME)
        # names have no gender annotation and are treated as compatible
        if inside(m):
            return True
    for m in pronoun_mentions(doc):
        if m.gender == gender and inside(m):
            return True
    return False


def _main_child(sentence: Sentence, i: int) -> Optional[int]:
    """Ancestor of ``i`` attached directly to the sentence root, if any."""
    path = sentence.ancestors(i)
    if len(path) < 2:
        return None
    return path[-2]


def is_fronted(pronoun: Mention, sentence: Sentence) -> bool:
    """Pronoun sits in an initial subordinate clause, or is a possessive
    inside an initial prepositional phrase, ahead of the main predicate."""
    toks = sentence.tokens
    p = pronoun.head_index
    top = _main_child(sentence, p)
    if top is None or top == p:
        return False
    main = sentence.root
    if not all(i < main for i in sentence.subtree(top)):
        return False
    # (a) subordinate clause: clause head on the path between pronoun and root
    for node in sentence.ancestors(p)[1:-1]:
        rel = toks[node].deprel
        kids = sentence.children[node]
        if rel.split(":")[0] in CLAUSAL_RELS or any(toks[k].deprel == "mark" for k in kids):
            return True
    # (b) possessive inside a prepositional phrase
    if toks[p].deprel in POSSESSIVE_RELS:
        for node in sentence.ancestors(p)[1:-1]:
            if any(toks[k].deprel in PREPOSITION_RELS and k < node for k in sentence.children[node]):
                return True
    return False


def _head_text(doc: Document, m: Mention) -> str:
    return doc.sentences[m.sentence_index].tokens[m.head_index].text.lower()


def classify_pattern(pronoun: Mention, name_a: Mention, name_b: Mention, doc: Document):
    """Pattern of a (pronoun, name, name) triple, or None if it qualifies as none."""
    trio = (pronoun, name_a, name_b)
    for x, y in itertools.combinations(trio, 2):
        if x.overlaps(y):
            return None
    if pronoun.gender not in (Gender.MASCULINE, Gender.FEMININE) or pronoun.is_reflexive:
        return None
    if _head_text(doc, name_a) == _head_text(doc, name_b):
        return None
    first, second = sorted((name_a, name_b), key=lambda m: doc.flat_span(m))
    p0 = doc.flat_span(pronoun)[0]
    n1, n2 = doc.flat_span(first)[0], doc.flat_span(second)[0]
    sp, s1, s2 = pronoun.sentence_index, first.sentence_index, second.sentence_index
    sentence = doc.sentences[sp]
    kind = None
    if n2 < p0:
        if s1 == s2 and sp in (s1, s1 + 1):
            kind = PatternKind.FINAL
    elif n1 < p0 < n2:
        if sp == s2 == s1 + 1 and is_fronted(pronoun, sentence):
            kind = PatternKind.MEDIAL
    else:
        if sp == s1 == s2 and is_fronted(pronoun, sentence):
            kind = PatternKind.INITIAL
    if kind is None or has_intruder(doc, pronoun, (first, second), pronoun.gender):
        return None
    return kind


def _title_tokens(title: str) -> set:
    return {w.lower() for w in re.findall(r"\w+", title)}


def mentions_title(doc: Document, m: Mention, title: Optional[str] = None) -> bool:
    title_words = _title_tokens(doc.page_title if title is None else title)
    toks = doc.sentences[m.sentence_index].tokens[m.start : m.end]
    return any(w.lower() in title_words for t in toks for w in re.findall(r"\w+", t.text))


def extract_candidates(doc: Document) -> list:
    """All qualifying contexts in ``doc``, ordered by pronoun then name positions."""
    mentions = find_mentions(doc)
    names = [m for m in mentions if m.kind == MentionKind.NAME]
    pronouns = [m for m in mentions if m.kind == MentionKind.PRONOUN]
    seen = set()
    out = []
    for p in pronouns:
        for a, b in itertools.combinations(names, 2):
            kind = classify_pattern(p, a, b, doc)
            if kind is None:
                continue
            ctx = CandidateContext(
                document=doc,
                pronoun=p,
                name_a=a,
                name_b=b,
                pattern=kind,
                gender=p.gender,
                page_entity_mentioned=mentions_title(doc, a) or mentions_title(doc, b),
            )
            if ctx.key() in seen:
                continue
            seen.add(ctx.key())
            out.append(ctx)
    return out


def to_record(ctx: CandidateContext, record_id: str):
    from .ingestion import CandidateRecord

    return CandidateRecord(
        id=record_id,
        text=ctx.document.text,
        pronoun=ctx.pronoun.text,
        pronoun_offset=ctx.pronoun.char_start,
        a=ctx.name_a.text,
        a_offset=ctx.name_a.char_start,
        a_coref=False,
        b=ctx.name_b.text,
        b_offset=ctx.name_b.char_start,
        b_coref=False,
        url=ctx.document.url,
        pattern=ctx.pattern.value,
        page_entity=ctx.page_entity_mentioned,
    )
