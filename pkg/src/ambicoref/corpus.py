"""Value types for dependency-annotated text, plus span and tree utilities.

Token heads are 0-based indices into the owning sentence; the sentence root
carries ``ROOT`` (-1) as its head.  Character offsets count Unicode code
points into ``Document.text`` (end exclusive).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional, Sequence

ROOT = -1

SUBJECT_RELS = frozenset({"nsubj", "nsubj:pass", "nsubjpass", "csubj", "csubj:pass"})
OBJECT_RELS = frozenset({"obj", "dobj"})
POSSESSIVE_RELS = frozenset({"nmod:poss", "poss"})


class StructuralError(ValueError):
    """Raised when a sentence or span violates dependency-tree structure."""


class MentionKind(str, Enum):
    NAME = "Name"
    PRONOUN = "Pronoun"


class Gender(str, Enum):
    MASCULINE = "Masculine"
    FEMININE = "Feminine"
    UNKNOWN = "Unknown"

    @property
    def short(self) -> str:
        return {"Masculine": "M", "Feminine": "F", "Unknown": "U"}[self.value]


class Role(str, Enum):
    SUBJECT = "subject"
    DIRECT_OBJECT = "direct-object"
    OTHER = "other"


def role_of(deprel: str) -> Role:
    if deprel in SUBJECT_RELS:
        return Role.SUBJECT
    if deprel in OBJECT_RELS:
        return Role.DIRECT_OBJECT
    return Role.OTHER


@dataclass(frozen=True)
class PronounForm:
    form: str
    gender: Gender
    possessive: bool = False


MASCULINE_FORMS = (
    PronounForm("he", Gender.MASCULINE),
    PronounForm("him", Gender.MASCULINE),
    PronounForm("his", Gender.MASCULINE, possessive=True),
)
FEMININE_FORMS = (
    PronounForm("she", Gender.FEMININE),
    PronounForm("her", Gender.FEMININE, possessive=True),
    PronounForm("hers", Gender.FEMININE, possessive=True),
)
PRONOUN_FORMS = {p.form: p for p in MASCULINE_FORMS + FEMININE_FORMS}
# Recognised only so they can be excluded.
REFLEXIVE_FORMS = {"himself": Gender.MASCULINE, "herself": Gender.FEMININE}


def pronoun_form(surface: str) -> Optional[PronounForm]:
    """Look up a gendered, singular, non-reflexive pronoun; None otherwise."""
    return PRONOUN_FORMS.get(surface.lower())


def pronoun_gender(surface: str) -> Gender:
    form = pronoun_form(surface)
    return form.gender if form else Gender.UNKNOWN


@dataclass(frozen=True)
class Token:
    index: int
    text: str
    pos: str
    head: int
    deprel: str
    char_start: int
    char_end: int
    ner: str = "O"
    lemma: str = "_"
    xpos: str = "_"
    feats: str = "_"
    deps: str = "_"
    misc: str = "_"

    def __post_init__(self):
        if self.char_start >= self.char_end:
            raise StructuralError(f"token {self.index} has empty character range")
        if self.head == self.index:
            raise StructuralError(f"token {self.index} heads itself")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        check_tree(self.tokens)
        for prev, tok in zip(self.tokens, self.tokens[1:]):
            if tok.char_start < prev.char_end:
                raise StructuralError(
                    f"sentence {self.index}: token offsets overlap at token {tok.index}"
                )

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @cached_property
    def root(self) -> int:
        return next(t.index for t in self.tokens if t.head == ROOT)

    @cached_property
    def children(self) -> tuple:
        kids = [[] for _ in self.tokens]
        for t in self.tokens:
            if t.head != ROOT:
                kids[t.head].append(t.index)
        return tuple(tuple(k) for k in kids)

    def depth(self, i: int) -> int:
        d = 0
        while self.tokens[i].head != ROOT:
            i = self.tokens[i].head
            d += 1
        return d

    def ancestors(self, i: int) -> list:
        """Path from ``i`` (inclusive) up to the root."""
        path = [i]
        while self.tokens[i].head != ROOT:
            i = self.tokens[i].head
            path.append(i)
        return path

    def subtree(self, i: int) -> list:
        out, stack = [], [i]
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.children[j])
        return sorted(out)

    def tree_distance(self, a: int, b: int) -> int:
        path_a = self.ancestors(a)
        depth_in_a = {node: k for k, node in enumerate(path_a)}
        for k, node in enumerate(self.ancestors(b)):
            if node in depth_in_a:
                return depth_in_a[node] + k
        raise StructuralError("tokens are not connected")


def check_tree(tokens: Sequence[Token]) -> None:
    """Validate that head links form a single rooted tree (union-find)."""
    n = len(tokens)
    if n == 0:
        raise StructuralError("empty sentence")
    for i, t in enumerate(tokens):
        if t.index != i:
            raise StructuralError(f"token index {t.index} at position {i}")
    roots = [t.index for t in tokens if t.head == ROOT]
    if len(roots) != 1:
        raise StructuralError(f"expected exactly one root, found {len(roots)}")
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in tokens:
        if t.head == ROOT:
            continue
        if not 0 <= t.head < n:
            raise StructuralError(f"token {t.index} has out-of-range head {t.head}")
        ra, rb = find(t.index), find(t.head)
        if ra == rb:
            raise StructuralError(f"cycle through token {t.index}")
        parent[ra] = rb


@dataclass(frozen=True)
class EntitySpan:
    """A contiguous NER run, ``start``/``end`` are token indices (end exclusive)."""

    sentence_index: int
    start: int
    end: int
    label: str


@dataclass(frozen=True)
class Mention:
    kind: MentionKind
    sentence_index: int
    start: int
    end: int
    gender: Gender
    head_index: int
    role: Role
    text: str
    char_start: int
    char_end: int
    is_reflexive: bool = False

    def __post_init__(self):
        if self.end <= self.start:
            raise StructuralError("mention span is empty")
        if not self.start <= self.head_index < self.end:
            raise StructuralError("mention head outside span")

    @property
    def span(self) -> tuple:
        return (self.sentence_index, self.start, self.end)

    def overlaps(self, other: "Mention") -> bool:
        return (
            self.sentence_index == other.sentence_index
            and self.start < other.end
            and other.start < self.end
        )


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple
    text: str
    url: str = ""
    page_title: str = ""
    entities: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "entities", tuple(self.entities))
        last = 0
        for k, sent in enumerate(self.sentences):
            if sent.index != k:
                raise StructuralError(f"sentence {sent.index} stored at position {k}")
            for tok in sent.tokens:
                if tok.char_end > len(self.text) or tok.char_start < last:
                    raise StructuralError(
                        f"token {k}:{tok.index} offsets do not index into text"
                    )
                last = tok.char_end

    @cached_property
    def sentence_offsets(self) -> tuple:
        """Flat index of each sentence's first token."""
        out, total = [], 0
        for s in self.sentences:
            out.append(total)
            total += len(s)
        return tuple(out)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def tokens(self) -> Iterable[Token]:
        for s in self.sentences:
            yield from s.tokens

    def flat(self, sentence_index: int, token_index: int) -> int:
        return self.sentence_offsets[sentence_index] + token_index

    def locate(self, flat_index: int) -> tuple:
        if not 0 <= flat_index < self.n_tokens:
            raise IndexError(f"token {flat_index} outside document {self.id}")
        for k in range(len(self.sentences) - 1, -1, -1):
            if self.sentence_offsets[k] <= flat_index:
                return k, flat_index - self.sentence_offsets[k]
        raise IndexError(flat_index)

    def flat_span(self, mention: Mention) -> tuple:
        base = self.sentence_offsets[mention.sentence_index]
        return (base + mention.start, base + mention.end)

    def span_text(self, sentence_index: int, start: int, end: int) -> str:
        toks = self.sentences[sentence_index].tokens
        return self.text[toks[start].char_start : toks[end - 1].char_end]

    def char_to_tokens(self, char_start: int, char_end: int) -> tuple:
        """Tokens overlapping a character range as (sentence, start, end).

        Raises ValueError when the range covers no token or straddles a
        sentence boundary.
        """
        hits = [
            (s.index, t.index)
            for s in self.sentences
            for t in s.tokens
            if t.char_start < char_end and char_start < t.char_end
        ]
        if not hits:
            raise ValueError(f"characters {char_start}:{char_end} align to no token")
        sents = {h[0] for h in hits}
        if len(sents) != 1:
            raise ValueError(f"characters {char_start}:{char_end} straddle sentences")
        return hits[0][0], hits[0][1], hits[-1][1] + 1


def mention_head(start: int, end: int, sentence: Sentence) -> int:
    """Index of the token in ``[start, end)`` governed from outside the span.

    The rightmost such token wins when there are several.
    """
    if not 0 <= start < end <= len(sentence):
        raise StructuralError(f"span {start}:{end} outside sentence")
    heads = [
        i
        for i in range(start, end)
        if sentence.tokens[i].head == ROOT or not start <= sentence.tokens[i].head < end
    ]
    if not heads:
        raise StructuralError(f"span {start}:{end} has no externally governed token")
    return heads[-1]


def make_mention(
    doc: Document,
    sentence_index: int,
    start: int,
    end: int,
    kind: MentionKind,
    gender: Gender = Gender.UNKNOWN,
    is_reflexive: bool = False,
) -> Mention:
    sent = doc.sentences[sentence_index]
    head = mention_head(start, end, sent)
    toks = sent.tokens
    return Mention(
        kind=kind,
        sentence_index=sentence_index,
        start=start,
        end=end,
        gender=gender,
        head_index=head,
        role=role_of(toks[head].deprel),
        text=doc.span_text(sentence_index, start, end),
        char_start=toks[start].char_start,
        char_end=toks[end - 1].char_end,
        is_reflexive=is_reflexive,
    )


def token_distance(a: tuple, b: tuple) -> int:
    """Number of tokens strictly between two flat ``(start, end)`` spans."""
    (a0, a1), (b0, b1) = a, b
    if a0 < b1 and b0 < a1:
        raise ValueError(f"spans {a} and {b} overlap")
    return max(b0 - a1, a0 - b1)


def syntactic_distance(a: int, b: int, doc: Document) -> int:
    """Dependency-path length between two flat token indices.

    Across sentences: depth of each token plus one per sentence boundary.
    """
    sa, ia = doc.locate(a)
    sb, ib = doc.locate(b)
    if sa == sb:
        return doc.sentences[sa].tree_distance(ia, ib)
    return doc.sentences[sa].depth(ia) + doc.sentences[sb].depth(ib) + abs(sa - sb)

