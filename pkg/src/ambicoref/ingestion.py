"""Readers and writers for the corpus, example, candidate and prediction files.

Corpus files are CoNLL-U with an ``NER=`` BIO tag in MISC and document
metadata in ``# newdoc id``, ``# url`` and ``# page_title`` comments.  The
document text is rebuilt from token forms: one space between tokens unless
MISC carries ``SpaceAfter=No``, one space between sentences.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Optional

from .corpus import ROOT, Document, EntitySpan, Sentence, StructuralError, Token, pronoun_gender


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(ValueError):
    def __init__(self, message, ids=()):
        self.ids = list(ids)
        super().__init__(message)


# --------------------------------------------------------------------------
# Corpus (CoNLL-U style)
# --------------------------------------------------------------------------

def _misc_items(misc: str) -> list:
    return [] if misc in ("", "_") else misc.split("|")


def _ner_tag(misc: str) -> str:
    for item in _misc_items(misc):
        if item.startswith("NER="):
            return item[4:]
    return "O"


def _space_after(misc: str) -> bool:
    return "SpaceAfter=No" not in _misc_items(misc)


class _DocBuilder:
    def __init__(self, doc_id):
        self.id = doc_id
        self.url = ""
        self.page_title = ""
        self.sentences = []  # list of (rows, first line number)

    def build(self) -> Document:
        text_parts = []
        pos = 0
        sentences, entities = [], []
        for s_idx, (rows, first_line) in enumerate(self.sentences):
            if s_idx and _space_after(self.sentences[s_idx - 1][0][-1][1][9]):
                text_parts.append(" ")
                pos += 1
            tokens = []
            open_label = None
            open_start = None
            for t_idx, (lineno, cols) in enumerate(rows):
                form, misc = cols[1], cols[9]
                start = pos
                text_parts.append(form)
                pos += len(form)
                if t_idx < len(rows) - 1 and _space_after(misc):
                    text_parts.append(" ")
                    pos += 1
                try:
                    head = int(cols[6])
                except ValueError:
                    raise ParseError(f"non-integer HEAD {cols[6]!r}", lineno) from None
                if head < 0 or head > len(rows):
                    raise ParseError(f"HEAD {head} out of range", lineno)
                if head == t_idx + 1:
                    raise ParseError("token is its own head", lineno)
                if not form:
                    raise ParseError("empty FORM", lineno)
                tag = _ner_tag(misc)
                if tag == "O":
                    label = None
                elif tag[:2] in ("B-", "I-") and len(tag) > 2:
                    label = tag[2:]
                else:
                    raise ParseError(f"malformed NER tag {tag!r}", lineno)
                if tag.startswith("I-") and open_label != label:
                    raise ParseError(f"{tag} not preceded by B-{label}", lineno)
                if open_label is not None and not (tag.startswith("I-") and label == open_label):
                    entities.append(EntitySpan(s_idx, open_start, t_idx, open_label))
                    open_label = None
                if tag.startswith("B-"):
                    open_label, open_start = label, t_idx
                tokens.append(
                    Token(
                        index=t_idx,
                        text=form,
                        pos=cols[3],
                        head=head - 1 if head else ROOT,
                        deprel=cols[7],
                        char_start=start,
                        char_end=start + len(form),
                        ner=tag,
                        lemma=cols[2],
                        xpos=cols[4],
                        feats=cols[5],
                        deps=cols[8],
                        misc=misc,
                    )
                )
            if open_label is not None:
                entities.append(EntitySpan(s_idx, open_start, len(rows), open_label))
            try:
                sentences.append(Sentence(tokens, s_idx))
            except StructuralError as e:
                raise ParseError(str(e), first_line) from None
        return Document(
            id=self.id,
            sentences=sentences,
            text="".join(text_parts),
            url=self.url,
            page_title=self.page_title,
            entities=entities,
        )


def parse_corpus(data) -> list:
    """Parse CoNLL-U-style bytes (or str) into Documents."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    docs = []
    current: Optional[_DocBuilder] = None
    rows: list = []
    first_line = None

    def flush_sentence():
        nonlocal rows, current
        if rows:
            if current is None:
                current = _DocBuilder(f"doc{len(docs)}")
            current.sentences.append((rows, first_line))
            rows = []

    def flush_doc():
        nonlocal current
        flush_sentence()
        if current is not None and current.sentences:
            docs.append(current.build())
        current = None

    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            flush_sentence()
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            key, value = key.strip(), value.strip()
            if key == "newdoc id" or key == "newdoc":
                flush_doc()
                current = _DocBuilder(value or f"doc{len(docs)}")
            elif key in ("url", "page_title"):
                if current is None:
                    current = _DocBuilder(f"doc{len(docs)}")
                setattr(current, key, value)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"expected 10 columns, found {len(cols)}", lineno)
        if "-" in cols[0] or "." in cols[0]:
            # multiword ranges and empty nodes carry no tree position
            continue
        try:
            token_id = int(cols[0])
        except ValueError:
            raise ParseError(f"non-integer ID {cols[0]!r}", lineno) from None
        if token_id != len(rows) + 1:
            raise ParseError(f"token ID {token_id} out of sequence", lineno)
        if not rows:
            first_line = lineno
        rows.append((lineno, cols))
    flush_doc()
    return docs


def serialize_corpus(docs: Iterable[Document]) -> bytes:
    out = []
    for doc in docs:
        out.append(f"# newdoc id = {doc.id}")
        if doc.url:
            out.append(f"# url = {doc.url}")
        if doc.page_title:
            out.append(f"# page_title = {doc.page_title}")
        for sent in doc.sentences:
            first, last = sent.tokens[0], sent.tokens[-1]
            out.append(f"# text = {doc.text[first.char_start:last.char_end]}")
            for t in sent.tokens:
                head = 0 if t.head == ROOT else t.head + 1
                cols = [
                    str(t.index + 1), t.text, t.lemma, t.pos, t.xpos, t.feats,
                    str(head), t.deprel, t.deps, t.misc,
                ]
                out.append("\t".join(cols))
            out.append("")
    return ("\n".join(out) + ("\n" if out else "")).encode("utf-8")


# --------------------------------------------------------------------------
# Example, candidate and prediction TSVs
# --------------------------------------------------------------------------

EXAMPLE_HEADER = (
    "ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset", "A-coref",
    "B", "B-offset", "B-coref", "URL",
)
CANDIDATE_HEADER = EXAMPLE_HEADER + ("Pattern", "Page-entity")
PREDICTION_HEADER = ("ID", "A-coref", "B-coref")


def parse_bool(literal: str) -> bool:
    up = literal.strip().upper()
    if up == "TRUE":
        return True
    if up == "FALSE":
        return False
    raise ValueError(f"unknown boolean literal {literal!r}")


def format_bool(value: bool) -> str:
    return "TRUE" if value else "FALSE"


@dataclass(frozen=True)
class ExampleRecord:
    id: str
    text: str
    pronoun: str
    pronoun_offset: int
    a: str
    a_offset: int
    a_coref: bool
    b: str
    b_offset: int
    b_coref: bool
    url: str = ""

    @property
    def gender(self):
        return pronoun_gender(self.pronoun)

    @property
    def pronoun_span(self) -> tuple:
        return (self.pronoun_offset, self.pronoun_offset + len(self.pronoun))

    @property
    def a_span(self) -> tuple:
        return (self.a_offset, self.a_offset + len(self.a))

    @property
    def b_span(self) -> tuple:
        return (self.b_offset, self.b_offset + len(self.b))

    def problems(self) -> list:
        out = []
        for name, surface, offset in (
            ("pronoun", self.pronoun, self.pronoun_offset),
            ("A", self.a, self.a_offset),
            ("B", self.b, self.b_offset),
        ):
            if not surface or self.text[offset : offset + len(surface)] != surface or offset < 0:
                out.append(f"{name} {surface!r} not found at offset {offset}")
        if self.a_coref and self.b_coref:
            out.append("both A-coref and B-coref are TRUE")
        return out


@dataclass(frozen=True)
class CandidateRecord(ExampleRecord):
    """An example row plus the extraction pattern and page-entity flag."""

    pattern: str = ""
    page_entity: bool = False


def _check_text(rec) -> None:
    for f in fields(rec):
        value = getattr(rec, f.name)
        if isinstance(value, str) and ("\t" in value or "\n" in value or "\r" in value):
            raise ValidationError(f"{rec.id}: field {f.name} contains a tab or newline", [rec.id])


def _validate(records) -> None:
    bad = [(r.id, p) for r in records for p in r.problems()]
    if bad:
        listing = "; ".join(f"{i}: {p}" for i, p in bad[:10])
        raise ValidationError(f"{len(bad)} invalid record(s): {listing}", [i for i, _ in bad])


def _rows(data, header) -> list:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines:
        raise ParseError("missing header row", 1)
    got = tuple(lines[0].split("\t"))
    if got != tuple(header):
        raise ParseError(f"header {got} does not match {tuple(header)}", 1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != len(header):
            raise ParseError(f"expected {len(header)} columns, found {len(cols)}", lineno)
        rows.append((lineno, cols))
    return rows


def _example_kwargs(lineno, cols) -> dict:
    try:
        return dict(
            id=cols[0], text=cols[1], pronoun=cols[2], pronoun_offset=int(cols[3]),
            a=cols[4], a_offset=int(cols[5]), a_coref=parse_bool(cols[6]),
            b=cols[7], b_offset=int(cols[8]), b_coref=parse_bool(cols[9]), url=cols[10],
        )
    except ValueError as e:
        raise ParseError(str(e), lineno) from None


def _example_cols(r) -> list:
    return [
        r.id, r.text, r.pronoun, str(r.pronoun_offset), r.a, str(r.a_offset),
        format_bool(r.a_coref), r.b, str(r.b_offset), format_bool(r.b_coref), r.url,
    ]


def _dump(header, rows) -> bytes:
    lines = ["\t".join(header)] + ["\t".join(r) for r in rows]
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_examples(data) -> list:
    records = [ExampleRecord(**_example_kwargs(n, c)) for n, c in _rows(data, EXAMPLE_HEADER)]
    _validate(records)
    return records


def write_examples(records) -> bytes:
    records = list(records)
    for r in records:
        _check_text(r)
    _validate(records)
    return _dump(EXAMPLE_HEADER, (_example_cols(r) for r in records))


def read_candidates(data) -> list:
    records = []
    for n, cols in _rows(data, CANDIDATE_HEADER):
        kw = _example_kwargs(n, cols)
        try:
            kw.update(pattern=cols[11], page_entity=parse_bool(cols[12]))
        except ValueError as e:
            raise ParseError(str(e), n) from None
        records.append(CandidateRecord(**kw))
    _validate(records)
    return records


def write_candidates(records) -> bytes:
    records = list(records)
    for r in records:
        _check_text(r)
    _validate(records)
    return _dump(
        CANDIDATE_HEADER,
        (_example_cols(r) + [r.pattern, format_bool(r.page_entity)] for r in records),
    )


def read_predictions(data) -> dict:
    preds = {}
    for lineno, cols in _rows(data, PREDICTION_HEADER):
        if cols[0] in preds:
            raise ParseError(f"duplicate id {cols[0]!r}", lineno)
        try:
            preds[cols[0]] = (parse_bool(cols[1]), parse_bool(cols[2]))
        except ValueError as e:
            raise ParseError(str(e), lineno) from None
    return preds


def write_predictions(preds: dict) -> bytes:
    return _dump(
        PREDICTION_HEADER,
        ([k, format_bool(a), format_bool(b)] for k, (a, b) in sorted(preds.items())),
    )


def read_tsv(data, header) -> list:
    """Rows of a headed TSV as lists of strings (header checked)."""
    return [cols for _, cols in _rows(data, header)]


def write_tsv(header, rows) -> bytes:
    return _dump(header, ([str(c) for c in r] for r in rows))
