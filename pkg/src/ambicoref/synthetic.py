"""Template-generated annotated documents for tests and demonstrations.

Each document holds one ambiguous-pronoun context built from a small set of
hand-parsed sentence templates, optionally preceded by a distractor
sentence mentioning a third person.  Gold antecedents are fixed per
template; rater labels are simulated around them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document
from .curation import RaterLabel
from .ingestion import parse_corpus

FIRST = [
    "Alice", "Maria", "Kenji", "Omar", "Lena", "Tomas", "Priya", "Ruth", "Ivan", "Chloe",
    "Dmitri", "Hana", "Marco", "Nadia", "Felix", "Greta", "Jonas", "Leila", "Pavel", "Sofia",
]
LAST = [
    "Abbott", "Barros", "Castillo", "Dunmore", "Eriksen", "Fujita", "Garber", "Holm",
    "Ibarra", "Jansen", "Kovacs", "Lindqvist", "Moreau", "Novak", "Okafor", "Petrov",
    "Quinn", "Rossi", "Sato", "Tanaka", "Ueda", "Varga", "Weller", "Yilmaz", "Zeller",
]
PRONOUNS = {
    ("M", "subj"): "he", ("M", "obj"): "him", ("M", "poss"): "his",
    ("F", "subj"): "she", ("F", "obj"): "her", ("F", "poss"): "her",
}

# A template token is (key, form, upos, head_key, deprel).  Forms N0/N1/N2
# expand to a two-token person name; P:<case> becomes a pronoun.  Keys are
# local to the template; head_key None marks the sentence root.
TEMPLATES = {
    "final_subj": dict(
        pattern="FinalPro",
        gold="A",
        sentences=[
            [("n1", "N1", "PROPN", "v", "nsubj"), ("v", "criticized", "VERB", None, "root"),
             ("n2", "N2", "PROPN", "v", "obj"), ("dur", "during", "ADP", "mtg", "case"),
             ("the", "the", "DET", "mtg", "det"), ("mtg", "meeting", "NOUN", "v", "obl"),
             (".", ".", "PUNCT", "v", "punct")],
            [("p", "P:subj", "PRON", "v", "nsubj"), ("adv", "later", "ADV", "v", "advmod"),
             ("v", "apologized", "VERB", None, "root"), (".", ".", "PUNCT", "v", "punct")],
        ],
    ),
    "final_obj": dict(
        pattern="FinalPro",
        gold="B",
        sentences=[
            [("n1", "N1", "PROPN", "v", "nsubj"), ("v", "thanked", "VERB", None, "root"),
             ("n2", "N2", "PROPN", "v", "obj"), ("aft", "after", "ADP", "game", "case"),
             ("the", "the", "DET", "game", "det"), ("game", "game", "NOUN", "v", "obl"),
             (",", ",", "PUNCT", "v2", "punct"), ("and", "and", "CCONJ", "v2", "cc"),
             ("the2", "the", "DET", "coach", "det"), ("coach", "coach", "NOUN", "v2", "nsubj"),
             ("v2", "praised", "VERB", "v", "conj"), ("p", "P:obj", "PRON", "v2", "obj"),
             (".", ".", "PUNCT", "v", "punct")],
        ],
    ),
    "final_poss": dict(
        pattern="FinalPro",
        gold="B",
        sentences=[
            [("n1", "N1", "PROPN", "v", "nsubj"), ("v", "interviewed", "VERB", None, "root"),
             ("n2", "N2", "PROPN", "v", "obj"), ("in", "in", "ADP", "city", "case"),
             ("city", "Lisbon", "PROPN", "v", "obl"), (".", ".", "PUNCT", "v", "punct")],
            [("p", "P:poss", "PRON", "book", "nmod:poss"), ("book", "book", "NOUN", "v", "nsubj"),
             ("v", "appeared", "VERB", None, "root"), ("adv", "soon", "ADV", "v", "advmod"),
             ("aft", "after", "ADV", "v", "advmod"), (".", ".", "PUNCT", "v", "punct")],
        ],
    ),
    "medial": dict(
        pattern="MedialPro",
        gold="A",
        sentences=[
            [("n1", "N1", "PROPN", "farm", "nmod:poss"), ("s", "'s", "PART", "n1", "case"),
             ("farm", "farm", "NOUN", "v", "nsubj:pass"), ("aux", "was", "AUX", "v", "aux:pass"),
             ("v", "sold", "VERB", None, "root"), (".", ".", "PUNCT", "v", "punct")],
            [("aft", "After", "ADP", "death", "case"), ("p", "P:poss", "PRON", "death", "nmod:poss"),
             ("death", "death", "NOUN", "v", "obl"), (",", ",", "PUNCT", "v", "punct"),
             ("n2", "N2", "PROPN", "v", "nsubj"), ("v", "acquired", "VERB", None, "root"),
             ("the", "the", "DET", "land", "det"), ("land", "land", "NOUN", "v", "obj"),
             (".", ".", "PUNCT", "v", "punct")],
        ],
    ),
    "initial_when": dict(
        pattern="InitialPro",
        gold="A",
        sentences=[
            [("when", "When", "SCONJ", "arr", "mark"), ("p", "P:subj", "PRON", "arr", "nsubj"),
             ("arr", "arrived", "VERB", "v", "advcl"), (",", ",", "PUNCT", "v", "punct"),
             ("n1", "N1", "PROPN", "v", "nsubj"), ("v", "greeted", "VERB", None, "root"),
             ("n2", "N2", "PROPN", "v", "obj"), ("adv", "warmly", "ADV", "v", "advmod"),
             (".", ".", "PUNCT", "v", "punct")],
        ],
    ),
    "initial_judging": dict(
        pattern="InitialPro",
        gold="B",
        sentences=[
            [("jud", "Judging", "VERB", "v", "advcl"), ("that", "that", "SCONJ", "rdy", "mark"),
             ("p", "P:subj", "PRON", "rdy", "nsubj"), ("cop", "was", "AUX", "rdy", "cop"),
             ("rdy", "ready", "ADJ", "jud", "ccomp"), (",", ",", "PUNCT", "v", "punct"),
             ("n1", "N1", "PROPN", "v", "nsubj"), ("v", "hired", "VERB", None, "root"),
             ("n2", "N2", "PROPN", "v", "obj"), (".", ".", "PUNCT", "v", "punct")],
        ],
    ),
}
DISTRACTOR = [
    ("n0", "N0", "PROPN", "v", "nsubj"), ("v", "wrote", "VERB", None, "root"),
    ("ab", "about", "ADP", "ev", "case"), ("the", "the", "DET", "ev", "det"),
    ("ev", "events", "NOUN", "v", "obl"), (".", ".", "PUNCT", "v", "punct"),
]
TEMPLATE_WEIGHTS = {
    "final_subj": 0.3, "final_obj": 0.25, "final_poss": 0.2,
    "medial": 0.125, "initial_when": 0.0625, "initial_judging": 0.0625,
}


@dataclass(frozen=True)
class SyntheticDoc:
    conllu: str
    template: str
    gold_name: str  # surface of the template's antecedent
    gender: str

    def label_for(self, name_a: str, name_b: str) -> str:
        """Gold answer for an extracted context: "A", "B" or "Neither"."""
        if name_a == self.gold_name:
            return "A"
        if name_b == self.gold_name:
            return "B"
        return "Neither"


def _render(sentence, names, gender) -> list:
    """Expand one template sentence to CoNLL-U rows (10 columns each)."""
    expanded, key_pos = [], {}
    for key, form, upos, head_key, rel in sentence:
        if form in names:
            first, last = names[form]
            # head-final names: the surname carries the slot's relation
            expanded.append((first, "PROPN", ("#", key), "compound", "B-PERSON"))
            expanded.append((last, "PROPN", head_key, rel, "I-PERSON"))
            key_pos[key] = len(expanded)
        elif form.startswith("P:"):
            pron = PRONOUNS[(gender, form[2:])]
            expanded.append((pron.capitalize() if not expanded else pron, upos, head_key, rel, "O"))
            key_pos[key] = len(expanded)
        else:
            expanded.append((form, upos, head_key, rel, "O"))
            key_pos[key] = len(expanded)
    rows = []
    for i, (form, upos, head_key, rel, ner) in enumerate(expanded, start=1):
        if head_key is None:
            head = 0
        elif isinstance(head_key, tuple):
            head = key_pos[head_key[1]]
        else:
            head = key_pos[head_key]
        misc = f"NER={ner}" if ner != "O" else "_"
        nxt = expanded[i][0] if i < len(expanded) else None
        if nxt in (".", ",", "'s"):
            misc = "SpaceAfter=No" if misc == "_" else misc + "|SpaceAfter=No"
        rows.append("\t".join([str(i), form, "_", upos, "_", "_", str(head), rel, "_", misc]))
    return rows


def make_document(doc_id: str, rng: np.random.Generator, template: str = None,
                  gender: str = None, p_masc: float = 0.6) -> SyntheticDoc:
    template = template or rng.choice(list(TEMPLATE_WEIGHTS), p=list(TEMPLATE_WEIGHTS.values()))
    gender = gender or ("M" if rng.random() < p_masc else "F")
    lasts = rng.choice(LAST, size=3, replace=False)
    firsts = rng.choice(FIRST, size=3, replace=False)
    names = {f"N{k}": (str(firsts[k]), str(lasts[k])) for k in range(3)}
    spec = TEMPLATES[template]
    sentences = list(spec["sentences"])
    if rng.random() < 0.7:
        sentences = [DISTRACTOR] + sentences
    page = rng.choice(["N1", "N2", "N0", None], p=[0.3, 0.15, 0.25, 0.3])
    if page is None:
        title = f"{rng.choice(['History', 'Culture', 'Geography'])} of {rng.choice(['Lisbon', 'Oslo', 'Kyoto'])}"
    else:
        title = " ".join(names[page]) + f" ({doc_id})"
    # topic pages are shared between documents, so URL groups have several members
    url = f"https://en.wikipedia.org/wiki/{title.replace(' ', '_')}"
    lines = [f"# newdoc id = {doc_id}", f"# url = {url}", f"# page_title = {title}"]
    for sent in sentences:
        lines += _render(sent, names, gender)
        lines.append("")
    gold_name = " ".join(names["N1" if spec["gold"] == "A" else "N2"])
    return SyntheticDoc("\n".join(lines) + "\n", str(template), gold_name, gender)


def make_corpus(n_docs: int, seed: int = 0, p_masc: float = 0.6) -> list:
    rng = np.random.default_rng(seed)
    return [make_document(f"syn{k:04d}", rng, p_masc=p_masc) for k in range(n_docs)]


def corpus_text(docs) -> str:
    return "".join(d.conllu + "\n" for d in docs)


def parse_synthetic(docs) -> list:
    return parse_corpus(corpus_text(docs))


def simulate_labels(gold: str, rng: np.random.Generator, accuracy: float = 0.85) -> tuple:
    """Three noisy rater labels around a gold "A", "B" or "Neither" answer."""
    truth = {"A": RaterLabel.NAME_A, "B": RaterLabel.NAME_B}.get(gold, RaterLabel.NEITHER)
    others = [l for l in RaterLabel if l != truth]
    weights = np.array([4.0 if l in (RaterLabel.NAME_A, RaterLabel.NAME_B) else
                        2.0 if l == RaterLabel.NEITHER else 1.0 for l in others])
    out = []
    for _ in range(3):
        if rng.random() < accuracy:
            out.append(truth)
        else:
            out.append(others[int(rng.choice(len(others), p=weights / weights.sum()))])
    return tuple(out)


def synthetic_attention(text_doc: Document, gold_span: tuple, pronoun_span: tuple,
                        rng: np.random.Generator, record_id: str, n_layers: int = 6,
                        n_heads: int = 8, signal_heads=((3, 7), (5, 5)), strength: float = 1.5):
    """Random softmax attention over whitespace tokens, with a few heads where
    the gold name's tokens attend strongly to the pronoun."""
    from .attention import AttentionRecord

    toks = [t for t in text_doc.tokens()]
    n = len(toks)
    logits = rng.normal(size=(n_layers, n_heads, n, n))
    p_idx = [i for i, t in enumerate(toks) if t.char_start < pronoun_span[1] and pronoun_span[0] < t.char_end]
    g_idx = [i for i, t in enumerate(toks) if t.char_start < gold_span[1] and gold_span[0] < t.char_end]
    for l, h in signal_heads:
        for i in g_idx:
            for j in p_idx:
                logits[l, h, i, j] += strength
    w = np.exp(logits - logits.max(axis=-1, keepdims=True))
    w /= w.sum(axis=-1, keepdims=True)
    return AttentionRecord(
        id=record_id,
        subtokens=[t.text for t in toks],
        offsets=[(t.char_start, t.char_end) for t in toks],
        weights=w,
        n_layers=n_layers,
        n_heads=n_heads,
    )
