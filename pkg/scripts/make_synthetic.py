"""Generate the bundled synthetic corpus and simulated rater labels.

    python3 scripts/make_synthetic.py --docs 160 --seed 7 --out data/synthetic
"""

import argparse
from pathlib import Path

import numpy as np

from ambicoref.cli import write_rater_labels
from ambicoref.extraction import extract_candidates
from ambicoref.synthetic import corpus_text, make_corpus, parse_synthetic, simulate_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--docs", type=int, default=160)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--accuracy", type=float, default=0.85, help="per-rater accuracy")
    ap.add_argument("--out", type=Path, default=Path("data/synthetic"))
    args = ap.parse_args()

    syn = make_corpus(args.docs, seed=args.seed)
    docs = parse_synthetic(syn)
    rng = np.random.default_rng(args.seed + 1)
    labels = {}
    for s, doc in zip(syn, docs):
        # candidate ids follow the extract command: <doc id>-<k>
        for k, ctx in enumerate(extract_candidates(doc)):
            gold = s.label_for(ctx.name_a.text, ctx.name_b.text)
            labels[f"{doc.id}-{k}"] = simulate_labels(gold, rng, args.accuracy)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "corpus.conllu").write_text(corpus_text(syn), encoding="utf-8")
    (args.out / "labels.tsv").write_bytes(write_rater_labels(labels))
    print(f"{len(docs)} documents, {len(labels)} candidate contexts -> {args.out}")


if __name__ == "__main__":
    main()
