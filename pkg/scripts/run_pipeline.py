"""Run the full pipeline on the bundled synthetic corpus and print score tables.

    python3 scripts/run_pipeline.py --work /tmp/ambicoref-run --seed 1

Steps: extract, sample, curate, split, then every resolver on the test split
(attention for the transformer resolvers is simulated), score and analyze.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from ambicoref.attention import dump_attention
from ambicoref.cli import main as cli
from ambicoref.ingestion import parse_corpus, read_examples
from ambicoref.synthetic import synthetic_attention

DATA = Path(__file__).resolve().parent.parent / "data" / "synthetic"
HEURISTICS = ["random", "token-distance", "topical", "syntactic", "parallelism"]


def run(argv):
    rc = cli([str(a) for a in argv])
    if rc:
        raise SystemExit(f"step failed ({rc}): {' '.join(map(str, argv))}")


def write_attention(examples_path, corpus_path, out, seed):
    by_text = {d.text: d for d in parse_corpus(corpus_path.read_bytes())}
    rng = np.random.default_rng(seed)
    recs = []
    for ex in read_examples(examples_path.read_bytes()):
        gold = ex.a_span if ex.a_coref else ex.b_span if ex.b_coref else (0, 0)
        rec = synthetic_attention(by_text[ex.text], gold, ex.pronoun_span, rng, ex.id)
        rec.weights = np.round(rec.weights, 6)
        recs.append(rec)
    out.write_bytes(dump_attention(recs))


def pipeline(work: Path, seed: int = 1, data: Path = DATA, dev=40, test=40, transformers=True) -> dict:
    work.mkdir(parents=True, exist_ok=True)
    corpus, labels = data / "corpus.conllu", data / "labels.tsv"
    run(["extract", "--input", corpus, "--output", work / "candidates.tsv"])
    run(["sample", "--input", work / "candidates.tsv", "--output", work / "sampled.tsv",
         "--seed", seed, "--report", work / "shortfalls.tsv"])
    run(["curate", "--input", work / "sampled.tsv", "--labels", labels, "--output",
         work / "examples.tsv", "--seed", seed, "--report", work / "agreement.json"])
    run(["split", "--input", work / "examples.tsv", "--output", work, "--dev-size", dev,
         "--test-size", test, "--seed", seed, "--report", work / "split.json"])
    gold = work / "test.tsv"
    systems = {s: ["--strategy", s] for s in HEURISTICS}
    systems["url"] = ["--strategy", "url", "--setting", "page"]
    if transformers:
        write_attention(work / "examples.tsv", corpus, work / "attention.jsonl", seed)
        att = ["--attention", work / "attention.jsonl"]
        systems["transformer-single"] = ["--strategy", "transformer-single", "--head", "L3H7", *att]
        systems["transformer-multi"] = ["--strategy", "transformer-multi", "--train",
                                        work / "dev.tsv", *att]
    scores = {}
    for name, flags in systems.items():
        pred = work / f"pred-{name}.tsv"
        run(["resolve", "--input", gold, "--corpus", corpus, "--seed", seed,
             "--output", pred, *flags])
        run(["score", "--input", gold, "--predictions", pred, "--format", "json",
             "--output", work / f"score-{name}.json"])
        scores[name] = json.loads((work / f"score-{name}.json").read_text())
    four = [work / f"pred-{s}.tsv" for s in ("random", "token-distance", "syntactic", "parallelism")]
    run(["analyze", "--input", gold, "--predictions", *four, "--output", work / "difficulty.json"])
    return scores


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", type=Path, default=Path("runs/pipeline"))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--data", type=Path, default=DATA)
    args = ap.parse_args()
    t0 = time.perf_counter()
    scores = pipeline(args.work, args.seed, args.data)
    print(f"{'system':<20} {'M F1':>6} {'F F1':>6} {'O F1':>6} {'B':>5}")
    for name, s in scores.items():
        b = "NA" if s["B"] is None else f"{s['B']:.2f}"
        print(f"{name:<20} {s['M']['f1']:6.1f} {s['F']['f1']:6.1f} {s['O']['f1']:6.1f} {b:>5}")
    print("difficulty:", (args.work / "difficulty.json").read_text().strip().replace("\n", " "))
    print(f"done in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
