"""Command-line front end: ``ambicoref <command> [flags]``.

Every command reads files and writes files; outputs are sorted by example
id.  Settings come from flags, optionally preceded by a ``key=value`` config
file given with ``--config`` (flags win).  Failures print one JSON object on
stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import attention as att
from .curation import (
    RaterLabel,
    SamplerTargets,
    agreement_stats,
    consensus,
    final_filter,
    sample_diverse,
)
from .extraction import extract_candidates, to_record
from .ingestion import (
    ExampleRecord,
    ParseError,
    ValidationError,
    parse_corpus,
    read_candidates,
    read_examples,
    read_predictions,
    read_tsv,
    write_candidates,
    write_examples,
    write_predictions,
    write_tsv,
)
from .resolvers import (
    AlignmentError,
    Mode,
    ResolverConfig,
    Setting,
    Strategy,
    candidate_antecedents,
    finish,
    pronoun_mention,
    resolve_example,
)
from .scorer import difficulty_buckets, pair_verdicts, score

TRANSFORMER_SINGLE = "transformer-single"
TRANSFORMER_MULTI = "transformer-multi"
STRATEGIES = [s.value for s in Strategy] + [TRANSFORMER_SINGLE, TRANSFORMER_MULTI]
LABELS_HEADER = ("ID", "Label-1", "Label-2", "Label-3")
SHORTFALL_HEADER = ("Stratum", "Target", "Achieved")
STOCHASTIC = {"sample", "curate", "split", "resolve"}


class CommandError(Exception):
    """A user-facing failure reported as structured JSON."""

    def __init__(self, kind: str, message: str, **details):
        super().__init__(message)
        self.kind = kind
        self.details = details


@dataclass
class RunConfig:
    command: str
    input: Optional[Path] = None
    output: Optional[Path] = None
    seed: Optional[int] = None
    setting: str = Setting.SNIPPET.value
    mode: str = Mode.STANDARD.value
    strategy: str = Strategy.PARALLELISM.value
    dev_size: Optional[int] = None
    test_size: Optional[int] = None
    corpus: Optional[Path] = None
    labels: Optional[Path] = None
    attention: Optional[Path] = None
    head: Optional[str] = None
    train: Optional[Path] = None
    k: int = 3
    n_trees: int = 100
    report: Optional[Path] = None
    predictions: list = field(default_factory=list)
    format: str = "tsv"

    def __post_init__(self):
        if self.seed is not None and not -(2**63) <= self.seed < 2**64:
            raise CommandError("config", "seed must fit in 64 bits")
        if self.input is None:
            raise CommandError("config", "--input is required")
        if self.command in STOCHASTIC and self.seed is None:
            raise CommandError("config", f"{self.command} needs --seed")
        for name in ("input", "corpus", "labels", "attention", "train"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise CommandError("io", f"--{name} file not found: {p}", path=str(p))
        for p in self.predictions:
            if not Path(p).is_file():
                raise CommandError("io", f"prediction file not found: {p}", path=str(p))


# --------------------------------------------------------------------------
# Argument handling
# --------------------------------------------------------------------------

def _add_common(p, *, seed=False):
    p.add_argument("--input", type=Path)
    p.add_argument("--output", type=Path)
    p.add_argument("--config", type=Path, help="key=value file; flags override it")
    if seed:
        p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ambicoref", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="CoNLL-U corpus -> candidate contexts TSV")
    _add_common(p)

    p = sub.add_parser("sample", help="diversity-balanced sub-sample of candidates")
    _add_common(p, seed=True)
    p.add_argument("--labels", type=Path, help="rater labels, enables label balancing")
    p.add_argument("--report", type=Path, help="shortfall TSV")

    p = sub.add_parser("curate", help="candidates + rater labels -> examples TSV")
    _add_common(p, seed=True)
    p.add_argument("--labels", type=Path)
    p.add_argument("--report", type=Path, help="agreement statistics JSON")

    p = sub.add_parser("split", help="URL-disjoint dev/test/validation split")
    _add_common(p, seed=True)
    p.add_argument("--dev-size", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--report", type=Path)

    p = sub.add_parser("resolve", help="run a resolver over examples")
    _add_common(p, seed=True)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--setting", choices=[s.value for s in Setting])
    p.add_argument("--attention", type=Path)
    p.add_argument("--head", help="attention head for transformer-single, e.g. L3H7")
    p.add_argument("--train", type=Path, help="gold examples for transformer-multi")
    p.add_argument("--k", type=int, help="heads kept by chi-squared selection")
    p.add_argument("--n-trees", type=int)

    p = sub.add_parser("score", help="examples + predictions -> score report")
    _add_common(p)
    p.add_argument("--predictions", type=Path, nargs=1)
    p.add_argument("--format", choices=["tsv", "json"])

    p = sub.add_parser("analyze", help="difficulty buckets over four systems")
    _add_common(p)
    p.add_argument("--predictions", type=Path, nargs=4)
    return parser


_INT_KEYS = {"seed", "dev_size", "test_size", "k", "n_trees"}
_PATH_KEYS = {"input", "output", "corpus", "labels", "attention", "train", "report"}


def read_config_file(path: Path) -> dict:
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CommandError("config", f"{path}:{lineno}: expected key=value", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in _INT_KEYS:
            try:
                out[key] = int(value)
            except ValueError:
                raise CommandError("config", f"{path}:{lineno}: {key} must be an integer") from None
        elif key in _PATH_KEYS:
            out[key] = Path(value)
        elif key == "predictions":
            out[key] = [Path(v) for v in value.split(",")]
        else:
            out[key] = value
    return out


def make_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None) is not None:
        if not args.config.is_file():
            raise CommandError("io", f"config file not found: {args.config}")
        values.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            values[key] = value
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(values) - known)
    if unknown:
        raise CommandError("config", f"unknown config keys: {unknown}")
    return RunConfig(**values)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _write(path: Optional[Path], data: bytes) -> None:
    if path is None:
        sys.stdout.buffer.write(data)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _by_id(records) -> list:
    return sorted(records, key=lambda r: r.id)


def cmd_extract(cfg: RunConfig) -> None:
    docs = parse_corpus(cfg.input.read_bytes())
    records = []
    for doc in docs:
        for k, ctx in enumerate(extract_candidates(doc)):
            records.append(to_record(ctx, f"{doc.id}-{k}"))
    _write(cfg.output, write_candidates(_by_id(records)))


def read_rater_labels(path: Path) -> dict:
    out = {}
    for cols in read_tsv(path.read_bytes(), LABELS_HEADER):
        if cols[0] in out:
            raise ParseError(f"duplicate id {cols[0]!r} in rater labels")
        try:
            out[cols[0]] = tuple(RaterLabel(c) for c in cols[1:])
        except ValueError as e:
            raise ParseError(f"{cols[0]}: {e}") from None
    return out


def write_rater_labels(labels: dict) -> bytes:
    return write_tsv(LABELS_HEADER, [[k, *(l.value for l in v)] for k, v in sorted(labels.items())])


def cmd_sample(cfg: RunConfig) -> None:
    pool = read_candidates(cfg.input.read_bytes())
    targets = SamplerTargets(seed=cfg.seed)
    if cfg.labels is not None:
        votes = read_rater_labels(cfg.labels)
        pool = [_labelled(c, consensus(votes[c.id]) if c.id in votes else None) for c in pool]
    result = sample_diverse(pool, targets, seed=cfg.seed)
    _write(cfg.output, write_candidates(_by_id(getattr(r, "record", r) for r in result.items)))
    if cfg.report is not None:
        _write(cfg.report, write_tsv(SHORTFALL_HEADER, result.report_rows()))


@dataclass(frozen=True)
class _Labelled:
    """A candidate record carrying a consensus label for the sampler."""

    record: object
    label: Optional[str]

    def __getattr__(self, name):
        return getattr(self.record, name)


def _labelled(rec, label) -> _Labelled:
    return _Labelled(rec, None if label is None else label.value)


def cmd_curate(cfg: RunConfig) -> None:
    if cfg.labels is None:
        raise CommandError("config", "curate needs --labels")
    candidates = read_candidates(cfg.input.read_bytes())
    votes = read_rater_labels(cfg.labels)
    missing = sorted(c.id for c in candidates if c.id not in votes)
    if missing:
        raise CommandError("input", f"{len(missing)} candidates have no rater labels", ids=missing[:20])
    triples = [votes[c.id] for c in candidates]
    final = {c.id: consensus(votes[c.id]) for c in candidates}
    examples = final_filter(candidates, final, seed=cfg.seed)
    _write(cfg.output, write_examples(examples))
    if cfg.report is not None:
        stats = agreement_stats(triples) if len(triples) >= 2 else None
        counts = defaultdict(int)
        for lab in final.values():
            counts[lab.value if lab is not None else "NoConsensus"] += 1
        report = {"candidates": len(candidates), "examples": len(examples),
                  "consensus_counts": dict(sorted(counts.items()))}
        if stats is not None:
            report.update(
                kappa=stats.kappa,
                full_agreement_fraction=stats.full_agreement_fraction,
                two_of_three_fraction=stats.two_of_three_fraction,
                no_consensus_count=stats.no_consensus_count,
            )
        _write(cfg.report, _json(report))


def split_by_url(examples, dev_size: int, test_size: int, seed: int) -> dict:
    """Assign whole URL groups to dev, test and validation.

    Groups are visited in seeded random order and go to the first split
    with room left for the whole group; the remainder is validation.
    """
    groups = defaultdict(list)
    for ex in examples:
        groups[ex.url].append(ex)
    urls = sorted(groups)
    order = np.random.default_rng(seed).permutation(len(urls))
    out = {"dev": [], "test": [], "validation": []}
    room = {"dev": dev_size, "test": test_size}
    for i in order:
        group = groups[urls[i]]
        for name in ("dev", "test"):
            if len(group) <= room[name]:
                out[name].extend(group)
                room[name] -= len(group)
                break
        else:
            out["validation"].extend(group)
    return {k: _by_id(v) for k, v in out.items()}


def cmd_split(cfg: RunConfig) -> None:
    if cfg.dev_size is None or cfg.test_size is None:
        raise CommandError("config", "split needs --dev-size and --test-size")
    if cfg.dev_size < 0 or cfg.test_size < 0:
        raise CommandError("config", "split sizes must be non-negative")
    examples = read_examples(cfg.input.read_bytes())
    if cfg.dev_size + cfg.test_size > len(examples):
        raise CommandError(
            "unattainable-split",
            f"requested {cfg.dev_size}+{cfg.test_size} examples from {len(examples)}",
            requested={"dev": cfg.dev_size, "test": cfg.test_size}, available=len(examples),
        )
    splits = split_by_url(examples, cfg.dev_size, cfg.test_size, cfg.seed)
    outdir = cfg.output or Path(".")
    for name, recs in splits.items():
        _write(outdir / f"{name}.tsv", write_examples(recs))
    report = {
        "requested": {"dev": cfg.dev_size, "test": cfg.test_size,
                      "validation": len(examples) - cfg.dev_size - cfg.test_size},
        "achieved": {k: len(v) for k, v in splits.items()},
        "urls": {k: len({r.url for r in v}) for k, v in splits.items()},
    }
    if cfg.report is not None:
        _write(cfg.report, _json(report))
    else:
        sys.stderr.write(json.dumps(report, sort_keys=True) + "\n")


def _documents_by_text(docs) -> dict:
    return {d.text: d for d in docs}


def _document_for(ex: ExampleRecord, by_text: dict):
    doc = by_text.get(ex.text)
    if doc is None:
        raise CommandError("input", f"{ex.id}: no corpus document has this example's text", id=ex.id)
    return doc


def _load_attention(cfg: RunConfig) -> dict:
    if cfg.attention is None:
        raise CommandError("config", f"--strategy {cfg.strategy} needs --attention")
    return {r.id: r for r in att.load_attention(cfg.attention.read_bytes())}


def _attention_for(records: dict, ex_id: str):
    rec = records.get(ex_id)
    if rec is None:
        raise CommandError("input", f"{ex_id}: no attention record", id=ex_id)
    return rec


def _fit_multi(cfg, records, by_text, mode) -> att.ForestModel:
    if cfg.train is None:
        raise CommandError("config", "transformer-multi needs --train examples")
    rows, labels = [], []
    for ex in read_examples(cfg.train.read_bytes()):
        doc = _document_for(ex, by_text)
        pron = pronoun_mention(ex, doc)
        cands = candidate_antecedents(ex, doc, mode, pron)
        sel = att.per_head_selections(_attention_for(records, ex.id), cands, pron)
        r, l = att.training_rows(ex, cands, sel)
        rows += r
        labels += l
    if not rows:
        raise CommandError("input", "no training rows for transformer-multi")
    training = att.TrainingSet(np.array(rows), np.array(labels))
    return att.fit_multi(training, k=cfg.k, n_trees=cfg.n_trees, seed=cfg.seed)


def cmd_resolve(cfg: RunConfig) -> None:
    if cfg.corpus is None:
        raise CommandError("config", "resolve needs --corpus")
    examples = _by_id(read_examples(cfg.input.read_bytes()))
    by_text = _documents_by_text(parse_corpus(cfg.corpus.read_bytes()))
    preds = {}
    if cfg.strategy in (TRANSFORMER_SINGLE, TRANSFORMER_MULTI):
        mode = Mode(cfg.mode)
        records = _load_attention(cfg)
        head = model = None
        if cfg.strategy == TRANSFORMER_SINGLE:
            if cfg.head is None:
                raise CommandError("config", "transformer-single needs --head")
            head = att.HeadId.parse(cfg.head)
        else:
            model = _fit_multi(cfg, records, by_text, mode)
        for ex in examples:
            doc = _document_for(ex, by_text)
            pron = pronoun_mention(ex, doc)
            cands = candidate_antecedents(ex, doc, mode, pron)
            rec = _attention_for(records, ex.id)
            if head is not None:
                res = att.resolve_single_head(rec, head, cands, pron)
            else:
                res = att.resolve_multi(model, cands, att.per_head_selections(rec, cands, pron))
            res = finish(res, ex)
            preds[ex.id] = (res.a_pred, res.b_pred)
    else:
        try:
            rc = ResolverConfig(cfg.strategy, cfg.mode, cfg.setting, cfg.seed)
        except ValueError as e:
            raise CommandError("config", str(e)) from None
        rng = np.random.default_rng(cfg.seed)
        for ex in examples:
            res = resolve_example(ex, _document_for(ex, by_text), rc, rng)
            preds[ex.id] = (res.a_pred, res.b_pred)
    _write(cfg.output, write_predictions(preds))


def cmd_score(cfg: RunConfig) -> None:
    if not cfg.predictions:
        raise CommandError("config", "score needs --predictions")
    gold = read_examples(cfg.input.read_bytes())
    preds = read_predictions(Path(cfg.predictions[0]).read_bytes())
    try:
        report = score(gold, preds)
    except KeyError as e:
        raise CommandError("input", str(e.args[0])) from None
    _write(cfg.output, report.to_json() if cfg.format == "json" else report.to_tsv())


def cmd_analyze(cfg: RunConfig) -> None:
    if len(cfg.predictions) != 4:
        raise CommandError("config", "analyze needs exactly four --predictions files")
    gold = _by_id(read_examples(cfg.input.read_bytes()))
    systems = [read_predictions(Path(p).read_bytes()) for p in cfg.predictions]
    _write(cfg.output, _json(difficulty_buckets(pair_verdicts(gold, systems))))


COMMANDS = {
    "extract": cmd_extract,
    "sample": cmd_sample,
    "curate": cmd_curate,
    "split": cmd_split,
    "resolve": cmd_resolve,
    "score": cmd_score,
    "analyze": cmd_analyze,
}


def _fail(kind: str, message: str, **details) -> int:
    obj = {"error": kind, "message": message}
    obj.update(details)
    sys.stderr.write(json.dumps(obj, sort_keys=True) + "\n")
    return 2 if kind == "config" else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        COMMANDS[cfg.command](cfg)
    except CommandError as e:
        return _fail(e.kind, str(e), command=args.command, **e.details)
    except ParseError as e:
        return _fail("parse", str(e), command=args.command, line=getattr(e, "line", None))
    except ValidationError as e:
        return _fail("validation", str(e), command=args.command, ids=list(getattr(e, "ids", []))[:20])
    except (AlignmentError, att.AttentionError) as e:
        return _fail("alignment", str(e), command=args.command)
    except OSError as e:
        return _fail("io", str(e), command=args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
