"""Command-line entry point: ``cadrcn <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import plotting
from .dataset import LABELS, balance_and_split, label_counts, read_instances, write_instances
from .gensini import LEVELS
from .metrics import evaluate_relations, evaluate_severity
from .model import ModelConfig, RCN, train
from .pipeline import extract_entities, run_oracle, run_pipeline
from .syngen import GenConfig, GenerationError, generate_corpus, generate_documents, read_documents, write_documents
from .text import Lexicon

log = logging.getLogger("cadrcn")


def _lexicon(spec: str) -> Lexicon:
    if spec in ("zh", "ascii"):
        return Lexicon.default(spec)
    path = Path(spec)
    if not path.is_file():
        raise FileNotFoundError(f"lexicon not found: {path}")
    return Lexicon.load(path)


def _read_json(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _write_tsv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row) + "\n")


def _read_texts(path: str) -> list[tuple[str, str]]:
    """(id, text) pairs from a JSONL file with a ``text`` field or a plain one-per-line file."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input not found: {p}")
    docs = []
    with open(p, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            if p.suffix == ".jsonl":
                rec = json.loads(line)
                docs.append((str(rec.get("id", f"line{n}")), rec["text"]))
            else:
                docs.append((f"line{n}", line))
    return docs


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    raw = _read_json(args.config)
    for key in ("n_documents", "n_instances", "mode", "seed", "discard_fraction"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    cfg = GenConfig.from_dict(raw)
    out = _out_dir(args.out_dir)
    corpus = generate_corpus(cfg)
    write_documents(out / "documents.jsonl", corpus.documents)
    write_instances(out / "instances.jsonl", corpus.instances)
    _write_json(out / "summary.json", {"config": cfg.to_dict(), **corpus.summary})
    rows = [[k, corpus.summary["targets"][k], v] for k, v in corpus.summary["achieved"].items()]
    _write_tsv(out / "class_counts.tsv", ["relation", "target", "generated"], rows)
    plotting.plot_counts({"generated": corpus.summary["achieved"]}, out / "class_counts.png", "generated relations")
    print(f"{len(corpus.documents)} documents, {len(corpus.instances)} instances -> {out}")
    for k, v in corpus.summary.get("unsatisfied", {}).items():
        print(f"warning: {k} short by {v}", file=sys.stderr)
    return 0


def cmd_ner(args) -> int:
    lexicon = _lexicon(args.lexicon)
    records = []
    for doc_id, text in _read_texts(args.input):
        for k, (tokens, ents) in enumerate(extract_entities(text, lexicon)):
            records.append({
                "id": doc_id,
                "sentence": k,
                "tokens": tokens,
                "entities": [{"span": list(e.span), "type": e.type, "surface": e.surface} for e in ents],
            })
    _write_jsonl(Path(args.output), records)
    print(f"{len(records)} sentences -> {args.output}")
    return 0


def cmd_build_dataset(args) -> int:
    instances = read_instances(args.instances)
    train_set, test_set = balance_and_split(instances, args.discard, args.train_fraction, args.seed)
    out = _out_dir(args.out_dir)
    write_instances(out / "train.jsonl", train_set)
    write_instances(out / "test.jsonl", test_set)
    counts = {"train": label_counts(train_set), "test": label_counts(test_set)}
    rows = [[lab.tag, counts["train"][lab.tag], counts["test"][lab.tag],
             counts["train"][lab.tag] + counts["test"][lab.tag]] for lab in LABELS]
    rows.append(["total", len(train_set), len(test_set), len(train_set) + len(test_set)])
    _write_tsv(out / "split_counts.tsv", ["relation", "train", "test", "total"], rows)
    plotting.plot_counts(counts, out / "split_counts.png", "relation dataset")
    print(f"train {len(train_set)}  test {len(test_set)} -> {out}")
    return 0


def cmd_train(args) -> int:
    raw = _read_json(args.config)
    for key in ("epochs", "seed", "routing_iters", "head_mode", "encoder_mode", "batch_size"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    cfg = ModelConfig.from_dict(raw)
    train_set = read_instances(args.train)
    dev_set = read_instances(args.dev) if args.dev else None
    out = _out_dir(args.out_dir)
    _write_json(out / "config.json", cfg.to_dict())
    result = train(
        train_set, cfg, dev_set=dev_set, log_path=out / "train_log.jsonl", checkpoint_path=out / "checkpoint.json",
        checkpoint_every_epoch=args.checkpoint_every_epoch,
    )
    history = [h.to_record() for h in result.history]
    plotting.plot_training_curve(history, out / "training_curve.png")
    last = history[-1] if history else {}
    print(f"trained {len(history)} epochs; final loss {last.get('loss', float('nan')):.4f} -> {out / 'checkpoint.json'}")
    return 0


def cmd_eval_relations(args) -> int:
    model = RCN.load(args.checkpoint)
    instances = read_instances(args.instances)
    if any(i.label is None for i in instances):
        raise ValueError(f"{args.instances} contains unlabeled instances")
    preds = model.predict(instances)
    metrics = evaluate_relations([p.label for p in preds], [i.label for i in instances])
    out = _out_dir(args.out_dir)
    _write_json(out / "relation_metrics.json", metrics.to_record())
    rows = [[k, s.precision, s.recall, s.f1, s.support] for k, s in metrics.per_class.items()]
    rows.append(["micro_positive", metrics.micro_precision, metrics.micro_recall, metrics.micro_f1,
                 sum(s.support for k, s in metrics.per_class.items() if k != "no_relation")])
    _write_tsv(out / "relation_metrics.tsv", ["relation", "precision", "recall", "f1", "support"], rows)
    _write_jsonl(out / "predictions.jsonl", ({**i.to_record(), "predicted": p.label.tag,
                                              "scores": [round(float(s), 10) for s in p.scores]}
                                             for i, p in zip(instances, preds)))
    plotting.plot_class_scores({k: vars(s) for k, s in metrics.per_class.items()}, out / "relation_scores.png",
                               "relation extraction")
    plotting.plot_confusion(metrics.confusion, [lab.tag for lab in LABELS], out / "relation_confusion.png")
    print(metrics.table())
    return 0


def cmd_eval_severity(args) -> int:
    lexicon = _lexicon(args.lexicon)
    docs = read_documents(args.docs)
    if args.oracle:
        results = run_oracle(docs, lexicon)
    else:
        if not args.checkpoint:
            raise ValueError("--checkpoint is required unless --oracle is given")
        results = run_pipeline([(d.doc_id, d.text) for d in docs], RCN.load(args.checkpoint), lexicon)
    metrics = evaluate_severity([r.report.level for r in results], [d.level for d in docs])
    out = _out_dir(args.out_dir)
    _write_json(out / "severity_metrics.json", metrics.to_record())
    rows = [[k, s.precision, s.recall, s.f1, s.support] for k, s in metrics.per_level.items()]
    rows.append(["accuracy", metrics.accuracy, "", "", len(docs)])
    _write_tsv(out / "severity_metrics.tsv", ["level", "precision", "recall", "f1", "support"], rows)
    _write_jsonl(out / "reports.jsonl", ({**r.to_record(), "gold_level": d.level} for r, d in zip(results, docs)))
    plotting.plot_confusion(metrics.confusion, list(LEVELS), out / "severity_confusion.png", "severity")
    print(metrics.table())
    return 0


def cmd_classify(args) -> int:
    lexicon = _lexicon(args.lexicon)
    docs = _read_texts(args.input)
    model = RCN.load(args.checkpoint)
    results = run_pipeline(docs, model, lexicon)
    _write_jsonl(Path(args.output), (r.to_record() for r in results))
    for r in results:
        print(f"{r.doc_id}\t{r.report.total}\t{r.report.level}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cadrcn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesise gold documents and a relation instance file")
    p.add_argument("--config", help="JSON file with generator settings")
    p.add_argument("--n-documents", type=int)
    p.add_argument("--n-instances", type=int)
    p.add_argument("--mode", choices=["zh", "ascii"])
    p.add_argument("--discard-fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ner", help="tokenise and tag entities")
    p.add_argument("--input", required=True, help=".jsonl with a text field, or plain text one document per line")
    p.add_argument("--lexicon", default="zh", help="zh, ascii, or a lexicon JSON path")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ner)

    p = sub.add_parser("build-dataset", help="discard no_relation instances and split train/test")
    p.add_argument("--instances", required=True)
    p.add_argument("--discard", type=float, default=0.85)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train the relation model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--config", help="JSON file mirroring the model config fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--routing-iters", type=int)
    p.add_argument("--head-mode", choices=["capsule", "softmax"])
    p.add_argument("--encoder-mode", choices=["uni_bi", "all_bi"])
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint-every-epoch", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-relations", help="score a checkpoint on labelled instances")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval_relations)

    p = sub.add_parser("eval-severity", help="grade gold documents and compare severity levels")
    p.add_argument("--docs", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--oracle", action="store_true", help="score gold relations, bypassing the model")
    p.add_argument("--lexicon", default="zh")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval_severity)

    p = sub.add_parser("classify", help="grade raw angiography texts")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lexicon", default="zh")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
