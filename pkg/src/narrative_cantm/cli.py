"""Command-line entry point: ``narrative-cantm <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, augment, checkpoint, corpus, evaluation, synthetic
from .encoders import EncoderSpec, load_external_embeddings
from .labels import CLASSES
from .models import KINDS, ModelSpec

HOME_ENV = "NARRATIVE_CANTM_HOME"
DEFAULT_CHECKPOINT = "model.npz"


class CliError(Exception):
    pass


def home_dir() -> Path:
    return Path(os.environ.get(HOME_ENV) or Path.home() / ".narrative_cantm")


def _checkpoint_path(args) -> Path:
    return Path(args.checkpoint) if args.checkpoint else home_dir() / DEFAULT_CHECKPOINT


def _options(args) -> dict:
    opts = {}
    if getattr(args, "config", None):
        opts.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for item in getattr(args, "set", None) or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--set expects key=value, got {item!r}")
        try:
            opts[key] = json.loads(value)
        except json.JSONDecodeError:
            opts[key] = value
    if getattr(args, "epochs", None) is not None:
        opts["epochs"] = args.epochs
    return opts


def _model_spec(args) -> ModelSpec:
    external = load_external_embeddings(args.embeddings) if args.embeddings else None
    kind = args.encoder or ("external" if external is not None and args.model == "cantm" else "bow_mlp")
    if kind == "external" and external is None:
        raise CliError("--encoder external needs --embeddings")
    dim = external.dim if kind == "external" else args.encoder_dim
    return ModelSpec(args.model, _options(args), EncoderSpec(kind, dim, args.attention), external)


def _labeled(path):
    docs = corpus.load_dataset(path)
    if not docs:
        raise CliError(f"{path}: no documents")
    return docs


def _emit_report(rep, args, title):
    if args.out:
        path = evaluation.report(rep, args.out, title)
        print(f"wrote {path} and {path.with_suffix('.json')}")
    else:
        sys.stdout.write(evaluation.render_markdown(rep, title))
    if args.json:
        sys.stdout.write(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------ commands


def cmd_train(args):
    docs = _labeled(args.data)
    model = _model_spec(args).fit(docs, args.seed)
    path = checkpoint.save(model, _checkpoint_path(args))
    print(f"saved {model.kind} model {checkpoint.model_version(model)} to {path}")


def cmd_cv(args):
    docs = _labeled(args.data)
    rep = evaluation.run_cv(docs, _model_spec(args), k=args.k, seed=args.seed)
    _emit_report(rep, args, f"{args.model} {args.k}-fold cross validation (seed {args.seed})")


def cmd_augment_exp(args):
    docs = _labeled(args.data)
    rep = evaluation.run_augmentation_experiment(
        docs, args.train_variant, args.test_variant, _model_spec(args), repeats=args.repeats, seed=args.seed,
        test_sizes=evaluation.REFERENCE_TEST_SIZES if args.reference_test_sizes else None,
    )
    _emit_report(rep, args, f"{args.model} trained on {args.train_variant}, tested on {args.test_variant}")


def cmd_classify(args):
    from .explain import explain

    model = checkpoint.load(_checkpoint_path(args))
    if args.text is not None:
        docs = [corpus.Document(args.id, args.text)]
    elif args.file:
        lines = Path(args.file).read_text(encoding="utf-8").splitlines()
        docs = [corpus.Document(f"line{n}", t) for n, t in enumerate(lines, 1) if t.strip()]
    elif args.data:
        docs = corpus.load_dataset(args.data)
    else:
        raise CliError("classify needs --text, --file or --data")
    if not docs:
        raise CliError("nothing to classify")
    probs = model.predict_proba(docs)
    for d, p in zip(docs, probs):
        label = CLASSES[int(p.argmax())]
        if args.json:
            row = {"id": d.id, "label": label, "probabilities": dict(zip(CLASSES, map(float, p)))}
            print(json.dumps(row, sort_keys=True))
        else:
            print(f"{d.id}\t{label}\t" + " ".join(f"{c}={v:.4f}" for c, v in zip(CLASSES, p)))
        if args.explain and model.kind == "cantm":
            sys.stdout.write(explain(d, model).text_report())


def cmd_match(args):
    rules = augment.load_rules(args.rules)
    docs = corpus.load_dataset(args.data)
    existing = corpus.load_dataset(args.existing) if args.existing else ()
    cands = augment.filter_candidates(docs, rules, existing)
    for d, m in cands:
        print(f"{d.id}\t{';'.join(m.classes)}\t" + "; ".join(p for _, p in m.matches))
    if args.out:
        augment.export_annotation_queue(cands, args.out)
        print(f"wrote {len(cands)} candidates to {args.out}")


def cmd_import(args):
    docs = augment.import_annotations(args.data, platform=args.platform)
    corpus.save_jsonl(docs, args.out)
    print(f"imported {len(docs)} annotated documents to {args.out}")


def cmd_dedup(args):
    docs = corpus.load_dataset(args.data)
    existing = corpus.load_dataset(args.existing) if args.existing else ()
    kept = corpus.deduplicate(docs, existing)
    if args.out:
        corpus.save_jsonl(kept, args.out)
    print(f"kept {len(kept)} of {len(docs)} documents")


def cmd_stats(args):
    dist = corpus.class_distribution(_labeled(args.data))
    print(" | ".join(["", *CLASSES, "Total"]))
    print(dist.format_row(args.name))


def cmd_serve(args):
    from .service import serve

    serve(_checkpoint_path(args), host=args.host, port=args.port)


def cmd_synth(args):
    corp = synthetic.make_corpus(seed=args.seed, signal=args.signal)
    corpus.save_jsonl(corp.docs, args.out)
    print(f"wrote {len(corp.docs)} synthetic documents to {args.out}")


# ------------------------------------------------------------ parser


def _add_model_args(p):
    p.add_argument("--model", choices=KINDS, default="cantm")
    p.add_argument("--encoder", choices=("bow_mlp", "embed_avg", "external"))
    p.add_argument("--encoder-dim", type=int, default=500)
    p.add_argument("--attention", choices=("learned", "uniform"), default="learned")
    p.add_argument("--embeddings", help="external embeddings file (id dim header, then id v1..vD rows)")
    p.add_argument("--config", help="JSON file of model config overrides")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="single config override")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="narrative-cantm", description="Vaccine narrative classification.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", help=f"output path (default ${HOME_ENV}/{DEFAULT_CHECKPOINT})")
    _add_model_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="stratified k-fold cross validation")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", help="Markdown report path; JSON is written beside it")
    p.add_argument("--json", action="store_true", help="also print JSON metrics")
    _add_model_args(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("augment-exp", help="data-augmentation ablation")
    p.add_argument("--data", required=True, help="FD and augmented documents (origin field)")
    p.add_argument("--train-variant", choices=evaluation.TRAIN_VARIANTS, default="balanced")
    p.add_argument("--test-variant", choices=evaluation.TEST_VARIANTS, default="six_class")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--reference-test-sizes", action="store_true",
                   help="use the reference FD Cons and augmented MRE test counts instead of 7:3")
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    _add_model_args(p)
    p.set_defaults(func=cmd_augment_exp)

    p = sub.add_parser("classify", help="classify text with a saved checkpoint")
    p.add_argument("--checkpoint")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--text")
    src.add_argument("--file", help="plain text, one document per line")
    src.add_argument("--data", help="JSONL or CSV dataset")
    p.add_argument("--id", default="cli", help="document id for --text")
    p.add_argument("--explain", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("match", help="keyword/hashtag candidate filtering")
    p.add_argument("--data", required=True)
    p.add_argument("--rules", help="rule JSON (default: shipped rules)")
    p.add_argument("--existing", help="already-annotated dataset to deduplicate against")
    p.add_argument("--out", help="annotation queue CSV")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("import", help="import an annotated queue as augmented documents")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--platform", default="twitter", choices=corpus.PLATFORMS)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("dedup", help="remove near-duplicate documents")
    p.add_argument("--data", required=True)
    p.add_argument("--existing")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("stats", help="class distribution table row")
    p.add_argument("--data", required=True)
    p.add_argument("--name", default="")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="write a synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--signal", type=float, default=0.7)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ValueError, OSError, KeyError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
