"""Command-line entry point: prep / train / topics / classify / gradcheck / export.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .corpus import CorpusConfig, CorpusError, load_20newsgroups, load_stopwords
from .evaluate import (
    ClassifierConfig,
    encode_matrix,
    evaluate,
    export_embeddings,
    extract_topics,
    train_classifier,
)
from .io import FormatError, load_corpus, load_model, save_corpus, save_model
from .model import VARIANTS, init_params
from .train import NumericError, TrainConfig, default_k, fit, grad_check

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

GRADCHECK_THRESHOLD = 1e-4


def _limit_threads(threads: int | None) -> None:
    """Cap BLAS pools; --deterministic passes 1 to serialize reductions."""
    if threads is None:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=threads)
    except ImportError:
        os.environ["OMP_NUM_THREADS"] = str(threads)


def _corpus_paths(output: str) -> tuple[Path, Path]:
    base = output[: -len(".cae")] if output.endswith(".cae") else output
    return Path(f"{base}.train.cae"), Path(f"{base}.test.cae")


def cmd_prep(args: argparse.Namespace) -> int:
    stopwords = load_stopwords(args.stopwords) if args.stopwords else None
    cfg = CorpusConfig(
        max_vocab=args.max_vocab,
        min_doc_freq=args.min_df,
        stopwords=stopwords,
        weighting=args.weighting,
        split_seed=args.seed,
        test_fraction=args.test_fraction,
    )
    loaded = load_20newsgroups(args.input, cfg)
    train_path, test_path = _corpus_paths(args.output)
    for matrix, path in ((loaded.train, train_path), (loaded.test, test_path)):
        save_corpus(path, matrix, loaded.vocab.tokens, loaded.class_names, cfg.to_dict())
    if loaded.skipped_files:
        print(f"warning: skipped {loaded.skipped_files} unreadable file(s)", file=sys.stderr)
    print(
        f"train: n={loaded.train.n} v={loaded.train.v} "
        f"classes={len(loaded.class_names)} -> {train_path}"
    )
    print(f"test: n={loaded.test.n} v={loaded.test.v} -> {test_path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    archive = load_corpus(args.corpus)
    k = args.k if args.k is not None else default_k(args.hidden)
    if not 1 <= k <= args.hidden:
        raise ValueError(f"k={k} must satisfy 1 <= k <= hidden={args.hidden}")
    _limit_threads(1 if args.deterministic else args.threads)
    params = init_params(
        v=archive.matrix.v,
        h=args.hidden,
        variant=args.variant,
        k=k,
        alpha=args.alpha,
        seed=args.seed,
    )
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        optimizer=args.optimizer,
        learning_rate=args.lr,
        seed=args.seed,
        early_stop_patience=args.patience,
        validation_fraction=args.val_fraction,
        deterministic=args.deterministic,
    )
    params, report = fit(archive.matrix, params, cfg, log_stream=sys.stdout)
    weighting = archive.config.get("weighting", "log_normalized_tf")
    save_model(args.output, params, archive.vocab_tokens, archive.class_names, weighting)
    print(
        f"trained variant={args.variant} h={args.hidden} k={k} "
        f"epochs={report.epochs_run} final_loss={report.train_losses[-1]:.6f} "
        f"-> {args.output}"
    )
    return EXIT_OK


def cmd_topics(args: argparse.Namespace) -> int:
    params, manifest = load_model(args.model)
    topics = extract_topics(params, manifest["vocab"], top_n=args.top_n)
    for j, topic in enumerate(topics):
        print(f"topic_{j}: " + " ".join(tok for tok, _ in topic))
    return EXIT_OK


def _load_labeled(path: str, model_vocab: list[str]):
    archive = load_corpus(path)
    if archive.vocab_tokens != model_vocab:
        raise ValueError(f"{path}: corpus vocabulary does not match the model's")
    if archive.matrix.labels is None:
        raise ValueError(f"{path}: corpus has no labels")
    return archive


def cmd_classify(args: argparse.Namespace) -> int:
    params, manifest = load_model(args.model)
    train_arc = _load_labeled(args.train, manifest["vocab"])
    test_arc = _load_labeled(args.test, manifest["vocab"])
    _limit_threads(args.threads)
    F_train = encode_matrix(train_arc.matrix, params, args.competition_at_inference)
    F_test = encode_matrix(test_arc.matrix, params, args.competition_at_inference)
    clf = train_classifier(
        F_train,
        train_arc.matrix.labels,
        ClassifierConfig(iters=args.iters, learning_rate=args.clf_lr, seed=args.seed),
    )
    class_names = train_arc.class_names or None
    report = evaluate(clf, F_test, test_arc.matrix.labels, class_names)
    print(report.to_json())
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    k = args.k if args.k is not None else max(1, args.h // 2)
    params = init_params(
        v=args.v,
        h=args.h,
        variant=args.variant,
        k=k,
        alpha=args.alpha,
        seed=args.seed,
        dtype=np.float64,
    )
    x = np.where(rng.random(args.v) < 0.5, rng.random(args.v), 0.0)
    mode = "full" if args.variant == "none" else "frozen_competition"
    err = grad_check(params, x, mode=mode, eps=args.eps)
    print(f"variant={args.variant} mode={mode} max_rel_err={err:.3e}")
    return EXIT_OK if err < GRADCHECK_THRESHOLD else EXIT_NUMERIC


def cmd_export(args: argparse.Namespace) -> int:
    params, _ = load_model(args.model)
    archive = load_corpus(args.corpus)
    if archive.matrix.v != params.v:
        raise ValueError(f"{args.corpus}: corpus width does not match the model's")
    features = encode_matrix(archive.matrix, params, args.competition_at_inference)
    export_embeddings(features, archive.matrix.labels, archive.matrix.doc_ids, args.output)
    print(f"wrote {archive.matrix.n} embeddings of width {params.h} -> {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scat",
        description="Second-chance k-competitive text autoencoder: corpus prep, "
        "training, topic extraction and classification evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="build train/test corpus archives from a directory tree")
    p.add_argument("--input", required=True, help="corpus root (bydate or flat class layout)")
    p.add_argument("--output", required=True, help="archive prefix; writes PREFIX.{train,test}.cae")
    p.add_argument("--max-vocab", type=int, default=2000)
    p.add_argument("--min-df", type=int, default=3)
    p.add_argument("--stopwords", help="stopword file, one token per line")
    p.add_argument("--weighting", choices=["log_normalized_tf", "binary"],
                   default="log_normalized_tf")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train an autoencoder on a corpus archive")
    p.add_argument("--corpus", required=True)
    p.add_argument("--hidden", type=int, required=True, help="hidden width (number of topics)")
    p.add_argument("--variant", choices=list(VARIANTS), default="scat")
    p.add_argument("--k", type=int, help="competition winners; default ceil(hidden / 2)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=["adam", "sgd_momentum"], default="adam")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="serialize reductions for bit-reproducible runs")
    p.add_argument("--threads", type=int, help="BLAS thread cap (default: all cores)")
    p.add_argument("--output", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("topics", help="print the top words of every hidden neuron")
    p.add_argument("--model", required=True)
    p.add_argument("--top-n", type=int, default=10)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("classify", help="train/evaluate a softmax classifier on encodings")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True, help="training corpus archive")
    p.add_argument("--test", required=True, help="test corpus archive")
    p.add_argument("--competition-at-inference", action="store_true")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--clf-lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    p.add_argument("--v", type=int, default=10)
    p.add_argument("--h", type=int, default=4)
    p.add_argument("--variant", choices=list(VARIANTS), default="none")
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export", help="write document embeddings as TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--competition-at-inference", action="store_true")
    p.set_defaults(func=cmd_export)

    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
