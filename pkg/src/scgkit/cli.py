"""Command-line pipeline: parse -> prune -> featurize -> train/evaluate,
plus corpus generation and the comparison reports.

Every command is reproducible from its inputs, flags, and seed; all
randomness flows from ``--seed`` (default: the ``SCGKIT_SEED`` environment
variable, then 0).  Exit codes: 0 on success, 2 on input errors, 3 when an
operation legitimately produced an empty result.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets, features, ml, pruning, synth
from .exceptions import EmptyResultError, EmptyTrace, ScgkitError
from .graph import build_scg, to_dot
from .trace import (BENIGN, MALWARE, Dataset, default_signature_table,
                    parse_trace_file, read_normalized, write_normalized)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EMPTY = 3

SEED_ENV_VAR = "SCGKIT_SEED"

COMPARE_NOTE = ("# note: detection rates below are measured on the supplied corpus; "
                "robustness is demonstrated by the reorder-noise contrast between "
                "methods, not by fixed reference values")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ScgkitError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


def _load_dataset(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        dataset = read_normalized(fh)
    if len(dataset) == 0:
        raise EmptyTrace(f"{path}: dataset is empty")
    return dataset


def _resolve_retained(args, dataset: Dataset) -> frozenset[str]:
    """Retained call set from --retained, or by pruning the dataset."""
    if getattr(args, "retained", None):
        with open(args.retained, "r", encoding="utf-8") as fh:
            retained = pruning.read_retained(fh)
        if not retained:
            raise EmptyResultError(f"{args.retained}: retained set is empty")
        return retained
    allowlist = None
    if getattr(args, "allowlist", None):
        allowlist = datasets.load_allowlist(args.allowlist)
    report = pruning.prune(dataset, tau_d=args.tau_d, tau_n=args.tau_n,
                           allowlist=allowlist)
    return report.retained_calls()


def _make_featurizer(method: str, retained, n: int):
    if method == features.KIND_SCGM:
        return features.ScgmFeaturizer(retained=retained)
    return features.NgramFeaturizer(retained=retained, n=n)


def _trainer(classifier: str, seed: int):
    if classifier == "lr":
        return lambda X, y: ml.train_logistic(X, y)
    return lambda X, y: ml.train_forest(X, y, seed=seed)


def _metrics_dict(metrics: ml.Metrics) -> dict:
    return {"tpr": metrics.tpr, "fpr": metrics.fpr, "acc": metrics.acc}


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


# ---------------------------------------------------------------------------
# commands


def cmd_parse(args) -> int:
    table = (default_signature_table() if args.signatures is None
             else __import__("scgkit.trace", fromlist=["SignatureTable"])
             .SignatureTable.load(args.signatures))
    manifest_dir = Path(args.manifest).parent
    entries = []
    with open(args.manifest, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ScgkitError(f"{args.manifest}:{lineno}: expected 'path,label'")
            label_text = parts[1].lower()
            if label_text in ("1", "malware"):
                label = MALWARE
            elif label_text in ("0", "benign"):
                label = BENIGN
            else:
                raise ScgkitError(f"{args.manifest}:{lineno}: bad label {parts[1]!r}")
            entries.append((parts[0], label))

    traces = []
    failures = []
    for rel_path, label in entries:
        path = Path(rel_path)
        if not path.is_absolute():
            path = manifest_dir / path
        if not path.exists():
            raise ScgkitError(f"manifest names a missing file: {path}")
        content = path.read_text(encoding="utf-8", errors="replace")
        try:
            trace, skipped = parse_trace_file(content, sample_id=path.stem,
                                              label=label, table=table)
        except EmptyTrace as exc:
            failures.append((str(path), str(exc)))
            continue
        print(f"{path}: {len(trace)} events, {skipped} lines skipped")
        traces.append(trace)

    for path, reason in failures:
        print(f"FAILED {path}: {reason}", file=sys.stderr)
    if not traces:
        raise EmptyTrace("no file in the manifest produced a parseable trace")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_normalized(Dataset.from_traces(traces), fh)
    print(f"wrote {len(traces)} samples to {args.out} ({len(failures)} failed)")
    return EXIT_OK


def cmd_generate(args) -> int:
    profiles = (synth.default_profiles() if args.profiles is None
                else synth.load_profiles(args.profiles))
    config = synth.CorpusConfig(
        n_malware=args.malware, n_benign=args.benign, profiles=profiles,
        noise=synth.NoiseConfig(reorder_rate=args.reorder_rate,
                                junk_rate=args.junk_rate))
    dataset = synth.generate_corpus(config, seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_normalized(dataset, fh)
    print(f"wrote {dataset.n_malware} malware + {dataset.n_benign} benign samples to {args.out}")
    return EXIT_OK


def cmd_prune(args) -> int:
    dataset = _load_dataset(args.dataset)
    allowlist = datasets.load_allowlist(args.allowlist) if args.allowlist else None
    report = pruning.prune(dataset, tau_d=args.tau_d, tau_n=args.tau_n,
                           allowlist=allowlist)
    with open(args.report_out, "w", encoding="utf-8", newline="") as fh:
        pruning.write_report_csv(report, fh)
    with open(args.retained_out, "w", encoding="utf-8", newline="") as fh:
        pruning.write_retained(report, fh)
    retained = report.retained_calls()
    print(f"observed {len(report.records)} calls, retained {len(retained)}; "
          f"report: {args.report_out}, retained set: {args.retained_out}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    dataset = _load_dataset(args.dataset)
    with open(args.retained, "r", encoding="utf-8") as fh:
        retained = pruning.read_retained(fh)
    if not retained:
        raise ScgkitError(f"{args.retained}: retained set is empty")

    featurizer = _make_featurizer(args.method, retained, args.n)
    matrix = featurizer.fit(dataset.samples).transform(dataset.samples)
    labels = [t.label for t in dataset.samples]
    ids = [t.sample_id for t in dataset.samples]

    with open(args.matrix_out, "w", encoding="utf-8", newline="") as fh:
        features.write_matrix_csv(matrix, labels, featurizer.vocabulary_, fh,
                                  sample_ids=ids)
    with open(args.vocab_out, "w", encoding="utf-8", newline="") as fh:
        features.write_vocabulary(featurizer.vocabulary_, fh)
    empty = int(np.sum(matrix.sum(axis=1) == 0))
    print(f"{args.method}: {len(featurizer.vocabulary_)} features over "
          f"{len(dataset)} samples ({empty} samples featurized to all zeros)")
    return EXIT_OK


def cmd_train_eval(args) -> int:
    dataset = _load_dataset(args.dataset)
    retained = _resolve_retained(args, dataset)
    train, test = ml.split_dataset(dataset, test_fraction=args.test_fraction,
                                   seed=args.seed)

    featurizer = _make_featurizer(args.method, retained, args.n)
    X_train = featurizer.fit(train.samples).transform(train.samples)
    y_train = np.array([t.label for t in train.samples])
    X_test = featurizer.transform(test.samples)
    y_test = np.array([t.label for t in test.samples])

    trainer = _trainer(args.classifier, args.seed)
    cv = ml.kfold_cv(X_train, y_train, trainer, k=args.cv, seed=args.seed)
    model = trainer(X_train, y_train)
    cm, metrics = ml.evaluate(model, X_test, y_test)

    result = {
        "method": args.method,
        "classifier": args.classifier,
        "seed": args.seed,
        "test_fraction": args.test_fraction,
        "retained_calls": len(retained),
        "vocabulary_size": len(featurizer.vocabulary_),
        "cv": {
            "k_requested": cv.k_requested,
            "k": cv.k,
            "adjusted": cv.adjusted,
            **_metrics_dict(ml.Metrics(tpr=cv.tpr, fpr=cv.fpr, acc=cv.acc)),
        },
        "test": {
            **_metrics_dict(metrics),
            "confusion": {"tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn},
        },
    }
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    if args.model_out:
        with open(args.model_out, "w", encoding="utf-8", newline="") as fh:
            ml.save_model(model, fh, vocabulary=featurizer.vocabulary_)
    print(f"test acc={_fmt(metrics.acc)} tpr={_fmt(metrics.tpr)} fpr={_fmt(metrics.fpr)}"
          f" (cv k={cv.k}); wrote {args.out}")
    return EXIT_OK


def cmd_feature_space_report(args) -> int:
    dataset = _load_dataset(args.dataset)
    retained = _resolve_retained(args, dataset)
    fractions = [int(f) for f in args.fractions.split(",")]
    if sorted(fractions) != fractions or not all(0 < f <= 100 for f in fractions):
        raise ScgkitError(f"fractions must be ascending percentages, got {args.fractions}")

    per_method_maps = {
        features.KIND_SCGM: [features.featurize_scgm(t, retained) for t in dataset],
        features.KIND_NGRAM: [features.featurize_ngram(t, retained, n=args.n)
                              for t in dataset],
    }

    rng = np.random.default_rng(args.seed)
    n = len(dataset)
    subsets: dict[int, list[np.ndarray]] = {}
    for fraction in fractions:
        if fraction == 100:
            subsets[fraction] = [np.arange(n)]
        else:
            size = max(1, int(n * fraction / 100 + 0.5))
            subsets[fraction] = [rng.choice(n, size=size, replace=False)
                                 for _ in range(args.repeats)]

    sizes: dict[tuple[str, int], list[int]] = {}
    for method, maps in per_method_maps.items():
        for fraction in fractions:
            sizes[(method, fraction)] = [
                len(set().union(*(maps[i] for i in subset)) if len(subset) else set())
                for subset in subsets[fraction]
            ]

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "fraction", "repeat", "vocab_size",
                         "avg_vocab_size", "growth_ratio"])
        for method in (features.KIND_SCGM, features.KIND_NGRAM):
            averages = {f: float(np.mean(sizes[(method, f)])) for f in fractions}
            for fraction in fractions:
                for repeat, size in enumerate(sizes[(method, fraction)], start=1):
                    ratio = ""
                    if fraction == 100 and min(fractions) != 100:
                        ratio = repr(averages[100] / averages[min(fractions)])
                    writer.writerow([method, fraction, repeat, size,
                                     repr(averages[fraction]), ratio])
    for method in (features.KIND_SCGM, features.KIND_NGRAM):
        avg = {f: float(np.mean(sizes[(method, f)])) for f in fractions}
        print(f"{method}: " + "  ".join(f"{f}%={avg[f]:.1f}" for f in fractions))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    dataset = _load_dataset(args.dataset)
    retained = _resolve_retained(args, dataset)
    train, test = ml.split_dataset(dataset, test_fraction=args.test_fraction,
                                   seed=args.seed)
    y_train = np.array([t.label for t in train.samples])
    y_test = np.array([t.label for t in test.samples])

    rows = []
    for method in (features.KIND_SCGM, features.KIND_NGRAM):
        featurizer = _make_featurizer(method, retained, args.n)
        X_train = featurizer.fit(train.samples).transform(train.samples)
        X_test = featurizer.transform(test.samples)
        collected = []
        for classifier in ("lr", "rf"):
            model = _trainer(classifier, args.seed)(X_train, y_train)
            _, metrics = ml.evaluate(model, X_test, y_test)
            rows.append([method, classifier, _fmt(metrics.tpr),
                         _fmt(metrics.fpr), _fmt(metrics.acc)])
            collected.append(metrics)
        rows.append([method, "average",
                     _fmt(np.mean([m.tpr for m in collected])),
                     _fmt(np.mean([m.fpr for m in collected])),
                     _fmt(np.mean([m.acc for m in collected]))])

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(COMPARE_NOTE + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "classifier", "tpr", "fpr", "acc"])
        writer.writerows(rows)
    for row in rows:
        print("  ".join(str(c) for c in row))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_dot(args) -> int:
    dataset = _load_dataset(args.dataset)
    trace = dataset.samples[0]
    if args.sample is not None:
        matches = [t for t in dataset if t.sample_id == args.sample]
        if not matches:
            raise ScgkitError(f"no sample named {args.sample!r} in {args.dataset}")
        trace = matches[0]
    retained = _resolve_retained(args, dataset)
    text = to_dot(build_scg(trace, retained))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: ${SEED_ENV_VAR} or 0)")


def _add_prune_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-d", type=float, default=pruning.DEFAULT_TAU_D,
                   help="distribution threshold: keep calls with |d| > tau_d")
    p.add_argument("--tau-n", type=int, default=pruning.DEFAULT_TAU_N,
                   help="rarity threshold: keep calls in >= tau_n samples")
    p.add_argument("--allowlist", default=None,
                   help="static allowlist file; overrides the thresholds")


def _add_retained_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--retained", default=None,
                   help="retained-call file (default: prune the dataset)")
    _add_prune_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scgkit",
        description="System-call trace analysis pipeline: parse, prune, "
                    "featurize, train, evaluate, compare.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse strace files into a normalized dataset")
    p.add_argument("--manifest", required=True,
                   help="CSV of 'path,label' lines; paths relative to the manifest")
    p.add_argument("--signatures", default=None, help="custom call-signature table")
    p.add_argument("--out", required=True, help="output dataset (JSONL)")
    p.set_defaults(handler=cmd_parse)

    p = sub.add_parser("generate", help="generate a synthetic labeled corpus")
    p.add_argument("--malware", type=int, default=100)
    p.add_argument("--benign", type=int, default=100)
    p.add_argument("--profiles", default=None, help="behavior profile JSON file")
    p.add_argument("--reorder-rate", type=float, default=0.0)
    p.add_argument("--junk-rate", type=float, default=0.0)
    _add_seed(p)
    p.add_argument("--out", required=True, help="output dataset (JSONL)")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("prune", help="score calls and compute the retained set")
    p.add_argument("dataset")
    _add_prune_flags(p)
    p.add_argument("--report-out", default="prune_report.csv")
    p.add_argument("--retained-out", default="retained.txt")
    p.set_defaults(handler=cmd_prune)

    p = sub.add_parser("featurize", help="export the feature matrix and vocabulary")
    p.add_argument("dataset")
    p.add_argument("--retained", required=True, help="retained-call file")
    p.add_argument("--method", choices=[features.KIND_SCGM, features.KIND_NGRAM],
                   default=features.KIND_SCGM)
    p.add_argument("--n", type=int, default=4, help="window size for --method ngram")
    p.add_argument("--matrix-out", default="features.csv")
    p.add_argument("--vocab-out", default="vocabulary.txt")
    p.set_defaults(handler=cmd_featurize)

    p = sub.add_parser("train-eval",
                       help="split, cross-validate, train, and evaluate one model")
    p.add_argument("dataset")
    p.add_argument("--method", choices=[features.KIND_SCGM, features.KIND_NGRAM],
                   default=features.KIND_SCGM)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--classifier", choices=["lr", "rf"], default="rf")
    _add_seed(p)
    p.add_argument("--test-fraction", type=float, default=0.30)
    p.add_argument("--cv", type=int, default=10)
    _add_retained_source(p)
    p.add_argument("--out", default="metrics.json")
    p.add_argument("--model-out", default=None, help="also save the fitted model JSON")
    p.set_defaults(handler=cmd_train_eval)

    p = sub.add_parser("feature-space-report",
                       help="vocabulary sizes on random sample fractions, per method")
    p.add_argument("dataset")
    p.add_argument("--fractions", default="25,50,75,100",
                   help="comma-separated ascending percentages")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--n", type=int, default=4)
    _add_seed(p)
    _add_retained_source(p)
    p.add_argument("--out", default="feature_space.csv")
    p.set_defaults(handler=cmd_feature_space_report)

    p = sub.add_parser("compare",
                       help="both methods x both classifiers on one split")
    p.add_argument("dataset")
    p.add_argument("--n", type=int, default=4)
    _add_seed(p)
    p.add_argument("--test-fraction", type=float, default=0.30)
    _add_retained_source(p)
    p.add_argument("--out", default="compare.csv")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("dot", help="debug-export one sample's call graph as DOT")
    p.add_argument("dataset")
    p.add_argument("--sample", default=None, help="sample id (default: first)")
    _add_retained_source(p)
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.set_defaults(handler=cmd_dot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "seed") and args.seed is None:
        try:
            args.seed = _default_seed()
        except ScgkitError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.handler(args)
    except EmptyResultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (ScgkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
