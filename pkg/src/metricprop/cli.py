"""Command-line front end.

Every subcommand prints its resolved configuration as one line of sorted,
comma-joined ``key=value`` pairs before running.  Failures exit nonzero
with a single ``error=...`` line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .classifier import ClassifierConfig, load_classifier, predict, save_classifier, train_classifier
from .confidence import ConfidenceParams, confidence_summary, pseudo_label
from .core import (
    KernelSpec,
    LabeledSet,
    read_embeddings,
    read_index_sidecar,
    read_labels,
    read_pseudo_labels,
    write_embeddings,
    write_index_sidecar,
    write_labels,
    write_pseudo_labels,
)
from .evaluation import (
    accumulated_accuracy,
    gen_synthetic,
    pseudo_label_accuracy,
    pseudo_label_map,
    rank_correctness,
    split_labeled,
    write_curve,
)
from .metric import TrainConfig, embed, save_embedder, train
from .propagation import PropagationResult, chunked_propagate, propagate
from .similarity import build_knn_graph, write_graph

RNG_NAME = "numpy-PCG64"


class ConfigError(ValueError):
    def __init__(self, flag, message):
        super().__init__(message)
        self.flag = flag


# ----------------------------------------------------------------- arguments


def _add_kernel(p):
    p.add_argument("--kernel", default="cosine", choices=["cosine", "negative-euclidean"],
                   help="pairwise similarity f (default: cosine)")
    p.add_argument("--no-exp", action="store_true",
                   help="use 1+f instead of exp(f) as graph weights (cosine only)")


def _add_graph(p):
    _add_kernel(p)
    p.add_argument("--k", type=int, default=10, help="neighbors per point (default: 10)")


def _add_spectral(p, method=True):
    _add_graph(p)
    if method:
        p.add_argument("--method", default="spectral", choices=["nn", "spectral"])
    p.add_argument("--eta", type=int, default=200,
                   help="eigen components computed (default: 200; typical working range 30-200)")
    p.add_argument("--chunks", type=int, default=1,
                   help="independent shards of the unlabeled set (default: 1)")
    p.add_argument("--null-policy", default="gate", choices=["gate", "drop"],
                   help="on disconnected graphs, 'gate' only lets a point take classes labeled "
                        "in its own connected component (default: gate)")


def _add_confidence(p):
    p.add_argument("--tau", type=float, default=40.0,
                   help="softmax temperature for confidences (default: 40; robust over roughly 10-100)")
    p.add_argument("--alpha-threshold", type=float, default=0.01,
                   help="discard pseudo-labels with confidence below this (default: 0.01)")


def _add_classifier(p):
    p.add_argument("--clf-epochs", type=int, default=100)
    p.add_argument("--clf-lr", type=float, default=0.5)
    p.add_argument("--clf-batch-size", type=int, default=256)
    p.add_argument("--l2", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metricprop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None,
                       help="cap on worker threads (default: all cores)")
        return p

    p = add("gen-synthetic", "write a synthetic embedding set with ground truth")
    p.add_argument("--kind", default="two-moons", choices=["two-moons", "gaussian-blobs"])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--per-class", type=int, default=None,
                   help="also sample this many labeled points per class")
    p.add_argument("--out-emb", required=True)
    p.add_argument("--out-truth", required=True)
    p.add_argument("--out-labels", default=None)

    p = add("train-metric", "pretrain a linear embedder")
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--objective", default="instance", choices=["instance", "nca"])
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--d-out", type=int, default=None)
    p.add_argument("--metric-temperature", type=float, default=0.07)
    p.add_argument("--out-model", required=True, help="output prefix for the embedder")
    p.add_argument("--out-emb", default=None, help="also write the embedded set")

    p = add("build-graph", "write the k-NN similarity graph as 'i j w' lines")
    p.add_argument("--emb", required=True)
    _add_graph(p)
    p.add_argument("--out", required=True)

    p = add("propagate", "propagate labels and write logits")
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--unlabeled", default=None, help="index file; default: every unlabeled point")
    p.add_argument("--classes", type=int, default=None)
    _add_spectral(p)
    p.add_argument("--out-logits", required=True, help="EMB1 logits; indices go to <out>.idx.csv")

    p = add("pseudo-label", "turn logits into confidence-weighted pseudo-labels")
    p.add_argument("--logits", required=True)
    p.add_argument("--index", default=None, help="index sidecar (default: <logits>.idx.csv)")
    _add_confidence(p)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", default=None)

    p = add("train-classifier", "train the confidence-weighted softmax classifier")
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--pseudo", default=None)
    p.add_argument("--classes", type=int, default=None)
    _add_classifier(p)
    p.add_argument("--out-model", required=True)

    p = add("evaluate", "score pseudo-label files (and optionally a classifier)")
    p.add_argument("--pseudo", action="append", default=[], help="repeatable")
    p.add_argument("--truth", required=True)
    p.add_argument("--model", default=None, help="classifier prefix")
    p.add_argument("--test-emb", default=None)
    p.add_argument("--test-truth", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--curve-dir", default=None)

    p = add("pipeline", "propagate, pseudo-label, train and evaluate in one go")
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--methods", default="nn,spectral", help="comma-separated subset of nn,spectral")
    _add_spectral(p, method=False)
    _add_confidence(p)
    _add_classifier(p)
    p.add_argument("--out-dir", required=True)
    return parser


# ---------------------------------------------------------------- validation


def _check(cond, flag, message):
    if not cond:
        raise ConfigError(flag, message)


def validate(args) -> None:
    v = vars(args)
    if v.get("threads") is not None:
        _check(args.threads >= 1, "--threads", "must be >= 1")
    if "k" in v:
        _check(args.k >= 1, "--k", "must be >= 1")
        _check(not (args.kernel == "negative-euclidean" and args.no_exp), "--no-exp",
               "negative-euclidean weights must be exponentiated")
    if "eta" in v:
        _check(args.eta >= 2, "--eta", "must be >= 2")
        _check(args.chunks >= 1, "--chunks", "must be >= 1")
    if "tau" in v:
        _check(args.tau > 0, "--tau", "must be > 0")
        _check(0 <= args.alpha_threshold < 1, "--alpha-threshold", "must lie in [0, 1)")
    if "clf_epochs" in v:
        _check(args.clf_epochs >= 0, "--clf-epochs", "must be >= 0")
        _check(args.clf_lr > 0, "--clf-lr", "must be > 0")
        _check(args.clf_batch_size >= 1, "--clf-batch-size", "must be >= 1")
        _check(args.l2 >= 0, "--l2", "must be >= 0")
    if "methods" in v:
        methods = args.methods.split(",")
        _check(methods and set(methods) <= {"nn", "spectral"} and len(set(methods)) == len(methods),
               "--methods", "must be a comma-separated subset of nn,spectral")
    if args.command == "gen-synthetic":
        _check(args.n >= 2 * args.classes, "--n", "must be at least twice --classes")
        _check(args.noise >= 0, "--noise", "must be >= 0")
        _check(args.kind != "two-moons" or (args.classes == 2 and args.dim == 2), "--kind",
               "two-moons needs --classes 2 --dim 2")
    if args.command == "train-metric":
        _check(args.epochs >= 0, "--epochs", "must be >= 0")
        _check(args.lr > 0, "--lr", "must be > 0")
        _check(args.objective != "nca" or args.labels, "--labels", "nca objective needs --labels")
    for flag in ("emb", "labels", "truth", "pseudo", "logits", "unlabeled", "test_emb", "test_truth"):
        paths = v.get(flag)
        for path in paths if isinstance(paths, list) else [paths]:
            if path is not None and not os.path.exists(path):
                raise FileNotFoundError(path)


def config_line(args) -> str:
    items = {k: v for k, v in vars(args).items() if k != "func"}
    items["rng"] = RNG_NAME
    items["version"] = __version__

    def fmt(v):
        return ";".join(map(str, v)) if isinstance(v, list) else str(v)

    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(f"{k}={fmt(items[k])}" for k in sorted(items))
    return buf.getvalue()


# ------------------------------------------------------------------- helpers


def _spec(args) -> KernelSpec:
    return KernelSpec(args.kernel, not args.no_exp)


def _load_labels(path, n, classes=None) -> LabeledSet:
    return read_labels(path, n_classes=classes, n_points=n)


def _truth_array(path, n=None):
    lab = read_labels(path)
    size = n if n is not None else int(lab.indices.max()) + 1
    truth = np.full(size, -1, dtype=np.int64)
    truth[lab.indices] = lab.classes
    return truth


def _run_propagation(args, X, labels, unlabeled, method) -> PropagationResult:
    kw = dict(k=args.k, eta=args.eta, spec=_spec(args), seed=args.seed, null_policy=args.null_policy)
    if method == "spectral" and args.chunks > 1:
        return chunked_propagate(X, labels, unlabeled, chunks=args.chunks, **kw)
    return propagate(X, labels, unlabeled, method=method, **kw)


def _write_logits(res: PropagationResult, path):
    write_embeddings(res.logits, path)
    write_index_sidecar(res.indices, f"{path}.idx.csv")


def _evaluation_rows(name, pseudo, truth):
    _, _, correct = rank_correctness(pseudo, truth)
    mean_ok = pseudo.confidence[pseudo.labels == truth[pseudo.indices]]
    mean_bad = pseudo.confidence[pseudo.labels != truth[pseudo.indices]]
    row = {
        "name": name,
        "kept": len(pseudo),
        "discarded": pseudo.n_discarded,
        "accuracy": pseudo_label_accuracy(pseudo, truth),
        "map": pseudo_label_map(pseudo, truth).value,
        "acc_at_20pct": float("nan"),
        "mean_alpha_correct": float(mean_ok.mean()) if mean_ok.size else float("nan"),
        "mean_alpha_incorrect": float(mean_bad.mean()) if mean_bad.size else float("nan"),
    }
    if len(pseudo):
        cov, acc = accumulated_accuracy(correct)
        row["acc_at_20pct"] = float(acc[max(1, int(np.ceil(0.2 * len(acc)))) - 1])
    return row


EVAL_COLUMNS = ["name", "kept", "discarded", "accuracy", "map", "acc_at_20pct",
                "mean_alpha_correct", "mean_alpha_incorrect"]


def _write_eval(rows, path):
    with open(path, "w") as fh:
        fh.write(",".join(EVAL_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(f"{r[c]:.17g}" if isinstance(r[c], float) else str(r[c])
                              for c in EVAL_COLUMNS) + "\n")


def _write_ap(result, path):
    with open(path, "w") as fh:
        fh.write("class,ap\n")
        for c, ap in sorted(result.per_class.items()):
            fh.write(f"{c},{ap:.17g}\n")
        for c in result.skipped:
            fh.write(f"{c},skipped\n")


# --------------------------------------------------------------- subcommands


def cmd_gen_synthetic(args):
    X, y = gen_synthetic(args.kind, args.n, args.noise, args.classes, args.seed, args.dim)
    write_embeddings(X, args.out_emb)
    write_labels(LabeledSet(np.arange(len(y)), y, args.classes), args.out_truth)
    if args.per_class is not None:
        if args.out_labels is None:
            raise ConfigError("--out-labels", "required with --per-class")
        write_labels(split_labeled(y, args.per_class, args.seed, args.classes), args.out_labels)


def cmd_train_metric(args):
    X = read_embeddings(args.emb)
    labels = _load_labels(args.labels, len(X)) if args.labels else None
    cfg = TrainConfig(args.lr, args.epochs, args.batch_size, args.seed, args.objective,
                      args.d_out, args.metric_temperature)
    M = train(X, labels, cfg)
    save_embedder(M, args.out_model)
    if args.out_emb:
        write_embeddings(embed(M, X), args.out_emb)
    print(f"loss_initial={M.history[0]:.9g},loss_final={M.history[-1]:.9g}")


def cmd_build_graph(args):
    X = read_embeddings(args.emb)
    if not args.k < len(X):
        raise ConfigError("--k", f"must be < n={len(X)}")
    write_graph(build_knn_graph(X, args.k, _spec(args)), args.out)


def cmd_propagate(args):
    X = read_embeddings(args.emb)
    labels = _load_labels(args.labels, len(X), args.classes)
    unlabeled = read_index_sidecar(args.unlabeled) if args.unlabeled else None
    _write_logits(_run_propagation(args, X, labels, unlabeled, args.method), args.out_logits)


def cmd_pseudo_label(args):
    logits = read_embeddings(args.logits).astype(np.float64)
    index_path = args.index or f"{args.logits}.idx.csv"
    if not os.path.exists(index_path):
        raise FileNotFoundError(index_path)
    indices = read_index_sidecar(index_path)
    if len(indices) != len(logits):
        raise ValueError("index sidecar and logits differ in length")
    pseudo = pseudo_label(PropagationResult(logits, indices, "file"),
                          ConfidenceParams(args.tau, args.alpha_threshold))
    write_pseudo_labels(pseudo, args.out)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(confidence_summary(pseudo))


def _classifier_cfg(args):
    return ClassifierConfig(args.clf_lr, args.clf_epochs, args.clf_batch_size, args.seed, args.l2)


def cmd_train_classifier(args):
    X = read_embeddings(args.emb)
    labels = _load_labels(args.labels, len(X), args.classes)
    pseudo = read_pseudo_labels(args.pseudo) if args.pseudo else None
    save_classifier(train_classifier(X, labels, pseudo, _classifier_cfg(args)), args.out_model)


def cmd_evaluate(args):
    truth = _truth_array(args.truth)
    rows = []
    for path in args.pseudo:
        pseudo = read_pseudo_labels(path)
        name = os.path.splitext(os.path.basename(path))[0]
        rows.append(_evaluation_rows(name, pseudo, truth))
        if args.curve_dir:
            os.makedirs(args.curve_dir, exist_ok=True)
            _, _, correct = rank_correctness(pseudo, truth)
            if len(correct):
                write_curve(*accumulated_accuracy(correct), os.path.join(args.curve_dir, f"{name}_curve.csv"))
            _write_ap(pseudo_label_map(pseudo, truth), os.path.join(args.curve_dir, f"{name}_ap.csv"))
    _write_eval(rows, args.out)
    if args.model:
        if not (args.test_emb and args.test_truth):
            raise ConfigError("--test-emb", "--model needs --test-emb and --test-truth")
        Xt = read_embeddings(args.test_emb)
        yt = _truth_array(args.test_truth, len(Xt))
        pred, _ = predict(load_classifier(args.model), Xt)
        print(f"classifier_accuracy={np.mean(pred == yt):.9g}")


def cmd_pipeline(args):
    X = read_embeddings(args.emb)
    labels = _load_labels(args.labels, len(X), args.classes)
    truth = _truth_array(args.truth, len(X)) if args.truth else None
    os.makedirs(args.out_dir, exist_ok=True)
    params = ConfidenceParams(args.tau, args.alpha_threshold)
    rows = []
    for method in args.methods.split(","):
        res = _run_propagation(args, X, labels, None, method)
        _write_logits(res, os.path.join(args.out_dir, f"logits_{method}.emb"))
        pseudo = pseudo_label(res, params)
        write_pseudo_labels(pseudo, os.path.join(args.out_dir, f"pseudo_{method}.csv"))
        with open(os.path.join(args.out_dir, f"summary_{method}.csv"), "w") as fh:
            fh.write(confidence_summary(pseudo))
        clf = train_classifier(X, labels, pseudo, _classifier_cfg(args))
        save_classifier(clf, os.path.join(args.out_dir, f"classifier_{method}"))
        if truth is not None:
            rows.append(_evaluation_rows(method, pseudo, truth))
            _, _, correct = rank_correctness(pseudo, truth)
            if len(correct):
                write_curve(*accumulated_accuracy(correct),
                            os.path.join(args.out_dir, f"curve_{method}.csv"))
            _write_ap(pseudo_label_map(pseudo, truth), os.path.join(args.out_dir, f"ap_{method}.csv"))
    if truth is not None:
        _write_eval(rows, os.path.join(args.out_dir, "evaluation.csv"))


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train-metric": cmd_train_metric,
    "build-graph": cmd_build_graph,
    "propagate": cmd_propagate,
    "pseudo-label": cmd_pseudo_label,
    "train-classifier": cmd_train_classifier,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def _error_line(exc) -> str:
    msg = str(exc).replace("\n", " ").replace(",", ";")
    if isinstance(exc, ConfigError):
        return f"error=ConfigError,flag={exc.flag},message={msg}"
    if isinstance(exc, FileNotFoundError):
        return f"error=FileNotFoundError,path={exc.filename or exc.args[0]}"
    return f"error={type(exc).__name__},message={msg}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        validate(args)
        print(config_line(args), flush=True)
        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](args)
    except ConfigError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
