"""Command line front end.

Exit codes: 0 success, 1 unexpected error, 2 usage, 3 file format,
4 dimension mismatch, 5 non-convergence.
"""

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import io
from .classifier import LabeledSample, predict
from .errors import DimensionError, FormatError
from .experiment import (
    CONDITIONS, TRAINERS, Corruption, ExperimentConfig, entry_seed, make_feature,
    robustness_sweep, train,
)
from .linalg import numerical_rank
from .rpca import RpcaConfig, rpca_ialm
from .synth import SynthParams, generate

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_FORMAT, EXIT_DIMENSION, EXIT_NONCONVERGED = range(6)

logger = logging.getLogger("tracenorm")

# flag dest -> (config-file key, parser, built-in default)
OVERRIDABLE = {
    "lam": ("lambda", float, 1.0),
    "eps1": ("eps1", float, 1e-8),
    "eps2": ("eps2", float, 1e-8),
    "max_iter": ("max-iter", int, 2000),
    "inner_max_iter": ("inner-max-iter", int, 200),
    "trainer": ("trainer", str, "apg"),
    "batch_size": ("batch-size", int, 10),
    "snr_db": ("snr-db", float, None),
    "le_fraction": ("le-fraction", float, None),
    "use_rpca": ("use-rpca", None, False),
    "rpca_lambda": ("rpca-lambda", float, None),
    "lipschitz": ("lipschitz", str, "mn"),
    "corruption_domain": ("corruption-domain", str, "raw"),
    "seed": ("seed", int, 0),
}


class UsageError(Exception):
    pass


def _parse_bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path):
    """``key=value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("_", "-")] = value.strip()
    return out


def resolve_options(args):
    """Merge flags over the config file over built-in defaults."""
    conf = read_config_file(args.config) if getattr(args, "config", None) else {}
    known = {key for key, _, _ in OVERRIDABLE.values()}
    unknown = set(conf) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    opts = {}
    for dest, (key, parse, default) in OVERRIDABLE.items():
        flag = getattr(args, dest, None)
        if flag is not None:
            opts[dest] = flag
        elif key in conf:
            try:
                opts[dest] = _parse_bool(conf[key]) if parse is None else parse(conf[key])
            except ValueError:
                raise UsageError(f"bad value for {key}: {conf[key]!r}") from None
        else:
            opts[dest] = default
    return opts


def experiment_config(opts):
    if opts["snr_db"] is not None and opts["le_fraction"] is not None:
        raise UsageError("--snr-db and --le-fraction are mutually exclusive")
    if opts["snr_db"] is not None:
        corruption = Corruption("wgn", opts["snr_db"])
    elif opts["le_fraction"] is not None:
        corruption = Corruption("le", opts["le_fraction"])
    else:
        corruption = Corruption()
    try:
        return ExperimentConfig(
            trainer=opts["trainer"], lam=opts["lam"], eps1=opts["eps1"], eps2=opts["eps2"],
            max_iter=opts["max_iter"], inner_max_iter=opts["inner_max_iter"],
            batch_size=opts["batch_size"], lipschitz=opts["lipschitz"],
            corruption=corruption, corruption_domain=opts["corruption_domain"],
            use_rpca=opts["use_rpca"], rpca_lam=opts["rpca_lambda"], seed=opts["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_items(entries):
    """Read every manifest entry as ``(raw, sample_rate, label)``."""
    items = []
    for e in entries:
        try:
            raw, rate = io.read_sample_matrix(e.path)
        except OSError as exc:
            raise FormatError(f"{e.path}: {exc.strerror or exc}") from None
        items.append((raw, rate, e.label))
    return items


def featurize(entries, items, cfg, indices):
    samples = []
    shape = None
    for e, (raw, rate, label), idx in zip(entries, items, indices):
        X = make_feature(raw, rate, cfg, entry_seed(cfg.seed, 0, idx))
        if shape is None:
            shape = X.shape
        elif X.shape != shape:
            raise DimensionError(f"{e.path}: feature shape {X.shape} differs from {shape}",
                                 index=idx)
        samples.append(LabeledSample(X, label))
    return samples


def _split(entries, name):
    return [(i, e) for i, e in enumerate(entries) if e.split == name]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else io.format_float(x)


def cmd_rpca(args):
    D = io.read_matrix(args.input)
    cfg = RpcaConfig(lam=args.lam, tol=args.tol, max_iter=args.max_iter)
    result = rpca_ialm(D, cfg)
    prefix = args.out or os.path.splitext(args.input)[0]
    io.write_matrix(prefix + "_A.txt", result.A)
    io.write_matrix(prefix + "_E.txt", result.E)
    lam = cfg.lam if cfg.lam is not None else 1.0 / math.sqrt(max(D.shape))
    print(f"rank={numerical_rank(result.A, 1e-6) if np.any(result.A) else 0}")
    print(f"residual={io.format_float(result.residual)}")
    print(f"iterations={result.iterations}")
    print(f"lambda={io.format_float(lam)}")
    print(f"converged={'true' if result.converged else 'false'}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_train(args):
    cfg = experiment_config(resolve_options(args))
    entries = io.read_manifest(args.manifest)
    train_entries = _split(entries, "train")
    test_entries = _split(entries, "test")
    if not train_entries:
        raise UsageError("manifest has no train entries")
    all_items = load_items(entries)
    train_samples = featurize([e for _, e in train_entries], [all_items[i] for i, _ in train_entries],
                              cfg, [i for i, _ in train_entries])
    test_samples = featurize([e for _, e in test_entries], [all_items[i] for i, _ in test_entries],
                             cfg, [i for i, _ in test_entries]) if test_entries else []
    if test_samples and test_samples[0].X.shape != train_samples[0].X.shape:
        raise DimensionError("test features differ in shape from train features")
    trace = []
    model = train(train_samples, cfg, test=test_samples or None, trace=trace)
    io.write_model(args.out, model)
    trace_path = args.trace or args.out + ".trace.csv"
    write_csv(trace_path, ["t", "wall_seconds", "objective", "test_accuracy"],
              [[r.t, _num(r.wall_seconds), _num(r.objective), _num(r.test_accuracy)]
               for r in trace])
    info = model.info
    print(f"trainer={cfg.trainer}")
    print(f"samples={len(train_samples)}")
    print(f"iterations={info.n_iter}")
    print(f"converged={'true' if info.converged else 'false'}")
    if trace:
        print(f"objective={io.format_float(trace[-1].objective)}")
    if not info.converged:
        logger.warning("trainer stopped at its iteration cap")
        if args.strict:
            return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_predict(args):
    opts = resolve_options(args)
    cfg = experiment_config(opts)
    model = io.read_model(args.model)
    entries = io.read_manifest(args.manifest)
    chosen = [(i, e) for i, e in enumerate(entries) if args.split == "all" or e.split == args.split]
    if not chosen:
        raise UsageError(f"manifest has no {args.split} entries")
    rows = []
    correct = total = failed = 0
    for idx, e in chosen:
        (raw, rate, label), = load_items([e])
        X = make_feature(raw, rate, cfg, entry_seed(cfg.seed, 0, idx))
        try:
            score, pred = predict(model, X)
        except DimensionError as exc:
            print(f"error: {e.path}: {exc}", file=sys.stderr)
            rows.append([e.path, "", "", int(label), "dimension mismatch"])
            failed += 1
            continue
        rows.append([e.path, io.format_float(score), int(pred), int(label), ""])
        correct += pred == label
        total += 1
    header = ["path", "score", "predicted", "true", "error"]
    if args.out:
        write_csv(args.out, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    acc = correct / total if total else float("nan")
    print(f"accuracy={_num(acc) or 'nan'}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_DIMENSION if failed else EXIT_OK


def cmd_robustness(args):
    cfg = experiment_config(resolve_options(args))
    entries = io.read_manifest(args.manifest)
    items = load_items(entries)
    train_items = [it for it, e in zip(items, entries) if e.split == "train"]
    test_items = [it for it, e in zip(items, entries) if e.split == "test"]
    if not train_items or not test_items:
        raise UsageError("robustness needs both train and test entries")
    conditions = args.conditions.split(",") if args.conditions else None
    try:
        rows = robustness_sweep(train_items, test_items, cfg, conditions=conditions, jobs=args.jobs)
    except ValueError as exc:
        if "unknown conditions" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    write_csv(args.out, ["condition", "feature_mode", "accuracy", "train_seconds", "status"],
              [[r.condition, r.feature_mode, _num(r.accuracy), _num(r.train_seconds), r.status]
               for r in rows])
    for r in rows:
        print(f"{r.condition},{r.feature_mode},{_num(r.accuracy)}")
    return EXIT_OK


def cmd_synth(args):
    try:
        params = SynthParams(m=args.m, n=args.n, rank=args.rank, n_train=args.n_train,
                             n_test=args.n_test, jitter=args.jitter, noise=args.noise,
                             seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = generate(params)
    os.makedirs(os.path.join(args.out, "samples"), exist_ok=True)
    rows = []
    for split, samples in (("train", ds.train), ("test", ds.test)):
        for i, smp in enumerate(samples):
            rel = f"samples/{split}_{i:05d}.txt"
            io.write_matrix(os.path.join(args.out, rel), smp.X)
            rows.append((rel, smp.y, split))
    io.write_manifest(os.path.join(args.out, "manifest.csv"), rows)
    print(f"manifest={os.path.join(args.out, 'manifest.csv')}")
    print(f"entries={len(rows)}")
    return EXIT_OK


def _add_experiment_flags(p):
    p.add_argument("--config", help="key=value file; flags take precedence")
    p.add_argument("--lambda", dest="lam", type=float, help="trace-norm weight (default 1)")
    p.add_argument("--eps1", type=float, help="relative W-change tolerance (default 1e-8)")
    p.add_argument("--eps2", type=float, help="relative b-change tolerance (default 1e-8)")
    p.add_argument("--max-iter", type=int, help="APG iteration cap (default 2000)")
    p.add_argument("--inner-max-iter", type=int, help="online inner-loop cap (default 200)")
    p.add_argument("--trainer", choices=sorted(TRAINERS))
    p.add_argument("--batch-size", type=int, help="mini-batch size for *_batch trainers (default 10)")
    p.add_argument("--snr-db", type=float, help="corrupt with white Gaussian noise at this SNR")
    p.add_argument("--le-fraction", type=float, help="corrupt this fraction of entries with large errors")
    p.add_argument("--use-rpca", action="store_const", const=True,
                   help="replace each matrix by its robust-PCA low-rank part")
    p.add_argument("--rpca-lambda", type=float, help="robust PCA weight (default 1/sqrt(max(m,n)))")
    p.add_argument("--lipschitz", choices=("mn", "tight"))
    p.add_argument("--corruption-domain", choices=("raw", "feature"))
    p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="tracenorm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rpca", help="split a matrix file into low-rank and sparse parts")
    p.add_argument("input")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--out", help="output prefix (default: input path without extension)")
    p.set_defaults(func=cmd_rpca)

    p = sub.add_parser("train", help="fit a classifier on the train split of a manifest")
    p.add_argument("manifest")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--trace", help="trace CSV (default: <out>.trace.csv)")
    p.add_argument("--strict", action="store_true", help="exit 5 if the trainer hit its cap")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score manifest entries with a model")
    p.add_argument("model")
    p.add_argument("manifest")
    _add_experiment_flags(p)
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("robustness", help="plain vs robust-PCA features under corruption")
    p.add_argument("manifest")
    _add_experiment_flags(p)
    p.add_argument("--conditions", help="comma list from: " + ",".join(c[0] for c in CONDITIONS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth", help="write a synthetic two-class dataset and manifest")
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--n-train", type=int, default=40)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--jitter", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DimensionError as exc:
        print(f"dimension error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except FileNotFoundError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
