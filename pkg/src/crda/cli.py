"""Command-line interface: ``crda {train,cv,predict,eval,synth,mc}``.

Exit codes: 0 success, 1 computation or file error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

from . import evaluation
from .classifier import SELECTOR_ORDER, Selector, predict
from .exceptions import CrdaError
from .fitting import VARIANTS, FitConfig, fit
from .io import load_dataset, load_mask, load_model, save_dataset, save_mask, save_model
from .model_selection import cross_validate


def _selectors(text):
    try:
        return tuple(Selector.parse(s) for s in text.split(",") if s)
    except CrdaError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sizes(text):
    try:
        sizes = tuple(int(s) for s in text.split(",") if s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid class sizes {text!r}") from None
    if len(sizes) < 2 or min(sizes) < 1:
        raise argparse.ArgumentTypeError("need at least two positive class sizes")
    return sizes


def _add_fit_options(sp):
    sp.add_argument("--data", required=True, help="training CSV (label column first)")
    sp.add_argument("--variant", choices=VARIANTS, default="crda1")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--grid-size", type=int, default=10)
    sp.add_argument("--selectors", type=_selectors, default=SELECTOR_ORDER,
                    help="comma list of variance,l1,l2,linf")
    sp.add_argument("--estimator", choices=("ell1", "ell2", "rie"))
    sp.add_argument("--priors", choices=("uniform", "empirical"), default="uniform")
    sp.add_argument("--eta", type=float, help="fixed Rie-PSCM penalty")
    sp.add_argument("--delta", type=float, help="fixed soft threshold (scrda)")
    sp.add_argument("--kub-scope", choices=("full", "fold"), default="full")


def _fit_config(args) -> FitConfig:
    return FitConfig(variant=args.variant, estimator=args.estimator, folds=args.folds,
                     grid_size=args.grid_size, selectors=args.selectors, seed=args.seed,
                     kub_scope=args.kub_scope, eta=args.eta, delta=args.delta,
                     priors=args.priors)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="fit a model and save it")
    _add_fit_options(sp)
    sp.add_argument("--out", required=True, help="model file to write")

    sp = sub.add_parser("cv", help="print the cross-validation error table")
    _add_fit_options(sp)

    sp = sub.add_parser("predict", help="predict labels for a dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-labels", action="store_true",
                    help="input has no label column; every column is a feature")

    sp = sub.add_parser("eval", help="score a model on a labelled dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--mask", help="CSV marking the truly informative features")
    sp.add_argument("--split-index", type=int, default=0)
    sp.add_argument("--timing", action="store_true",
                    help="report prediction wall-clock in act_seconds (else 0)")

    sp = sub.add_parser("synth", help="generate a synthetic train/test/mask triple")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--p1", type=int, required=True)
    sp.add_argument("--G", type=int)
    sp.add_argument("--sizes", type=_sizes, required=True, help="per-class totals, e.g. 35,35,35,35")
    sp.add_argument("--n-test", type=int, required=True)
    sp.add_argument("--shift", type=float, default=1.0)
    sp.add_argument("--noise-var", type=float, default=0.01)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("mc", help="Monte-Carlo split study, one CSV row per split")
    _add_fit_options(sp)
    sp.add_argument("--splits", type=int, default=10)
    sp.add_argument("--train-size", type=int, required=True)
    sp.add_argument("--mask")
    return parser


def _cmd_train(args, out):
    data = load_dataset(args.data)
    save_model(fit(data, _fit_config(args)), args.out)


def _cmd_cv(args, out):
    data = load_dataset(args.data)
    cfg = _fit_config(args)
    report = cross_validate(data, cfg.covariance_config(), cfg.cv_config(), cfg.priors)
    out.write(report.to_csv())


def _cmd_predict(args, out):
    model = load_model(args.model)
    data = load_dataset(args.data, has_labels=not args.no_labels,
                        class_names=None if args.no_labels else model.class_names)
    labels = predict(data.features, model)
    names = model.class_names or tuple(str(g) for g in range(1, model.n_classes + 1))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"])
        for g in labels:
            w.writerow([names[g - 1]])


def _cmd_eval(args, out):
    model = load_model(args.model)
    data = load_dataset(args.data, class_names=model.class_names)
    mask = load_mask(args.mask) if args.mask else None
    start = time.perf_counter()
    preds = predict(data.features, model)
    elapsed = time.perf_counter() - start if args.timing else 0.0
    rec = evaluation.evaluate_metrics(
        preds, data.labels, model.selected_rows, model.p, mask,
        act_seconds=elapsed, split_index=args.split_index, variant=model.variant,
        K=model.K, selector=model.selector.value if model.selector else None)
    out.write(evaluation.metrics_to_csv([rec]))


def _cmd_synth(args, out):
    if args.G is not None and args.G != len(args.sizes):
        raise CrdaError(f"--G={args.G} does not match {len(args.sizes)} class sizes")
    spec = evaluation.SyntheticSpec(args.p, args.p1, args.sizes, args.n_test,
                                    args.shift, args.noise_var, args.seed)
    train, test, mask = evaluation.make_partially_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    save_dataset(train, os.path.join(args.out, "train.csv"))
    save_dataset(test, os.path.join(args.out, "test.csv"))
    save_mask(mask, os.path.join(args.out, "mask.csv"), train.feature_names)


def _cmd_mc(args, out):
    data = load_dataset(args.data)
    mask = load_mask(args.mask) if args.mask else None
    cfg = _fit_config(args)
    records = evaluation.run_monte_carlo(data, lambda d: fit(d, cfg), args.splits,
                                         args.train_size, args.seed, mask, args.variant)
    out.write(evaluation.metrics_to_csv(records))


_COMMANDS = {"train": _cmd_train, "cv": _cmd_cv, "predict": _cmd_predict,
             "eval": _cmd_eval, "synth": _cmd_synth, "mc": _cmd_mc}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args, out)
    except (CrdaError, OSError) as exc:
        print(f"crda {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
