"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 partial
scenario failures in a suite run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import cpsc, icp
from .classifiers import fit_classifier, model_to_json
from .dataset import PARTS, DataError, FourWaySplit, LabelSpace, NoiseSpec, SplitSpec, load_csv, permute_labels, split
from .evaluation import evaluate
from .experiment import (
    ConfigError,
    ExperimentConfig,
    SyntheticSpec,
    format_report,
    generate_synthetic,
    run_suite,
    write_outputs,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("icpclean")


def _write_json(doc, path):
    text = json.dumps(doc, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def load_split_dir(directory, label_column="label") -> FourWaySplit:
    directory = Path(directory)
    classes_file = directory / "classes.json"
    space = LabelSpace(tuple(json.loads(classes_file.read_text()))) if classes_file.exists() else None
    parts = []
    for p in PARTS:
        ds = load_csv(directory / f"{p}.csv", label_column, label_space=space)
        space = ds.label_space
        parts.append(ds)
    return FourWaySplit(*parts)


def cmd_synth(args):
    weights = tuple(args.weights) if args.weights else None
    spec = SyntheticSpec(args.n, args.d, args.m, args.separation, args.sd, weights, args.seed)
    generate_synthetic(spec).to_csv(args.out, args.label_column)
    return EXIT_OK


def cmd_split(args):
    ds = load_csv(args.data, args.label_column)
    spec = SplitSpec(args.train, args.val, args.test, args.proper, not args.no_stratify, args.seed)
    parts = split(ds, spec)
    parts.save(args.out, args.label_column)
    (Path(args.out) / "classes.json").write_text(json.dumps(list(ds.label_space.classes)))
    return EXIT_OK


def cmd_permute(args):
    ds = load_csv(args.data, args.label_column)
    noisy, mask = permute_labels(ds, NoiseSpec(args.fraction, args.mode, args.seed))
    noisy.to_csv(args.out, args.label_column)
    if args.mask_out:
        _write_json({sid: bool(m) for sid, m in zip(ds.sample_ids, mask)}, args.mask_out)
    return EXIT_OK


def cmd_clean(args):
    parts = load_split_dir(args.split_dir, args.label_column)
    model = cpsc.fit(parts.proper, cpsc.CpscConfig(args.delta, args.temperature, args.variance_floor))
    cal = icp.calibrate(model, parts.calibration)
    pv = icp.p_values(model, cal, parts.proper)
    cleaned, report = icp.clean(parts.proper, pv, icp.CleaningPolicy(args.threshold, args.cutoff))
    if args.truth:
        truth = load_csv(args.truth, args.label_column, label_space=parts.proper.label_space)
        lookup = dict(zip(truth.sample_ids, truth.labels))
        try:
            true_labels = [lookup[s] for s in parts.proper.sample_ids]
        except KeyError as exc:
            raise DataError(f"truth file lacks sample id {exc.args[0]!r}") from None
        report.correctness = icp.assess_correctness(report, parts.proper.labels, true_labels)
    _write_json(report.to_dict(), args.out)
    if args.cleaned_out:
        cleaned.concat(parts.calibration).to_csv(args.cleaned_out, args.label_column)
    if args.model_out:
        Path(args.model_out).write_text(model.to_json())
    return EXIT_OK


def cmd_train_eval(args):
    train = load_csv(args.train, args.label_column)
    ev = load_csv(args.eval, args.label_column, label_space=train.label_space)
    model = fit_classifier(args.classifier, train)
    ms = evaluate(model.predict_proba(ev.features), ev.labels, train.n_classes)
    _write_json({"classifier": args.classifier, "metrics": ms.as_dict()}, args.out)
    if args.model_out:
        Path(args.model_out).write_text(model_to_json(model))
    return EXIT_OK


def cmd_suite(args):
    cfg = ExperimentConfig.from_json(args.config)
    if args.repeats is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "repeats": args.repeats})
    result = run_suite(cfg, workers=args.workers)
    write_outputs(result, args.out)
    if result.failures:
        log.error("%d scenario repeats failed; see summary.json", len(result.failures))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args):
    directory = Path(args.directory)
    try:
        summary = json.loads((directory / "summary.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read suite output in {directory}: {exc}") from None
    text = format_report(summary, args.split)
    (directory / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icpclean", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_label(p):
        p.add_argument("--label-column", default="label")
        return p

    p = with_label(sub.add_parser("synth", help="write a synthetic Gaussian-blob dataset"))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--sd", type=float, default=1.0)
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = with_label(sub.add_parser("split", help="proper/calibration/validation/test split"))
    p.add_argument("data")
    p.add_argument("--train", type=float, default=0.6)
    p.add_argument("--val", type=float, default=0.2)
    p.add_argument("--test", type=float, default=0.2)
    p.add_argument("--proper", type=float, default=0.8)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_split)

    p = with_label(sub.add_parser("permute", help="inject label noise"))
    p.add_argument("data")
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--mode", choices=("shuffle", "flip"), default="shuffle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", help="JSON file mapping sample id to changed flag")
    p.set_defaults(func=cmd_permute)

    p = with_label(sub.add_parser("clean", help="conformal cleaning of a prepared split"))
    p.add_argument("split_dir")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--cutoff", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--variance-floor", type=float, default=1e-8)
    p.add_argument("--truth", help="CSV with the true labels of the proper set")
    p.add_argument("--out", default="-", help="cleaning report JSON (default stdout)")
    p.add_argument("--cleaned-out", help="CSV of cleaned proper set joined with calibration")
    p.add_argument("--model-out", help="JSON dump of the fitted nonconformity model")
    p.set_defaults(func=cmd_clean)

    p = with_label(sub.add_parser("train-eval", help="fit a classifier and score it"))
    p.add_argument("--train", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--classifier", choices=("lda", "lr"), default="lr")
    p.add_argument("--out", default="-")
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("suite", help="run the full experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--repeats", type=int, help="override config repeats")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("report", help="summarise a suite output directory")
    p.add_argument("directory")
    p.add_argument("--split", choices=("validation", "test"), default="test")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, icp.CleaningError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
