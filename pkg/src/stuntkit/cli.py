"""Command-line entry point: ``stuntkit <command> [options]``.

Commands: synth, resample, pipeline, label, calibrate. Every command accepts
--seed, --out, --config and --quiet. A config file holds ``key=value`` lines
naming any option of the command (dashes or underscores); flags given on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .anthropometry import fit_linear, label_dataset, load_pairs, load_reference, synth_cohort
from .dataset import (DataError, class_distribution, dataset_to_csv, load_dataset, make_rng, stratified_split,
                      write_text_atomic)
from .evaluation import ClassifierSpec, ExperimentReport, run_experiment_grid
from .resampling import METHODS, ResamplerConfig, generation_report, resample

DEFAULT_METHODS = "smote,radius-smote,edited-radius-smote"
DEFAULT_CLASSIFIERS = "forest,adaboost,bagging"


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text}")
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _flag(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="master seed for all randomness")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--config", type=Path, help="key=value file of option defaults")
    common.add_argument("--quiet", action="store_true", help="suppress informational output")

    parser = argparse.ArgumentParser(prog="stuntkit",
                                     description="Imbalanced-classification toolkit for child growth screening.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--proportions", type=_floats, default=[0.86, 0.12, 0.02],
                   help="Normal,Stunted,Stunting shares summing to 1")
    p.add_argument("--reference", type=Path, help="growth reference CSV (default: bundled table)")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("resample", parents=[common], help="oversample / clean a dataset")
    p.add_argument("--input", type=Path, required=True, help="labeled child CSV")
    p.add_argument("--method", required=True, help="one of: " + ", ".join(METHODS))
    _resampler_options(p)
    p.set_defaults(handler=cmd_resample)

    p = sub.add_parser("pipeline", parents=[common], help="split, resample, train and evaluate")
    p.add_argument("--input", type=Path, required=True, help="labeled child CSV")
    p.add_argument("--methods", type=_names, default=_names(DEFAULT_METHODS),
                   help=f"comma-separated resampling methods (default {DEFAULT_METHODS})")
    p.add_argument("--classifiers", type=_names, default=_names(DEFAULT_CLASSIFIERS),
                   help=f"comma-separated classifiers (default {DEFAULT_CLASSIFIERS})")
    p.add_argument("--split-fraction", type=_fraction, default=0.2, help="test share")
    p.add_argument("--n-trees", type=_positive, default=100, help="random forest size")
    p.add_argument("--n-bagging", type=_positive, default=100, help="bagging committee size")
    p.add_argument("--n-rounds", type=_positive, default=50, help="AdaBoost rounds")
    p.add_argument("--max-depth", type=_positive, help="depth limit for forest and bagging trees")
    p.add_argument("--no-voting", action="store_true", help="omit the voting committee rows")
    p.add_argument("--resample-before-split", type=_flag, nargs="?", const=True, default=False,
                   help="resample the whole dataset before splitting (test rows then include "
                        "synthetic samples; scores are optimistic)")
    _resampler_options(p)
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("label", parents=[common], help="append height-for-age status")
    p.add_argument("--input", type=Path, required=True, help="child CSV; a status column is optional")
    p.add_argument("--reference", type=Path, help="growth reference CSV (default: bundled table)")
    p.set_defaults(handler=cmd_label)

    p = sub.add_parser("calibrate", parents=[common], help="fit a sensor transfer function")
    p.add_argument("--input", type=Path, required=True, help="CSV with reference,measured columns")
    p.set_defaults(handler=cmd_calibrate)
    return parser


def _resampler_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-neighbors", type=_positive, default=5, help="same-class neighbors for interpolation")
    p.add_argument("--edit-k", type=_positive, default=3, help="neighbors consulted by the editing pass")
    p.add_argument("--enn-scope", choices=("all", "minority"), default="all")
    p.add_argument("--small-disjunct-policy", choices=("preserve", "discard"), default="preserve")
    p.add_argument("--literal-abs", type=_flag, nargs="?", const=True, default=False,
                   help="interpolate with |neighbor - parent| instead of the signed difference")


def _resampler_config(args) -> ResamplerConfig:
    return ResamplerConfig(k_neighbors=args.k_neighbors, edit_k=args.edit_k, seed=args.seed,
                           enn_scope=args.enn_scope, small_disjunct_policy=args.small_disjunct_policy,
                           literal_abs=args.literal_abs)


def _read_config(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise FileNotFoundError(f"no such config file: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}:{lineno}: expected key=value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config_path(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    config = _config_path(argv)
    command = next((t for t in argv if not t.startswith("-")), None)
    try:
        sub = _subparser(parser, command) if config and command else None
    except KeyError:
        sub = None
    if sub is not None:
        try:
            values = _read_config(Path(config))
        except (OSError, DataError) as exc:
            sub.error(str(exc))
        known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
        unknown = sorted(set(values) - set(known))
        if unknown:
            sub.error(f"unknown config key(s): {', '.join(unknown)}")
        defaults = {}
        for key, raw in values.items():
            action = known[key]
            # argparse runs string defaults through the option's type converter
            try:
                defaults[key] = _flag(raw) if action.nargs == 0 else raw
            except argparse.ArgumentTypeError as exc:
                sub.error(f"config key {key}: {exc}")
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _emit(args, text: str) -> None:
    if not args.quiet:
        sys.stdout.write(text)


def cmd_synth(args) -> int:
    ref = load_reference(args.reference)
    ds = synth_cohort(args.n, args.proportions, ref, make_rng(args.seed))
    dist = class_distribution(ds)
    provenance = ["command=synth", f"seed={args.seed}", f"n={args.n}",
                  "proportions=" + ",".join(repr(p) for p in args.proportions),
                  f"reference={args.reference or 'bundled'}"]
    provenance += [f"count.{name}={count}" for name, count, _ in dist.as_rows()]
    write_text_atomic(args.out / "cohort.csv", dataset_to_csv(ds))
    write_text_atomic(args.out / "cohort.provenance.txt", "\n".join(provenance) + "\n")
    _emit(args, "".join(f"{name}: {count} ({pct}%)\n" for name, count, pct in dist.as_rows()))
    return 0


def cmd_resample(args) -> int:
    if args.method not in METHODS:
        raise ValueError(f"unknown method {args.method!r}; valid methods: {', '.join(METHODS)}")
    ds = load_dataset(args.input, fractional_gender=True)
    out, batch = resample(ds, args.method, _resampler_config(args))
    report = generation_report(batch)
    write_text_atomic(args.out / "resampled.csv", dataset_to_csv(out))
    write_text_atomic(args.out / "resampled.provenance.txt", report.to_text())
    _emit(args, report.to_text())
    return 0


def cmd_pipeline(args) -> int:
    unknown = [m for m in args.methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; valid methods: {', '.join(METHODS)}")
    sizes = {"forest": args.n_trees, "bagging": args.n_bagging, "adaboost": args.n_rounds}
    bad = [c for c in args.classifiers if c not in sizes]
    if bad:
        raise ValueError(f"unknown classifier(s) {bad}; valid: forest, adaboost, bagging")
    specs = [ClassifierSpec(c, sizes[c], None if c == "adaboost" else args.max_depth) for c in args.classifiers]
    ds = load_dataset(args.input, fractional_gender=True)
    cfg = _resampler_config(args)
    if args.resample_before_split:
        # each method resamples the full dataset; its result is then split and scored unresampled
        reports = []
        for method in args.methods:
            full, _ = resample(ds, method, cfg)
            train, test = stratified_split(full, args.split_fraction, make_rng(args.seed, 2))
            reports.append(run_experiment_grid(train, test, ["none"], specs, args.seed, cfg,
                                               voting=not args.no_voting))
            for cell in reports[-1].cells:
                cell.method = method
        report = ExperimentReport([c for r in reports for c in r.cells], reports[0].classifiers, args.methods)
    else:
        train, test = stratified_split(ds, args.split_fraction, make_rng(args.seed, 2))
        report = run_experiment_grid(train, test, args.methods, specs, args.seed, cfg, voting=not args.no_voting)
    text, table = report.to_text(), report.to_csv()
    write_text_atomic(args.out / "report.txt", text)
    write_text_atomic(args.out / "report.csv", table)
    _emit(args, text)
    return 0


def cmd_label(args) -> int:
    ref = load_reference(args.reference)
    ds = label_dataset(load_dataset(args.input, require_status=False), ref)
    write_text_atomic(args.out / "labeled.csv", dataset_to_csv(ds))
    dist = class_distribution(ds)
    _emit(args, "".join(f"{name}: {count}\n" for name, count, _ in dist.as_rows()))
    return 0


def cmd_calibrate(args) -> int:
    fit = fit_linear(load_pairs(args.input))
    # always printed: this command's output is the result
    sys.stdout.write(f"slope={fit.slope!r}\nintercept={fit.intercept!r}\nr_squared={fit.r_squared!r}\n"
                     f"n={fit.n}\n")
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.handler(args)
    except (DataError, ValueError, KeyError, OSError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"stuntkit {args.command}: error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
