"""Command-line entry point: one subcommand per pipeline stage.

Every subcommand accepts ``--config FILE`` (JSON). Keys are option names in
either snake_case or kebab-case; explicit flags win over the file. Failures
print ``ErrorName: message`` on stderr, remove any files the command had
started writing and exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .core import InvalidConfig, NirscError
from .features import FEATURE_KINDS, WindowSpec, extract_features
from .ingest import (
    SplitSpec, make_folds, read_dataset, read_fold_plan, stratified_split,
    write_dataset, write_fold_plan,
)
from .preprocess import snv_dataset

EXIT_FAILURE = 2


class _Outputs:
    """Tracks output paths so a failed command can remove what it wrote."""

    def __init__(self):
        self.paths: list[Path] = []

    def __call__(self, path) -> Path:
        p = Path(path)
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.paths:
            if p.exists():
                p.unlink()


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InvalidConfig(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc})") from None


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise InvalidConfig(f"missing required option(s): {flags}")


# ---------------------------------------------------------------- pipeline spec


def _pipeline_spec(args):
    from dataclasses import replace

    from .augment.gan import GanConfig
    from .pipeline import PipelineSpec

    base = dict(args.pipeline or {})
    if args.arm:
        base["arm"] = args.arm
    spec = PipelineSpec.from_dict(base)
    if args.model:
        spec = replace(spec, model=args.model, params={} if args.model != spec.model else spec.params)
    params = dict(spec.params)
    if args.params:
        params.update(json.loads(args.params) if isinstance(args.params, str) else args.params)
    if args.best:
        params.update(_read_json(args.best)["params"])
    window = {}
    if args.window_count is not None:
        window["window_count"] = args.window_count
    if args.overlap is not None:
        window["overlap_fraction"] = args.overlap
    if args.features:
        window["feature_mask"] = tuple(k.strip() for k in args.features.split(","))
    gan = spec.gan
    if args.gan_epochs is not None:
        gan = replace(gan, epochs=args.gan_epochs)
    spec = PipelineSpec.from_dict({**spec.to_dict(), "gan": GanConfig.to_dict(gan)})
    spec = spec.with_point({**params, **window})
    return replace(spec, seed=args.seed)


def _add_pipeline_options(p) -> None:
    p.add_argument("--arm", help="experiment arm, e.g. I-a, II-b, III-c")
    p.add_argument("--model", choices=("gbdt", "plsda"))
    p.add_argument("--params", help="model hyperparameters as a JSON object")
    p.add_argument("--best", help="best-point JSON written by `tune`")
    p.add_argument("--window-count", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--features", help="comma-separated statistics, default all")
    p.add_argument("--gan-epochs", type=int)
    p.set_defaults(pipeline=None)


# ---------------------------------------------------------------- commands


def cmd_synth(args, out: _Outputs) -> None:
    from .synth import SynthSpec, generate

    _require(args, "out")
    spec = SynthSpec(**(args.synth or {}))
    overrides = {k: getattr(args, k) for k in ("separation", "noise_sigma") if getattr(args, k) is not None}
    spec = SynthSpec(**{**spec.__dict__, **overrides, "seed": args.seed})
    write_dataset(generate(spec), out(args.out))
    if args.spec_out:
        _write_text(out(args.spec_out), spec.to_json() + "\n")


def cmd_split(args, out: _Outputs) -> None:
    _require(args, "data", "train_out", "test_out")
    data = read_dataset(args.data)
    train, test = stratified_split(data, SplitSpec(args.test_fraction, args.seed))
    write_dataset(train, out(args.train_out))
    write_dataset(test, out(args.test_out))
    if args.folds_out:
        write_fold_plan(make_folds(train, args.k, args.seed), out(args.folds_out))
    print(f"train {len(train)} test {len(test)}")


def cmd_preprocess(args, out: _Outputs) -> None:
    _require(args, "data", "out")
    write_dataset(snv_dataset(read_dataset(args.data)), out(args.out))


def cmd_features(args, out: _Outputs) -> None:
    _require(args, "data", "out")
    mask = tuple(k.strip() for k in args.features.split(",")) if args.features else FEATURE_KINDS
    spec = WindowSpec(args.window_count or 5, args.overlap or 0.0, mask)
    # features are always computed on SNV-normalised spectra
    fm = extract_features(snv_dataset(read_dataset(args.data)), spec)
    fm.to_csv(out(args.out))


def cmd_augment(args, out: _Outputs) -> None:
    from .augment import GanConfig, SmoteConfig, balance_with_gan, balance_with_smote

    _require(args, "data", "out")
    data = read_dataset(args.data)
    if args.method == "smote":
        result = balance_with_smote(data, args.space, SmoteConfig(k_neighbors=args.k_neighbors, seed=args.seed))
    else:
        cfg = GanConfig(output_dim=data.grid.count, seed=args.seed,
                        **({"epochs": args.gan_epochs} if args.gan_epochs else {}))
        result, trained = balance_with_gan(data, cfg, return_model=True)
        if trained is not None and args.generator_out:
            trained.generator.save(out(args.generator_out))
        if trained is not None and args.log_out:
            trained.write_log(out(args.log_out))
    write_dataset(result, out(args.out))


def _folds(args, train):
    if args.folds:
        return read_fold_plan(args.folds)
    return make_folds(train, args.k, args.fold_seed if args.fold_seed is not None else args.seed)


def cmd_cv(args, out: _Outputs) -> None:
    from .evaluation import report_rows, results_table, run_cv

    _require(args, "data", "out")
    train = read_dataset(args.data)
    spec = _pipeline_spec(args)
    report = run_cv(train, _folds(args, train), spec, name=args.name, jobs=args.jobs)
    _write_text(out(args.out), report.to_json() + "\n")
    table = results_table(report_rows([report]))
    if args.table_out:
        _write_text(out(args.table_out), table)
    print(table, end="")


def cmd_tune(args, out: _Outputs) -> None:
    from .tune import tune_pipeline

    _require(args, "data", "best_out")
    train = read_dataset(args.data)
    spec = _pipeline_spec(args)
    _, result = tune_pipeline(
        train, _folds(args, train), spec, budget=args.budget, seed=args.seed,
        metric=args.metric, family=args.family, sampler=args.sampler,
    )
    result.write_best(out(args.best_out))
    if args.history_out:
        result.write_history(out(args.history_out))
    print(f"best trial {result.best.trial}: {args.metric} = {result.best.objective:.6f}")


def cmd_train(args, out: _Outputs) -> None:
    from .evaluation import evaluate_test
    from .pipeline import fit_pipeline

    _require(args, "data", "out")
    train = read_dataset(args.data)
    spec = _pipeline_spec(args)
    if args.test:
        res = evaluate_test(train, read_dataset(args.test), spec)
        pipe = res.pipeline
        summary = {"counts": res.counts.__dict__, "metrics": res.metrics.as_dict(),
                   "statistic": "single held-out test evaluation", "spec": spec.to_dict()}
        if args.metrics_out:
            _write_text(out(args.metrics_out), json.dumps(summary, indent=2, sort_keys=True) + "\n")
        m = res.metrics
        print(f"test acc {m.acc:.3f} bacc {m.bacc:.3f} recall {m.recall:.3f} "
              f"precision {m.precision:.3f} f {m.f_score:.3f}")
    else:
        pipe = fit_pipeline(train, spec)
    pipe.save(out(args.out))


def cmd_predict(args, out: _Outputs) -> None:
    from .pipeline import FittedPipeline

    _require(args, "model", "data", "out")
    pipe = FittedPipeline.load(args.model)
    data = read_dataset(args.data)
    score = pipe.decision_function(data)
    label = pipe.predict(data)
    with open(out(args.out), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "score", "label"])
        for rid, s, lab in zip(data.ids, score, label):
            w.writerow([rid, repr(float(s)), int(lab)])


def cmd_explain(args, out: _Outputs) -> None:
    from .explain import importance_ranking, sample_background, shapley_attributions, write_attributions, write_ranking
    from .pipeline import FittedPipeline, feature_names

    _require(args, "model", "data", "attributions_out")
    pipe = FittedPipeline.load(args.model)
    data = read_dataset(args.data)
    background_data = read_dataset(args.background) if args.background else data
    X = pipe.transform(data)[: args.n_samples]
    B = sample_background(pipe.transform(background_data), args.n_background, args.seed)
    est = shapley_attributions(
        pipe.model.decision_function, B, X, n_permutations=args.n_permutations,
        seed=args.seed, feature_names=feature_names(pipe.spec, data.grid),
    )
    write_attributions(est, out(args.attributions_out), data.ids[: len(X)])
    ranking = importance_ranking(est)
    if args.ranking_out:
        write_ranking(ranking, out(args.ranking_out))
    for name, v in ranking[:10]:
        print(f"{name}\t{v:.6g}")


def cmd_report(args, out: _Outputs) -> None:
    from .evaluation import EvalReport, group_by_arm, report_rows, results_table

    if not args.reports:
        raise InvalidConfig("report needs at least one EvalReport JSON file")
    reports = [EvalReport.from_dict(_read_json(p)) for p in args.reports]
    parts = []
    for arm, group in group_by_arm(reports).items():
        table = results_table(report_rows(group), args.format)
        parts.append(table if args.format == "csv" else f"Arm {arm}\n\n{table}")
    text = "\n".join(parts)
    if args.out:
        _write_text(out(args.out), text)
    print(text, end="")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nirsc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="concurrent folds/trials; results do not depend on it")
        p.set_defaults(func=func)
        return p

    p = command("synth", cmd_synth, "generate a synthetic spectra dataset")
    p.add_argument("--out")
    p.add_argument("--spec-out", help="write the generator settings as JSON")
    p.add_argument("--separation", type=float)
    p.add_argument("--noise-sigma", type=float)
    p.set_defaults(synth=None)

    p = command("split", cmd_split, "stratified train/test split (and fold plan)")
    p.add_argument("--data")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--train-out")
    p.add_argument("--test-out")
    p.add_argument("--folds-out")
    p.add_argument("--k", type=int, default=5)

    p = command("preprocess", cmd_preprocess, "apply SNV to every spectrum")
    p.add_argument("--data")
    p.add_argument("--out")

    p = command("features", cmd_features, "SNV + windowed statistics to a feature CSV")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--window-count", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--features")

    p = command("augment", cmd_augment, "balance classes with SMOTE or a GAN")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--method", choices=("smote", "gan"), default="smote")
    p.add_argument("--space", choices=("raw", "snv"), default="raw", help="SMOTE interpolation space")
    p.add_argument("--k-neighbors", type=int, default=5)
    p.add_argument("--gan-epochs", type=int)
    p.add_argument("--generator-out")
    p.add_argument("--log-out")

    for name, func, help_ in (
        ("cv", cmd_cv, "cross-validate one pipeline"),
        ("tune", cmd_tune, "hyperparameter search by cross-validation"),
    ):
        p = command(name, func, help_)
        p.add_argument("--data")
        p.add_argument("--folds", help="fold plan JSON; otherwise a new plan is made")
        p.add_argument("--k", type=int, default=5)
        p.add_argument("--fold-seed", type=int)
        _add_pipeline_options(p)
    cv = sub.choices["cv"]
    cv.add_argument("--name", help="row label in tables")
    cv.add_argument("--out")
    cv.add_argument("--table-out")
    tune = sub.choices["tune"]
    tune.add_argument("--budget", type=int, default=200)
    tune.add_argument("--metric", default="bacc")
    tune.add_argument("--family", choices=("lightgbm", "xgboost"), default="lightgbm")
    tune.add_argument("--sampler", choices=("tpe", "random"), default="tpe")
    tune.add_argument("--best-out")
    tune.add_argument("--history-out")

    p = command("train", cmd_train, "fit a pipeline, optionally scoring a test set")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--out")
    p.add_argument("--metrics-out")
    _add_pipeline_options(p)

    p = command("predict", cmd_predict, "score a dataset with a saved pipeline")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out")

    p = command("explain", cmd_explain, "Shapley attributions for a saved pipeline")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--background")
    p.add_argument("--n-samples", type=int, default=20)
    p.add_argument("--n-background", type=int, default=100)
    p.add_argument("--n-permutations", type=int, default=128)
    p.add_argument("--attributions-out")
    p.add_argument("--ranking-out")

    p = command("report", cmd_report, "tabulate EvalReport JSON files per arm")
    p.add_argument("reports", nargs="*")
    p.add_argument("--format", choices=("text", "csv", "markdown"), default="text")
    p.add_argument("--out")
    return parser


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    config = _read_json(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest for a in sub._actions} | {"pipeline", "synth"}  # noqa: SLF001
    defaults = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise InvalidConfig(f"{args.config}: unknown option {key!r} for {args.command}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    out = _Outputs()
    try:
        args = _apply_config(parser, argv)
        args.func(args, out)
    except NirscError as exc:
        out.cleanup()
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, json.JSONDecodeError) as exc:
        out.cleanup()
        print(f"InvalidConfig: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
