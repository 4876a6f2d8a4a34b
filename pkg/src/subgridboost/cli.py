"""Command-line interface.

Subcommands: ``train``, ``eval``, ``seed-study``, ``dump-importance``,
``emit-plotdata``.  Exit codes: 0 success, 1 configuration error, 2 runtime
error.  When ``SUBGRIDBOOST_OUT`` is set, relative output paths are rooted
there.

Configuration is a plain ``key=value`` file (``#`` comments allowed) whose
keys mirror the flag names; flags override file values.
"""

import argparse
import os
import sys
import numpy as np

from .boosting import compute_boost_weights
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, ConfigError
from .harness import (
    DatasetSpec,
    MetricsRecord,
    RunConfig,
    emit_plotdata,
    load_dataset,
    parse_plotdata,
    run_experiment,
    seed_study,
)
from .learners import build_probe
from .subgrid import (
    ImportanceMap,
    dump_importance_csv,
    dump_importance_pgm,
    full_mask,
    update_importance,
)

_CONFIG_KEYS = {
    "method",
    "profile",
    "nb",
    "epochs",
    "warmup_epochs",
    "nu",
    "keep_rows",
    "keep_cols",
    "lr",
    "weight_decay",
    "batch_size",
    "seed",
    "alpha_max",
    "loss_mode",
    "out",
    "dataset",
    "synth_n_train",
    "synth_n_test",
    "synth_geometry",
    "synth_classes",
    "synth_difficulty",
    "data_seed",
    "train_files",
    "test_file",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
}


def read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def _parse_geometry(text):
    try:
        parts = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad geometry {text!r}, expected CxHxW") from None
    if len(parts) != 3 or any(p < 1 for p in parts):
        raise ConfigError(f"bad geometry {text!r}, expected CxHxW")
    return parts


def _resolve_out(path):
    root = os.environ.get("SUBGRIDBOOST_OUT", "")
    if root and path and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _dataset_from_values(v):
    kind = v.get("dataset", "synthetic")
    return DatasetSpec(
        kind=kind,
        n_train=int(v.get("synth_n_train", 2000)),
        n_test=int(v.get("synth_n_test", 500)),
        geometry=_parse_geometry(v.get("synth_geometry", "1x16x16")),
        n_classes=int(v.get("synth_classes", 4)),
        difficulty=float(v.get("synth_difficulty", 0.5)),
        data_seed=int(v.get("data_seed", 0)),
        train_files=tuple(p for p in v.get("train_files", "").split(",") if p),
        test_file=v.get("test_file", ""),
        train_images=v.get("train_images", ""),
        train_labels=v.get("train_labels", ""),
        test_images=v.get("test_images", ""),
        test_labels=v.get("test_labels", ""),
    )


def _config_from_values(v):
    try:
        config = RunConfig(
            method=v.get("method", "subgrid-boostcnn"),
            dataset=_dataset_from_values(v),
            profile=v.get("profile", "tiny-cnn-2conv"),
            nb=int(v.get("nb", 10)),
            epochs=int(v.get("epochs", 15)),
            warmup_epochs=int(v["warmup_epochs"]) if v.get("warmup_epochs") else None,
            nu=float(v.get("nu", 0.02)),
            keep_rows=float(v.get("keep_rows", 0.9)),
            keep_cols=float(v.get("keep_cols", 0.9)),
            lr=float(v.get("lr", 1e-4)),
            weight_decay=float(v.get("weight_decay", 1e-4)),
            batch_size=int(v.get("batch_size", 64)),
            seed=int(v.get("seed", 0)),
            alpha_max=float(v.get("alpha_max", 10.0)),
            loss_mode=v.get("loss_mode", "ls-weights"),
            out=_resolve_out(v.get("out", "")),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return config.validate()


def _merge_values(args):
    values = read_config_file(args.config) if args.config else {}
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    return values


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--method")
    parser.add_argument("--profile")
    parser.add_argument("--nb", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    parser.add_argument("--nu", type=float)
    parser.add_argument("--keep-rows", dest="keep_rows", type=float)
    parser.add_argument("--keep-cols", dest="keep_cols", type=float)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--alpha-max", dest="alpha_max", type=float)
    parser.add_argument("--loss-mode", dest="loss_mode")
    parser.add_argument("--out")
    parser.add_argument("--dataset")
    parser.add_argument("--synth-n-train", dest="synth_n_train", type=int)
    parser.add_argument("--synth-n-test", dest="synth_n_test", type=int)
    parser.add_argument("--synth-geometry", dest="synth_geometry")
    parser.add_argument("--synth-classes", dest="synth_classes", type=int)
    parser.add_argument("--synth-difficulty", dest="synth_difficulty", type=float)
    parser.add_argument("--data-seed", dest="data_seed", type=int)
    parser.add_argument("--train-files", dest="train_files")
    parser.add_argument("--test-file", dest="test_file")
    parser.add_argument("--train-images", dest="train_images")
    parser.add_argument("--train-labels", dest="train_labels")
    parser.add_argument("--test-images", dest="test_images")
    parser.add_argument("--test-labels", dest="test_labels")


def _write_metrics(record, outdir):
    emit_plotdata([record], outdir)


def _cmd_train(args):
    config = _config_from_values(_merge_values(args))
    if not config.out:
        raise ConfigError("train needs --out (or out= in the config file)")
    result = run_experiment(config)
    os.makedirs(config.out, exist_ok=True)
    _write_metrics(result.record, config.out)
    save_checkpoint(result.ensemble, os.path.join(config.out, "ensemble.sgbc"))
    if result.importance is not None:
        dump_importance_csv(result.importance, os.path.join(config.out, "importance.csv"))
        dump_importance_pgm(result.importance, os.path.join(config.out, "importance.pgm"))
    print(f"{result.record.name}: final test accuracy {result.record.final_accuracy:.4f}")
    return 0


def _cmd_eval(args):
    config = _config_from_values(_merge_values(args))
    ensemble = load_checkpoint(args.checkpoint)
    _, test, _ = load_dataset(config.dataset)
    pred = ensemble.predict(test.inputs)
    accuracy = float(np.mean(pred == test.labels))
    print(f"accuracy {accuracy:.4f} on {len(test)} samples")
    return 0


def _cmd_seed_study(args):
    config = _config_from_values(_merge_values(args))
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s]
    except ValueError:
        raise ConfigError(f"bad --seeds {args.seeds!r}") from None
    report = seed_study(config, seeds)
    out = _resolve_out(args.out or config.out)
    if out:
        os.makedirs(out, exist_ok=True)
        emit_plotdata(report.records, out)
        with open(os.path.join(out, "seed_study.csv"), "w") as fh:
            fh.write("seed,final_accuracy\n")
            for s, acc in zip(report.seeds, report.final_accuracies):
                fh.write(f"{s},{acc!r}\n")
            fh.write(f"mean,{report.mean_accuracy!r}\n")
            fh.write(f"std,{report.std_accuracy!r}\n")
    print(
        f"{config.method}: mean {report.mean_accuracy:.4f}, "
        f"std {report.std_accuracy:.6f} over seeds {report.seeds}"
    )
    return 0


def _cmd_dump_importance(args):
    config = _config_from_values(_merge_values(args))
    ensemble = load_checkpoint(args.checkpoint)
    train, _, _ = load_dataset(config.dataset)
    c, h, w = train.geometry
    prev = ensemble.stages[-1].learner if ensemble.stages else ensemble.basic
    probe = build_probe(prev, ensemble.basic)
    weights = compute_boost_weights(ensemble.scores(train.inputs), train.labels)
    imp = ImportanceMap(h, w)
    update_importance(imp, probe, train.inputs, weights, full_mask(h, w))
    out = _resolve_out(args.out)
    dump_importance_csv(imp, out + ".csv")
    dump_importance_pgm(imp, out + ".pgm")
    print(f"wrote {out}.csv and {out}.pgm")
    return 0


def _cmd_emit_plotdata(args):
    runs = []
    for path in args.runs:
        rounds = parse_plotdata(path)
        name = os.path.splitext(os.path.basename(path))[0]
        method, _, seed = name.rpartition("-seed")
        record = MetricsRecord(method or name, int(seed) if seed.isdigit() else 0, rounds)
        runs.append(record)
    out = _resolve_out(args.out)
    paths = emit_plotdata(runs, out, baseline=args.baseline)
    print("\n".join(paths))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="subgridboost", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one experiment and save its artifacts")
    _add_config_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    _add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.set_defaults(func=_cmd_eval)

    p_seed = sub.add_parser("seed-study", help="repeat a run across seeds and report the spread")
    _add_config_flags(p_seed)
    p_seed.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_seed.set_defaults(func=_cmd_seed_study)

    p_dump = sub.add_parser("dump-importance", help="recompute and export an importance map")
    _add_config_flags(p_dump)
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.set_defaults(func=_cmd_dump_importance)

    p_emit = sub.add_parser("emit-plotdata", help="regroup run CSVs and emit a comparison table")
    p_emit.add_argument("--runs", nargs="+", required=True, help="per-run CSV files")
    p_emit.add_argument("--baseline", help="baseline run name or method")
    p_emit.add_argument("--out", required=True)
    p_emit.set_defaults(func=_cmd_emit_plotdata)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (OSError, CheckpointError, ValueError, ArithmeticError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entry():
    raise SystemExit(main())
