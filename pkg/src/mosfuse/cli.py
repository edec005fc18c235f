"""Command-line front end.

Exit codes: 0 success, 2 usage, 3 I/O failure, 4 data validation, 5 numerical failure.
Every run writes its fully resolved arguments next to its output as ``<out>.config``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .core import ScoreMatrix, align
from .errors import DataError, InvalidConfig, MosFuseError, NumericalError
from .fusers import METHODS, GbdtParams, TrainConfig, canonical_method, fit, predict
from .io import (
    dumps_json,
    atomic_write_text,
    load_calibration,
    load_model,
    read_answer,
    read_aux,
    read_features,
    read_labels,
    read_scores,
    save_calibration,
    save_model,
    write_answer,
    write_labels,
    write_scores,
)
from .metrics import evaluate, mse
from .semisup import CalibrationSet, pseudo_label, run_ood_pipeline
from .synth import SynthConfig, generate, generate_main_track, generate_ood_suite

log = logging.getLogger("mosfuse")

EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4, 5


def _default_seed() -> int:
    raw = os.environ.get("MOSFUSE_SEED")
    if raw is None:
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise SystemExit(f"MOSFUSE_SEED must be an unsigned integer, got {raw!r}") from None
    return seed


def _unsigned(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be an unsigned integer")
    return value


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _write_sidecar(target: Path, args: argparse.Namespace, extra: Optional[dict] = None) -> None:
    doc = {"command": args.command, "version": __version__}
    doc["args"] = {k: v for k, v in sorted(vars(args).items()) if k not in ("parser", "command")}
    if extra:
        doc.update(extra)
    atomic_write_text(f"{target}.config", dumps_json(doc))


def _train_config(args) -> TrainConfig:
    return TrainConfig(loss=args.loss, learning_rate=args.lr, max_epochs=args.max_epochs,
                       patience=args.patience, seed=args.seed,
                       validation_fraction=args.validation_fraction)


def _gbdt_params(args) -> GbdtParams:
    return GbdtParams(n_trees=args.n_trees, max_depth=args.max_depth, shrinkage=args.shrinkage,
                      min_leaf=args.min_leaf)


def _aux_vector(path, ids) -> np.ndarray:
    pairs = read_aux(path)
    table = ScoreMatrix([u for u, _ in pairs], ["aux"], np.array([[v] for _, v in pairs]).reshape(len(pairs), 1))
    lookup = table.row_index()
    missing = [u for u in ids if u not in lookup]
    if missing:
        raise DataError(f"aux file lacks values for {len(missing)} utterances, e.g. {missing[:3]}")
    return np.array([table.values[lookup[u], 0] for u in ids])


# -- subcommands --------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = SynthConfig(seed=args.seed, n_systems=args.systems, utts_per_system=args.utts_per_system,
                         k_subsystems=args.subsystems, subsystem_bias=args.bias,
                         subsystem_noise_sd=args.noise_sd, system_quality_range=tuple(args.quality_range),
                         ood_shift=args.ood_shift)
    written = []
    if args.ood:
        (lab_ds, lab_sc), unl_sc, (held_ds, held_sc) = generate_ood_suite(config)
        labels = {"ood_labeled_labels.csv": lab_ds, "ood_heldout_labels.csv": held_ds}
        scores = {"ood_labeled_scores.csv": lab_sc, "ood_unlabeled_scores.csv": unl_sc,
                  "ood_heldout_scores.csv": held_sc}
        for name, ds in labels.items():
            write_labels(out / name, ds)
        for name, sc in scores.items():
            write_scores(out / name, sc)
        written = sorted([*labels, *scores])
    elif args.main_track:
        for split, (ds, sc) in generate_main_track(config).items():
            write_labels(out / f"{split}_labels.csv", ds)
            write_scores(out / f"{split}_scores.csv", sc)
            written += [f"{split}_labels.csv", f"{split}_scores.csv"]
    else:
        ds, sc = generate(config)
        write_labels(out / "labels.csv", ds)
        write_scores(out / "scores.csv", sc)
        written = ["labels.csv", "scores.csv"]
    _write_sidecar(out / "synth", args, {"synth_config": config.to_dict(), "files": written})
    log.info("wrote %s to %s", ", ".join(written), out)
    return 0


def _load_inputs(args, labels_path, scores_path, features_path):
    dataset = read_labels(labels_path)
    if not dataset.labeled:
        raise DataError(f"{labels_path} has no complete mos column")
    if features_path:
        dataset, table = align(dataset, read_features(features_path))
    elif scores_path:
        dataset, table = align(dataset, read_scores(scores_path))
    else:
        raise InvalidConfig("a scores or features file is required")
    aux = _aux_vector(args.aux, dataset.utterance_ids) if args.method == "aux_fuser" else None
    return dataset, table, aux


def cmd_train(args) -> int:
    args.method = canonical_method(args.method)
    if args.method == "aux_fuser" and not args.aux:
        args.parser.error("--aux is required for --method aux_fuser")
    if args.method == "feature_regression" and not args.features:
        args.parser.error("--features is required for --method feature_regression")
    if not args.features and not args.train_scores:
        args.parser.error("--train-scores is required")
    if bool(args.val_labels) != bool(args.val_scores or args.val_features):
        args.parser.error("--val-labels needs --val-scores (or --val-features) and vice versa")
    train_ds, train_x, train_aux = _load_inputs(args, args.train_labels, args.train_scores, args.features)
    val = None
    if args.val_labels:
        val_ds, val_x, val_aux = _load_inputs(args, args.val_labels, args.val_scores, args.val_features)
        val = (val_x, val_ds.mos) if val_aux is None else (val_x, val_ds.mos, val_aux)
    cfg = _train_config(args)
    model = fit(args.method, train_x, train_ds.mos, cfg, aux=train_aux, val=val, clamp=args.clamp,
                gbdt=_gbdt_params(args), ridge_lambda=args.ridge_lambda, aux_transform=args.aux_transform)
    save_model(model, args.model_out)
    _write_sidecar(Path(args.model_out), args)
    train_mse = mse(predict(model, train_x, train_aux), train_ds.mos)
    summary = f"method={model.method} train_loss={model.train_meta.train_loss:.6g} train_mse={train_mse:.6g}"
    if val is not None:
        summary += f" val_mse={mse(predict(model, val[0], val[2] if len(val) > 2 else None), val[1]):.6g}"
    summary += f" epochs={model.train_meta.epochs}"
    print(summary)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if args.features:
        table = read_features(args.features)
    elif args.scores:
        table = read_scores(args.scores)
    else:
        args.parser.error("--scores or --features is required")
    aux = None
    if model.method == "aux_fuser":
        if not args.aux:
            args.parser.error("--aux is required for an aux_fuser model")
        aux = _aux_vector(args.aux, table.utterance_ids)
    preds = predict(model, table, aux)
    write_answer(args.out, table.utterance_ids, preds)
    _write_sidecar(Path(args.out), args)
    log.info("wrote %d predictions to %s", len(preds), args.out)
    return 0


def cmd_evaluate(args) -> int:
    dataset = read_labels(args.labels)
    if not dataset.labeled:
        raise DataError(f"{args.labels} has no complete mos column")
    answers = read_answer(args.pred)
    table = ScoreMatrix([u for u, _ in answers], ["pred"],
                        np.array([v for _, v in answers]).reshape(len(answers), 1))
    dataset, table = align(dataset, table)
    report = evaluate(dataset, table.values[:, 0])
    text = report.to_csv() if args.format == "csv" else report.to_table(Path(args.pred).name)
    if args.out:
        atomic_write_text(args.out, text)
        _write_sidecar(Path(args.out), args)
    sys.stdout.write(text)
    return 0


def cmd_pseudo_label(args) -> int:
    model = load_model(args.model)
    scores = read_scores(args.unlabeled_scores)
    cal = load_calibration(args.calibration) if args.calibration else CalibrationSet.identity(scores.subsystem_names)
    labels = pseudo_label(model, cal, scores)
    dataset = scores.to_dataset()
    # a labels file only holds MOS values in [1, 5]
    values = [min(5.0, max(1.0, v)) for _, v in labels]
    write_labels(args.out, type(dataset).from_arrays(dataset.utterance_ids, dataset.system_ids, values))
    _write_sidecar(Path(args.out), args)
    log.info("pseudo-labeled %d utterances", len(labels))
    return 0


def cmd_ood_pipeline(args) -> int:
    if args.method in ("feature_regression", "aux_fuser"):
        args.parser.error(f"--method {args.method} is not supported by the OOD pipeline")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    main = (read_labels(args.main_train_labels), read_scores(args.main_train_scores))
    ood = (read_labels(args.ood_labeled_labels), read_scores(args.ood_labeled_scores))
    unlabeled = read_scores(args.ood_unlabeled_scores)
    cfg = _train_config(args)
    art = run_ood_pipeline(main, ood, unlabeled, args.method, cfg, pseudo_weight=args.pseudo_weight,
                           clamp=args.clamp, gbdt=_gbdt_params(args))
    files = {"system_a": "system_a.json", "calibration_b": "calibration_b.json", "system_b": "system_b.json",
             "pseudo_labels": "pseudo_labels.csv", "calibration_c": "calibration_c.json",
             "system_c": "system_c.json"}
    save_model(art.system_a, out / files["system_a"])
    save_model(art.system_b, out / files["system_b"])
    save_model(art.system_c, out / files["system_c"])
    save_calibration(art.calibration_b, out / files["calibration_b"])
    save_calibration(art.calibration_c, out / files["calibration_c"])
    atomic_write_text(out / files["pseudo_labels"],
                      "utterance_id,mos\n" + "".join(f"{u},{v:.6f}\n" for u, v in art.pseudo_labels))
    manifest = {
        "method": art.method,
        "seed": art.seed,
        "train_config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "pseudo_weight": args.pseudo_weight,
        "files": files,
        "steps": [{"step": s.step, "rows": s.n_rows,
                   "train_loss": None if s.train_loss != s.train_loss else s.train_loss,
                   "val_loss": None if s.val_loss != s.val_loss else s.val_loss,
                   "epochs": s.epochs} for s in art.steps],
    }
    atomic_write_text(out / "manifest.json", dumps_json(manifest))
    _write_sidecar(out / "ood-pipeline", args)
    log.info("wrote pipeline artifacts to %s", out)
    return 0


# -- parser ------------------------------------------------------------------------------


def _add_training_flags(p):
    p.add_argument("--lr", type=float, default=1e-3, help="gradient-descent learning rate")
    p.add_argument("--max-epochs", type=int, default=10000)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--validation-fraction", type=float, default=0.2,
                   help="tail fraction held out for early stopping when no validation set is given")
    p.add_argument("--n-trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.add_argument("--min-leaf", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_unsigned, default=_default_seed(),
                        help="random seed (default: $MOSFUSE_SEED or 0)")
    common.add_argument("--clamp", action="store_true", help="clamp predictions to [1, 5]")
    common.add_argument("--loss", choices=("l1", "l2"), default="l1")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="mosfuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--systems", type=int, default=SynthConfig.n_systems)
    p.add_argument("--utts-per-system", type=int, default=SynthConfig.utts_per_system)
    p.add_argument("--subsystems", type=int, default=SynthConfig.k_subsystems)
    p.add_argument("--bias", type=_floats, default=None, help="comma-separated per-subsystem biases")
    p.add_argument("--noise-sd", type=_floats, default=None, help="comma-separated per-subsystem noise SDs")
    p.add_argument("--quality-range", type=float, nargs=2, default=list(SynthConfig.system_quality_range))
    p.add_argument("--ood-shift", type=float, default=0.4)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--ood", action="store_true", help="write the 136/540/540 OOD suite")
    mode.add_argument("--main-track", action="store_true", help="write 4974/1066/1066 train/val/test splits")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="fit a fusion model")
    p.add_argument("--method", required=True, choices=sorted(set(METHODS) | {"ols"}))
    p.add_argument("--train-labels", required=True)
    p.add_argument("--train-scores")
    p.add_argument("--val-labels")
    p.add_argument("--val-scores")
    p.add_argument("--features", help="training features (feature_regression, optional for gbdt)")
    p.add_argument("--val-features")
    p.add_argument("--aux", help="auxiliary column file covering train and validation utterances")
    p.add_argument("--aux-transform", choices=("none", "log1p"), default="none",
                   help="transform applied to the aux column (stored in the model)")
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=1e-3, help="ridge penalty for features")
    p.add_argument("--model-out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="write an answer file")
    p.add_argument("--model", required=True)
    p.add_argument("--scores")
    p.add_argument("--features")
    p.add_argument("--aux")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score an answer file against labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pseudo-label", parents=[common], help="label unlabeled scores with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--calibration")
    p.add_argument("--unlabeled-scores", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("ood-pipeline", parents=[common], help="run the four-step semi-supervised pipeline")
    p.add_argument("--main-train-labels", required=True)
    p.add_argument("--main-train-scores", required=True)
    p.add_argument("--ood-labeled-labels", required=True)
    p.add_argument("--ood-labeled-scores", required=True)
    p.add_argument("--ood-unlabeled-scores", required=True)
    p.add_argument("--method", default="proposed_fuser", choices=sorted(set(METHODS) | {"ols"}))
    p.add_argument("--pseudo-weight", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_ood_pipeline)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    func = args.func
    del args.func
    args.parser = _subparser(parser, args.command)
    try:
        return func(args)
    except InvalidConfig as exc:
        print(f"mosfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"mosfuse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, MosFuseError) as exc:
        print(f"mosfuse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"mosfuse: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
