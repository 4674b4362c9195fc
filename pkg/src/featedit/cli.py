"""Command-line interface.

Subcommands mirror the pipeline stages so any stage can be run, inspected,
or substituted through files:

    synth        emit synthetic train/test .feat files + ground truth + roles
    stats        per-sample per-channel kurtosis CSV
    rank         top activations of one channel (central 2x2 window)
    pca          2-component projection CSV for plotting
    edit         variance-guided masks + edited dataset
    rand-edit    random unit-drop baseline dataset
    merge        concatenate two datasets
    train        per-class SVMs (and box regressors when ground truth given)
    predict      score a dataset with saved models, emit raw detections
    nms          greedy suppression per image/class
    eval         average precision against ground truth
    run          the full experiment in one go, with manifest
    export-drops dropped channels with exemplar sample indices

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical or
degenerate-input failure. When --seed is omitted, the FEAT_EDIT_SEED
environment variable is used, then 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels, errors
from .edit import (
    EditConfig,
    build_all_masks,
    edit_dataset,
    merge_datasets,
    random_edit,
    read_masks_csv,
    variance_profile,
    write_masks_csv,
)
from .evaluate import EvalConfig, evaluate, nms_all, write_eval_csv, write_pr_csv
from .linear import SvmConfig, load_model, load_regressor, save_model, save_regressor
from .pipeline import (
    NEGATIVE_EDIT_MODES,
    VARIANTS,
    RunConfig,
    export_drops,
    run_pipeline,
)
from .stats import pca_project, rank_channel_activations, stats_matrix, write_pca_csv, write_stats_csv
from .store import (
    Dataset,
    DetectionRecord,
    LabeledSample,
    read_dataset,
    read_detections,
    read_ground_truth,
    write_dataset,
    write_detections,
    write_ground_truth,
)
from .synth import SynthSpec, generate, roles_dict, synthetic_ground_truth

_CONFIG_ERRORS = (errors.ConfigError,)
_DATA_ERRORS = (
    errors.FormatError,
    errors.ParseError,
    errors.IoError,
    errors.ShapeError,
    errors.GeometryError,
    errors.MissingClassError,
    errors.ClassIdError,
    errors.InputContractError,
    errors.EmptyInputError,
    errors.SpecError,
    ValueError,
    IndexError,
)
_NUMERICAL_ERRORS = (
    errors.DomainError,
    errors.UndefinedDistributionError,
    errors.InsufficientDataError,
    errors.DegenerateClassError,
    errors.DegenerateLabelsError,
    errors.NumericalError,
    errors.OracleScaleError,
)


def _default_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("FEAT_EDIT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise errors.ConfigError(f"FEAT_EDIT_SEED must be an integer, got {env!r}") from exc
    return 0


def _load_config_file(path: str) -> dict[str, str]:
    """Flat KEY=VALUE lines; blank lines and # comments ignored."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise errors.ConfigError(f"cannot read config file {path}: {exc}") from exc
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise errors.ConfigError(f"{path} line {line_no}: expected KEY=VALUE, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


# -- subcommand implementations ---------------------------------------------------


def _cmd_synth(args) -> int:
    noisy = frozenset(range(args.noisy_per_class))
    flat = frozenset(range(args.noisy_per_class, args.noisy_per_class + args.flat_count))
    spec = SynthSpec(
        num_classes=args.classes,
        channels=args.channels,
        spatial=args.spatial,
        n_per_class=args.per_class,
        noisy=tuple(noisy for _ in range(args.classes)),
        flat=flat,
        seed=_default_seed(args.seed),
        shift=args.shift,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = generate(spec)
    train_gt, test_gt = synthetic_ground_truth(spec)
    write_dataset(train, out / "train.feat")
    write_dataset(test, out / "test.feat")
    write_ground_truth(train_gt, out / "train_gt.csv")
    write_ground_truth(test_gt, out / "test_gt.csv")
    (out / "roles.json").write_text(json.dumps(roles_dict(spec), indent=2, sort_keys=True) + "\n")
    print(f"wrote train/test datasets ({len(train)}/{len(test)} samples) to {out}")
    return 0


def _cmd_stats(args) -> int:
    dataset = read_dataset(args.input)
    write_stats_csv(stats_matrix(dataset), args.output)
    print(f"wrote kurtosis matrix ({len(dataset)} x {dataset.channels}) to {args.output}")
    return 0


def _cmd_rank(args) -> int:
    dataset = read_dataset(args.input)
    indices = rank_channel_activations(dataset, args.channel, args.top)
    for rank, idx in enumerate(indices):
        print(f"{rank},{idx}")
    return 0


def _cmd_pca(args) -> int:
    dataset = read_dataset(args.input)
    result = pca_project(dataset.feature_matrix(), components=2)
    write_pca_csv(result, dataset.labels(), args.output)
    print(
        "top-2 variances: "
        + ", ".join(format(v, ".6g") for v in result.variances)
        + f"; wrote projections to {args.output}"
    )
    return 0


def _cmd_edit(args) -> int:
    dataset = read_dataset(args.input)
    cfg = EditConfig(intra_frac=args.intra_frac, inter_frac=args.inter_frac)
    stats = stats_matrix(dataset)
    profile = variance_profile(stats, dataset.labels(), dataset.num_classes)
    masks = build_all_masks(profile, cfg)
    write_masks_csv(masks, args.masks)
    write_dataset(edit_dataset(dataset, masks), args.output)
    dropped = sorted(masks[0].dropped())
    print(f"wrote masks to {args.masks} and edited dataset to {args.output}")
    print(f"class 0 drops {len(dropped)} of {dataset.channels} channels")
    return 0


def _cmd_rand_edit(args) -> int:
    dataset = read_dataset(args.input)
    rng = np.random.default_rng([_default_seed(args.seed), 931])
    samples = [
        LabeledSample(
            feature=random_edit(s.feature, args.drop_ratio, rng),
            class_id=s.class_id,
            box=s.box,
            image_id=s.image_id,
            difficult=s.difficult,
        )
        for s in dataset
    ]
    write_dataset(Dataset(samples=samples, num_classes=dataset.num_classes), args.output)
    print(f"wrote randomly edited dataset to {args.output}")
    return 0


def _cmd_merge(args) -> int:
    merged = merge_datasets(read_dataset(args.inputs[0]), read_dataset(args.inputs[1]))
    write_dataset(merged, args.output)
    print(f"wrote merged dataset ({len(merged)} samples) to {args.output}")
    return 0


def _cmd_train(args) -> int:
    from .linear import train_regressor, train_svm_binary
    from .pipeline import _edited_matrix, _pair_regression_targets

    dataset = read_dataset(args.train)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SvmConfig(
        reg_lambda=args.svm_lambda,
        epochs=args.epochs,
        seed=_default_seed(args.seed),
        tolerance=args.tolerance,
        positive_weight=args.pos_weight,
    )
    x = dataset.feature_matrix()
    labels = dataset.labels()
    units = dataset.spatial * dataset.spatial
    masks = read_masks_csv(args.masks) if args.masks else None
    for cls in range(dataset.num_classes):
        x_cls = x
        if masks is not None:
            x_cls = _edited_matrix(x, labels, masks, cls, args.negative_edit, units)
        y_cls = np.where(labels == cls, 1.0, -1.0)
        model = train_svm_binary(x_cls, y_cls, cfg, class_id=cls)
        save_model(model, out / f"svm_class{cls}.lmod")
    print(f"wrote {dataset.num_classes} SVM heads to {out}")

    if args.gt:
        ground_truth = read_ground_truth(args.gt)
        pairs = _pair_regression_targets(dataset, ground_truth, args.regress_min_iou)
        for cls, (rows, targets) in sorted(pairs.items()):
            reg = train_regressor(x[rows], np.asarray(targets), args.regress_lambda)
            save_regressor(reg, out / f"reg_class{cls}.rmod")
        print(f"wrote {len(pairs)} box regressors to {out}")
    return 0


def _cmd_predict(args) -> int:
    dataset = read_dataset(args.test)
    models_dir = Path(args.models_dir)
    models = []
    for cls in range(dataset.num_classes):
        path = models_dir / f"svm_class{cls}.lmod"
        if not path.exists():
            raise errors.MissingClassError(f"no model file for class {cls}: {path}")
        models.append(load_model(path))
    regressors = {}
    for cls in range(dataset.num_classes):
        path = models_dir / f"reg_class{cls}.rmod"
        if path.exists():
            regressors[cls] = load_regressor(path)

    x = dataset.feature_matrix()
    weight_matrix = np.stack([m.weights for m in models])
    bias_vector = np.array([m.bias for m in models])
    scores = x @ weight_matrix.T + bias_vector
    detections = []
    for i, sample in enumerate(dataset):
        for cls in range(dataset.num_classes):
            box = sample.box
            if cls in regressors:
                box = regressors[cls].refine(box, x[i])
            detections.append(
                DetectionRecord(
                    image_id=sample.image_id,
                    class_id=cls,
                    score=float(scores[i, cls]),
                    box=box,
                )
            )
    write_detections(detections, args.output)
    print(f"wrote {len(detections)} detections to {args.output}")
    return 0


def _cmd_nms(args) -> int:
    detections = read_detections(args.input)
    kept = nms_all(detections, args.iou)
    write_detections(kept, args.output)
    print(f"kept {len(kept)} of {len(detections)} detections")
    return 0


def _cmd_eval(args) -> int:
    detections = read_detections(args.detections)
    ground_truth = read_ground_truth(args.gt)
    cfg = EvalConfig(nms_iou=args.nms_iou, match_iou=args.match_iou, ap_mode=args.ap_mode)
    report = evaluate(detections, ground_truth, cfg, args.classes)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_eval_csv(report, out / "eval.csv")
    for cls, curve in enumerate(report.per_class):
        write_pr_csv(curve, out / f"pr_class{cls}.csv")
    for cls, curve in enumerate(report.per_class):
        print(f"class {cls}: ap={curve.ap:.6f} (gt={curve.num_gt}, tp={curve.num_tp}, fp={curve.num_fp})")
    print(f"mAP={report.mean_ap:.6f}")
    return 0


def _cmd_run(args) -> int:
    file_values = _load_config_file(args.config) if args.config else {}

    def pick(key: str, cli_value, cast, default):
        if cli_value is not None:
            return cli_value
        if key in file_values:
            try:
                return cast(file_values[key])
            except ValueError as exc:
                raise errors.ConfigError(f"config key {key}: {exc}") from exc
        return default

    def pick_path(key: str, cli_value, required=False):
        value = cli_value if cli_value is not None else file_values.get(key)
        if required and value is None:
            raise errors.ConfigError(f"missing required option: {key}")
        return value

    seed = pick("seed", args.seed, int, None)
    seed = _default_seed(seed)
    cfg = RunConfig(
        train_path=pick_path("train", args.train, required=True),
        test_path=pick_path("test", args.test, required=True),
        out_dir=pick_path("out_dir", args.out_dir, required=True),
        variant=pick("variant", args.variant, str, "merged"),
        train_gt_path=pick_path("train_gt", args.train_gt),
        test_gt_path=pick_path("test_gt", args.test_gt),
        roles_path=pick_path("roles", args.roles),
        edit=EditConfig(
            intra_frac=pick("intra_frac", args.intra_frac, float, 0.20),
            inter_frac=pick("inter_frac", args.inter_frac, float, 0.30),
            seed=seed,
        ),
        svm=SvmConfig(
            reg_lambda=pick("svm_lambda", args.svm_lambda, float, 1e-4),
            epochs=pick("epochs", args.epochs, int, 50),
            seed=seed,
            tolerance=pick("svm_tolerance", args.tolerance, float, 1e-6),
            positive_weight=pick("pos_weight", args.pos_weight, float, 1.0),
        ),
        eval=EvalConfig(
            nms_iou=pick("nms_iou", args.nms_iou, float, 0.30),
            match_iou=pick("match_iou", args.match_iou, float, 0.50),
            ap_mode=pick("ap_mode", args.ap_mode, str, "eleven_point"),
        ),
        negative_edit=pick("negative_edit", args.negative_edit, str, "classifier-class"),
        random_drop_ratio=pick("random_drop_ratio", args.random_drop_ratio, float, 0.5),
        regress_lambda=pick("regress_lambda", args.regress_lambda, float, 1e-4),
        regress_min_iou=pick("regress_min_iou", args.regress_min_iou, float, 0.6),
        seed=seed,
    )
    report = run_pipeline(cfg)
    print(f"variant={report['variant']} accuracy={report['accuracy']:.4f} mAP={report['mean_ap']:.4f}")
    if "planted_recovery" in report:
        rec = report["planted_recovery"]
        print(
            f"recovery: noisy={rec['noisy_recall']:.3f}"
            f" flat={rec['flat_recall']:.3f}"
            f" friendly_dropped={rec['friendly_dropped_frac']:.3f}"
        )
    print(f"report written to {Path(cfg.out_dir) / 'report.json'}")
    return 0


def _cmd_export_drops(args) -> int:
    dataset = read_dataset(args.input)
    masks = read_masks_csv(args.masks)
    export_drops(masks, dataset, args.output, k=args.top)
    print(f"wrote drop exemplars to {args.output}")
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featedit",
        description="Variance-guided channel editing for conv feature maps.",
    )
    parser.add_argument(
        "--backend-info", action="store_true", help="print the kernel backend and exit"
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate synthetic datasets with planted channel roles")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--spatial", type=int, default=6)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--noisy-per-class", type=int, default=4)
    p.add_argument("--flat-count", type=int, default=10)
    p.add_argument("--shift", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("stats", help="kurtosis matrix CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("rank", help="top samples by central-window activation of a channel")
    p.add_argument("--input", required=True)
    p.add_argument("--channel", type=int, required=True)
    p.add_argument("--top", type=int, default=9)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("pca", help="2-component projection CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("edit", help="build masks and edited dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--intra-frac", type=float, default=0.20)
    p.add_argument("--inter-frac", type=float, default=0.30)
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("rand-edit", help="random unit-drop baseline")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--drop-ratio", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_rand_edit)

    p = sub.add_parser("merge", help="concatenate two datasets")
    p.add_argument("--inputs", nargs=2, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("train", help="train per-class SVMs (and regressors with --gt)")
    p.add_argument("--train", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--masks", default=None, help="apply masks from CSV during training")
    p.add_argument("--negative-edit", choices=NEGATIVE_EDIT_MODES, default="classifier-class")
    p.add_argument("--svm-lambda", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--pos-weight", type=float, default=1.0)
    p.add_argument("--gt", default=None, help="ground-truth CSV enabling box regressors")
    p.add_argument("--regress-lambda", type=float, default=1e-4)
    p.add_argument("--regress-min-iou", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="score a dataset with saved models")
    p.add_argument("--test", required=True)
    p.add_argument("--models-dir", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("nms", help="greedy suppression per image/class")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--iou", type=float, default=0.30)
    p.set_defaults(func=_cmd_nms)

    p = sub.add_parser("eval", help="average precision against ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--nms-iou", type=float, default=0.30)
    p.add_argument("--match-iou", type=float, default=0.50)
    p.add_argument("--ap-mode", choices=("eleven_point", "continuous"), default="eleven_point")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run", help="full pipeline with manifest")
    p.add_argument("--config", default=None, help="flat KEY=VALUE config file")
    p.add_argument("--train", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--train-gt", default=None)
    p.add_argument("--test-gt", default=None)
    p.add_argument("--roles", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--intra-frac", type=float, default=None)
    p.add_argument("--inter-frac", type=float, default=None)
    p.add_argument("--svm-lambda", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--pos-weight", type=float, default=None)
    p.add_argument("--nms-iou", type=float, default=None)
    p.add_argument("--match-iou", type=float, default=None)
    p.add_argument("--ap-mode", choices=("eleven_point", "continuous"), default=None)
    p.add_argument("--negative-edit", choices=NEGATIVE_EDIT_MODES, default=None)
    p.add_argument("--random-drop-ratio", type=float, default=None)
    p.add_argument("--regress-lambda", type=float, default=None)
    p.add_argument("--regress-min-iou", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("export-drops", help="dropped channels with exemplar indices")
    p.add_argument("--input", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--top", type=int, default=9)
    p.set_defaults(func=_cmd_export_drops)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.backend_info:
        print(f"kernel backend: {_kernels.backend()}")
        return 0
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
