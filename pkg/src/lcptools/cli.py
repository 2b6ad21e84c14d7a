"""Command-line interface exposing every pipeline stage.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Subcommands
that produce reports write a PNG figure next to the CSV output.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from . import ensemble, evalbench, pmc
from .cellstats import build_training_set, field_statistics, load_training_set, save_training_set
from .errors import LcpError, MalformedManifest, NotNormalized
from .figures import save_ablation_figure, save_bench_figure, save_error_figure
from .render import ColormapSpec, render_lcp, write_image
from .surrogate import (
    MlpConfig,
    TrainConfig,
    cross_validate,
    load_model,
    predict_field,
    save_model,
    train,
)

import argparse


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parse_widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise _UsageError(f"bad width list {text!r}") from exc


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise _UsageError(f"bad float list {text!r}") from exc


def _parse_iso_range(text: str) -> list[float]:
    """Parse 'start:stop:step' (inclusive) or a comma list of isovalues."""
    if ":" in text:
        try:
            start, stop, step = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise _UsageError(f"bad isovalue range {text!r}") from exc
        if step <= 0 or stop < start:
            raise _UsageError(f"bad isovalue range {text!r}")
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 9) for i in range(count)]
    return _parse_floats(text)


def _load_normalized(manifest: str):
    dataset = ensemble.load_dataset(manifest)
    if not dataset.normalized:
        raise NotNormalized(
            f"{manifest}: dataset is not normalized; run the 'normalize' subcommand first"
        )
    return dataset


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        folds=getattr(args, "folds", 5),
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
    )


def _mlp_config(args) -> MlpConfig:
    return MlpConfig(
        mean_layers=_parse_widths(args.mean_layers),
        cov_layers=_parse_widths(args.cov_layers),
        iso_layers=_parse_widths(args.iso_layers),
        decoder_layers=_parse_widths(args.decoder_layers),
        omega0=args.omega0,
    )


def _add_train_args(sub, with_folds=False):
    sub.add_argument("--epochs", type=int, default=100)
    sub.add_argument("--batch-size", type=int, default=1024)
    sub.add_argument("--lr", type=float, default=1e-4)
    sub.add_argument("--seed", type=int, default=0)
    if with_folds:
        sub.add_argument("--folds", type=int, default=5)
    sub.add_argument("--mean-layers", default="128,128")
    sub.add_argument("--cov-layers", default="128,128")
    sub.add_argument("--iso-layers", default="128,128")
    sub.add_argument("--decoder-layers", default="384,256,128,1")
    sub.add_argument("--omega0", type=float, default=30.0)


def _cmd_gen(args) -> int:
    spec_data = json.loads(Path(args.spec).read_text())
    try:
        spec = ensemble.SyntheticSpec(**spec_data)
    except TypeError as exc:
        raise MalformedManifest(f"{args.spec}: {exc}") from exc
    dataset = ensemble.generate_synthetic(spec, args.seed)
    ensemble.save_dataset(dataset, args.out)
    print(f"wrote {dataset.members}x{dataset.timesteps} fields "
          f"({dataset.width}x{dataset.height}) to {args.out}")
    return 0


def _cmd_normalize(args) -> int:
    dataset = ensemble.load_dataset(args.manifest)
    normalized = ensemble.normalize_global(dataset)
    ensemble.save_dataset(normalized, args.out)
    print(f"normalized over [{normalized.norm_min:g}, {normalized.norm_max:g}] -> {args.out}")
    return 0


def _cmd_stats(args) -> int:
    dataset = _load_normalized(args.manifest)
    stats = field_statistics(dataset, args.t)
    variances = stats.cov[:, :4]
    print(f"cells: {stats.cells_w}x{stats.cells_h} ({len(stats)})")
    print(f"mean vertex variance: {variances.mean():.6g}")
    print(f"max |covariance|: {np.abs(stats.cov[:, 4:]).max():.6g}")
    print(f"cells with nonzero spread: {(variances.sum(axis=1) > 0).sum()}")
    return 0


def _cmd_pmc(args) -> int:
    dataset = _load_normalized(args.manifest)
    stats = field_statistics(dataset, args.t)
    cfg = pmc.McConfig(r=args.r, seed=args.seed)
    if args.parallel > 1:
        field = pmc.lcp_field_parallel(stats, args.iso, cfg, args.parallel)
    else:
        field = pmc.lcp_field_serial(stats, args.iso, cfg)
    out = args.out or f"{Path(args.manifest).stem}_t{args.t}_iso{args.iso:g}.lcp"
    pmc.save_lcp_field(field, out)
    print(f"wrote {field.cells_w}x{field.cells_h} LCP field to {out}")
    return 0


def _cmd_build_train(args) -> int:
    dataset = _load_normalized(args.manifest)
    if args.steps is not None:
        timesteps = [int(v) for v in args.steps.split(",")]
    elif args.t_train is not None:
        timesteps = list(range(args.t_train))
    else:
        timesteps = list(range(dataset.timesteps))
    isovalues = _parse_iso_range(args.isos)
    cfg = pmc.McConfig(r=args.r, seed=args.seed)
    samples = build_training_set(
        dataset, timesteps, isovalues, cfg,
        workers=args.workers, drop_zero_lcp=args.drop_zero_lcp,
    )
    save_training_set(
        samples, args.out,
        isovalues=isovalues, source=str(args.manifest), mc_seed=args.seed, r=args.r,
    )
    print(f"wrote {samples.shape[0]} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    samples, _ = load_training_set(args.trainset)
    model, history = train(samples, _mlp_config(args), _train_config(args))
    save_model(model, args.out)
    losses_path = Path(str(args.out) + ".losses.csv")
    losses_path.write_text(
        "epoch,mean_loss\n" + "".join(f"{i},{v:.8f}\n" for i, v in enumerate(history))
    )
    print(f"trained {len(history)} epochs (final loss {history[-1]:.6g}) -> {args.out}")
    return 0


def _cmd_cv(args) -> int:
    samples, _ = load_training_set(args.trainset)
    result = cross_validate(samples, _mlp_config(args), _train_config(args))
    out = Path(args.out)
    lines = ["fold,train_loss,val_loss,val_median_abs_err"]
    for fm in result.folds:
        lines.append(f"{fm.fold},{fm.train_loss:.8f},{fm.val_loss:.8f},{fm.val_median_abs_err:.8f}")
    out.write_text("\n".join(lines) + "\n")
    if args.model_out:
        save_model(result.model, args.model_out)
        print(f"final model (trained on all samples) -> {args.model_out}")
    mean_med = float(np.mean([fm.val_median_abs_err for fm in result.folds]))
    print(f"{len(result.folds)} folds, mean val median abs err {mean_med:.6g} -> {out}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    dataset = _load_normalized(args.manifest)
    stats = field_statistics(dataset, args.t)
    field = predict_field(model, stats, args.iso)
    out = args.out or f"{Path(args.manifest).stem}_t{args.t}_iso{args.iso:g}_pred.lcp"
    pmc.save_lcp_field(field, out)
    print(f"wrote surrogate LCP field to {out}")
    return 0


def _cmd_bench(args) -> int:
    dataset = _load_normalized(args.manifest)
    stats = field_statistics(dataset, args.t)
    r_values = [int(v) for v in args.r_list.split(",")]
    report = evalbench.bench(
        stats, args.iso, r_values, args.workers, args.model,
        repetitions=args.reps, dataset=dataset, timestep=args.t,
    )
    evalbench.write_timing_csv(report, args.out)
    figure = Path(args.out).with_suffix(".png")
    save_bench_figure(report, figure)
    print(f"wrote timing report to {args.out} and {figure}")
    return 0


def _cmd_report(args) -> int:
    pred = pmc.load_lcp_field(args.pred)
    truth = pmc.load_lcp_field(args.truth)
    report = evalbench.error_report(pred, truth)
    base = Path(args.out)
    csv_path = base.with_suffix(".csv")
    evalbench.write_error_csv(report, csv_path)
    hist_path = base.with_name(base.stem + "_hist.csv")
    evalbench.write_histogram_csv(report, hist_path)
    fig_path = base.with_suffix(".png")
    save_error_figure(report, fig_path)
    print(f"median abs error {report.median:.6f} (max {report.max:.6f}) "
          f"-> {csv_path}, {hist_path}, {fig_path}")
    return 0


def _cmd_ablate(args) -> int:
    samples, _ = load_training_set(args.trainset)
    eval_samples, _ = load_training_set(args.evalset)
    fractions = _parse_floats(args.fractions)
    reports = evalbench.ablate_training_size(
        samples, fractions, _mlp_config(args), _train_config(args), eval_samples
    )
    base = Path(args.out)
    csv_path = base.with_suffix(".csv")
    lines = ["fraction," + evalbench.ERROR_CSV_HEADER]
    for f, rep in zip(fractions, reports):
        lines.append(
            f"{f},{rep.count},{rep.q1:.8f},{rep.median:.8f},{rep.q3:.8f},{rep.mean:.8f},{rep.max:.8f}"
        )
    csv_path.write_text("\n".join(lines) + "\n")
    fig_path = base.with_suffix(".png")
    save_ablation_figure(fractions, reports, fig_path)
    print(f"ablation over {len(fractions)} fractions -> {csv_path}, {fig_path}")
    return 0


def _cmd_render(args) -> int:
    field = pmc.load_lcp_field(args.field)
    cmap = ColormapSpec(gamma=args.gamma)
    image = render_lcp(field, cmap, args.scale)
    out = args.out or f"{Path(args.field).stem}.ppm"
    write_image(image, out)
    print(f"wrote {image.shape[1]}x{image.shape[0]} image to {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lcptools", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic ensemble dataset")
    p.add_argument("spec", help="JSON file with SyntheticSpec fields")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output manifest path")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("normalize", help="min-max normalize a dataset globally")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="output manifest path")
    p.set_defaults(func=_cmd_normalize)

    p = sub.add_parser("stats", help="summarize per-cell statistics of one time step")
    p.add_argument("manifest")
    p.add_argument("--t", type=int, default=0)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("pmc", help="Monte Carlo LCP field for one time step")
    p.add_argument("manifest")
    p.add_argument("--iso", type=float, required=True)
    p.add_argument("--r", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=1, metavar="WORKERS")
    p.add_argument("--t", type=int, default=0)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_pmc)

    p = sub.add_parser("build-train", help="build a labeled training set")
    p.add_argument("manifest")
    p.add_argument("--isos", default="0.1:0.9:0.1", help="start:stop:step or comma list")
    p.add_argument("--t-train", type=int, default=None, help="use the first N time steps")
    p.add_argument("--steps", default=None, help="explicit comma list of time steps")
    p.add_argument("--r", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--drop-zero-lcp", action="store_true")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_build_train)

    p = sub.add_parser("train", help="train the surrogate on a training set")
    p.add_argument("trainset")
    _add_train_args(p)
    p.add_argument("-o", "--out", required=True, help="output model path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation metrics")
    p.add_argument("trainset")
    _add_train_args(p, with_folds=True)
    p.add_argument("-o", "--out", required=True, help="metrics CSV path")
    p.add_argument("--model-out", default=None, help="save the final all-samples model here")
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("predict", help="surrogate LCP field for one time step")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--iso", type=float, required=True)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("bench", help="time serial MC, parallel MC and the surrogate")
    p.add_argument("manifest")
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--iso", type=float, required=True)
    p.add_argument("--r-list", default="1000,2000,4000,8000")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("-o", "--out", default="bench.csv")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="pixel-wise error report between two fields")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("-o", "--out", default="report")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("ablate", help="error vs training-set fraction")
    p.add_argument("trainset")
    p.add_argument("evalset")
    p.add_argument("--fractions", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    _add_train_args(p)
    p.add_argument("-o", "--out", default="ablation")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("render", help="render an LCP field to an image")
    p.add_argument("field")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_render)

    return parser


def cli(argv=None) -> int:
    """Run the CLI; returns the process exit code instead of raising."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (LcpError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
