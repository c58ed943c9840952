"""Command-line entry point.

Reports go to stdout as ``key: value`` lines; diagnostics go to stderr.
Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from . import __version__, kernels
from .augment import POLICIES, AugmentPolicy, DepthSample, DepthUnit, plan_default, plan_shifting, apply_default, apply_shifting
from .config import load_runtime_config, section
from .errors import MeterError, UsageError, VariantMismatchError
from .loss import ABLATIONS, GRAD_MODES, UNIT_SCALES, LossWeights, balanced_loss
from .metrics import ConstantPredictor, evaluate_dataset
from .model import Activation, MeterModel, ModelConfig, Variant, build
from .monitoring.logging_handler import LoggingHandler, configure_loguru
from .monitoring.metrics_collector import InferenceMetrics
from .persistence.dataset import CropRect, DepthEncoding, generate_synthetic_dataset, iter_samples, load_manifest
from .persistence.imaging import read_depth, read_rgb, resize_depth, resize_rgb, write_rgb
from .persistence.render import COLORMAPS, export_colormaps, render_depth
from .persistence.weights import load_weights, save_weights
from .profiler import bench_latency, compare_latency, count_macs
from .reporting import check_lines, format_size, parse_size, write_json
from .selfcheck import faulty_sobel, run_selfcheck

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

FAULTS = {"sobel": faulty_sobel}


class _Parser(argparse.ArgumentParser):
    """Argument errors become UsageError instead of exiting"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def emit(lines: Sequence[str]) -> None:
    for line in check_lines(lines):
        print(line)


def _variant(text: str) -> Variant:
    try:
        return Variant.parse(text)
    except MeterError as e:
        raise argparse.ArgumentTypeError(str(e))


def _size(text: str):
    try:
        return parse_size(text)
    except UsageError as e:
        raise argparse.ArgumentTypeError(str(e))


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meter", description="METER monocular depth runtime")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=_non_negative_int, default=None, help="Seed for weights, images and augmentation (default 42)")
    parser.add_argument("--threads", type=_positive_int, default=None, help="Kernel worker threads (default 1)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging and progress bars")
    parser.add_argument("--config", default=None, help="Runtime config YAML (default config/runtime_config.yaml)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("profile", help="Parameter and MAC counts per layer")
    p.add_argument("--variant", type=_variant, required=True)
    p.add_argument("--input-size", type=_size, default=None, help="WxH, even extents (default 256x192)")
    p.add_argument("--activation", choices=[a.value for a in Activation], default=None)
    p.add_argument("--table", action="store_true", help="Print an aligned per-layer table instead of layer lines")
    p.add_argument("--report-out", default=None, help="Write the JSON report here")

    p = sub.add_parser("infer", help="Predict depth for one image")
    p.add_argument("--weights", default=None, help="Weight archive; a seeded random model of --variant otherwise")
    p.add_argument("--variant", type=_variant, default=None, help="s, xs or xxs; checked against --weights")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="Colormapped PNG output")
    p.add_argument("--colormap", choices=COLORMAPS, default="plasma_reversed")
    p.add_argument("--raw-out", default=None, help="Raw float32 depth in meters (.npy)")
    p.add_argument("--input-size", type=_size, default=None, help="Resize the image to WxH (default: model input size)")

    p = sub.add_parser("eval", help="RMSE, REL and delta1 over a dataset manifest")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--weights", default=None)
    source.add_argument("--constant-depth", type=float, default=None, help="Baseline that predicts one depth everywhere")
    p.add_argument("--dataset", required=True, help="Manifest YAML")
    p.add_argument("--crop", default=None, help="top,left,bottom,right fractions, or 'garg'")
    p.add_argument("--input-size", type=_size, default=None)
    p.add_argument("--report-out", default="metrics_report.json")
    p.add_argument("--per-sample-out", default=None, help="CSV of per-image metrics")
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("bench", help="Single-image latency")
    p.add_argument("--variant", type=_variant, required=True)
    p.add_argument("--input-size", type=_size, default=None)
    p.add_argument("--iters", type=_positive_int, default=None)
    p.add_argument("--warmup", type=_non_negative_int, default=None)
    p.add_argument("--weights", default=None)
    p.add_argument("--dataset", default=None, help="Time one forward per manifest image instead")
    p.add_argument("--compare-with", type=_variant, default=None, help="Also time this variant and warn if the cheaper one is slower")
    p.add_argument("--metrics-port", type=_positive_int, default=None, help="Expose Prometheus metrics on this port")
    p.add_argument("--report-out", default=None)

    p = sub.add_parser("selfcheck", help="Kernel oracles, gradient checks and count tables")
    p.add_argument("--instances", type=_positive_int, default=50)
    p.add_argument("--pairs", type=_positive_int, default=20)
    p.add_argument("--fault", choices=sorted(FAULTS), default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("loss", help="Balanced loss between two depth maps")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--encoding", choices=[e.value for e in DepthEncoding], default="png16_mm")
    p.add_argument("--unit", choices=sorted(UNIT_SCALES), default=None)
    p.add_argument("--ablation", choices=ABLATIONS, default="full")
    p.add_argument("--grad-mode", choices=GRAD_MODES, default=None)
    p.add_argument("--dynamic-range", type=float, default=10.0)

    p = sub.add_parser("augment-preview", help="Apply one seeded augmentation draw to a sample")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--encoding", choices=[e.value for e in DepthEncoding], default="png16_mm")
    p.add_argument("--policy", choices=POLICIES, default="shifting")
    p.add_argument("--unit", choices=[u.value for u in DepthUnit], default="indoor_cm")
    p.add_argument("--max-depth", type=float, default=10.0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("generate-dataset", help="Write a synthetic rgb/depth dataset and manifest")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--input-size", type=_size, default=None, help="Image size WxH (default 256x192)")
    p.add_argument("--encoding", choices=[e.value for e in DepthEncoding], default="png16_mm")
    p.add_argument("--unit", choices=[u.value for u in DepthUnit], default="indoor_cm")
    p.add_argument("--max-depth", type=float, default=10.0)

    p = sub.add_parser("init-weights", help="Write a seeded random-weight archive")
    p.add_argument("--variant", type=_variant, required=True)
    p.add_argument("--activation", choices=[a.value for a in Activation], default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-colormaps", help="Write the colormap lookup tables as text")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("serve", help="HTTP inference service")
    p.add_argument("--weights", default=None)
    p.add_argument("--variant", type=_variant, default=None, help="s, xs or xxs; checked against --weights")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=_positive_int, default=None)
    p.add_argument("--metrics-port", type=_positive_int, default=None)
    p.add_argument("--colormap", choices=COLORMAPS, default=None)
    return parser


class Context:
    """Parsed arguments merged with the runtime config"""

    def __init__(self, args: argparse.Namespace, settings: Dict[str, Any]):
        self.args = args
        self.settings = settings
        cli = section(settings, "cli")
        self.seed = args.seed if args.seed is not None else int(cli.get("seed", 42))
        self.threads = args.threads if args.threads is not None else int(cli.get("threads", 1))
        self.default_size = tuple(cli.get("input_size", (192, 256)))
        self.verbose = args.verbose

    def input_size(self, fallback=None):
        size = getattr(self.args, "input_size", None)
        if size is not None:
            return size
        return fallback if fallback is not None else self.default_size

    def model(self, weights: Optional[str], variant: Optional[Variant], input_size=None) -> MeterModel:
        """Archive weights when given, checked against ``variant`` if one was named"""
        if weights:
            model = load_weights(weights, None)
            if variant is not None and model.variant is not variant:
                raise VariantMismatchError(model.variant.value, variant.value)
            if input_size is not None and tuple(input_size) != tuple(model.config.input_size):
                model = model.resized(*input_size)
            return model
        config = ModelConfig.preset(variant or Variant.S, input_size=input_size or self.default_size)
        return build(config, self.seed)


def cmd_profile(ctx: Context) -> int:
    args = ctx.args
    config = ModelConfig.preset(args.variant, activation=args.activation)
    report = count_macs(config, ctx.input_size())
    if args.table:
        emit([f"table: {row}" for row in report.to_table().splitlines()] + report.to_lines(per_layer=False))
    else:
        emit(report.to_lines())
    if args.report_out:
        write_json(report, args.report_out)
    return EXIT_OK


def cmd_infer(ctx: Context) -> int:
    args = ctx.args
    model = ctx.model(args.weights, args.variant, args.input_size)
    rgb = resize_rgb(read_rgb(args.image), model.config.input_size)
    depth = model.forward(rgb)
    lo, hi = model.config.depth_range
    render_depth(depth, lo, hi, args.colormap, out_path=args.out)
    if args.raw_out:
        with open(args.raw_out, "wb") as f:
            np.save(f, depth.values[0, 0].astype(np.float32), allow_pickle=False)
    stats = depth.stats()
    emit([
        f"variant: {model.variant.value}",
        f"input_size: {format_size(model.config.input_size)}",
        f"output_size: {format_size(depth.shape[-2:])}",
        f"min_m: {stats['min_m']:.6f}",
        f"max_m: {stats['max_m']:.6f}",
        f"mean_m: {stats['mean_m']:.6f}",
        f"out: {args.out}",
    ] + ([f"raw_out: {args.raw_out}"] if args.raw_out else []))
    return EXIT_OK


def cmd_eval(ctx: Context) -> int:
    args = ctx.args
    manifest = load_manifest(args.dataset)
    if len(manifest) == 0:
        raise UsageError(f"dataset {args.dataset} has no entries")
    crop = CropRect.parse(args.crop) if args.crop else None
    metrics_cfg = section(ctx.settings, "metrics")
    if args.constant_depth is not None:
        model = ConstantPredictor(args.constant_depth)
        input_size = args.input_size
    else:
        loaded = load_weights(args.weights, None)
        lo = loaded.config.depth_range[0]
        config = loaded.config.model_copy(update={"depth_range": (lo, float(manifest.max_depth_m))})
        if args.input_size is not None:
            config = config.with_input_size(*args.input_size)
        model = MeterModel(config, loaded.weights)
        input_size = config.input_size
    report = evaluate_dataset(
        model,
        manifest,
        crop=crop,
        input_size=input_size,
        thr=float(metrics_cfg.get("delta_threshold", 1.25)),
        workers=args.workers or int(metrics_cfg.get("workers", 1)),
        progress=ctx.verbose,
    )
    emit(report.to_lines() + [f"report_out: {args.report_out}"])
    write_json(report, args.report_out)
    if args.per_sample_out:
        report.per_sample_frame().to_csv(args.per_sample_out, index=False)
    return EXIT_OK


def cmd_bench(ctx: Context) -> int:
    args = ctx.args
    cfg = section(ctx.settings, "profile")
    iterations = args.iters or int(cfg.get("iterations", 20))
    warmup = args.warmup if args.warmup is not None else int(cfg.get("warmup", 3))
    metrics = InferenceMetrics({"metrics_port": args.metrics_port}) if args.metrics_port else None
    model = ctx.model(args.weights, args.variant, ctx.input_size())
    images = None
    if args.dataset:
        manifest = load_manifest(args.dataset)
        images = [s.rgb for _, s in iter_samples(manifest, model.config.input_size) if not isinstance(s, Exception)]
    report = bench_latency(model, None, iterations, warmup, ctx.threads, ctx.seed, images, metrics, ctx.verbose)
    lines = report.to_lines(per_layer=False)
    if args.compare_with is not None:
        other = ctx.model(None, args.compare_with, model.config.input_size)
        other_report = bench_latency(other, None, iterations, warmup, ctx.threads, ctx.seed, images, metrics, ctx.verbose)
        warning = compare_latency(report, other_report)
        lines += [
            f"compare_variant: {other_report.variant.value}",
            f"compare_fps: {other_report.fps:.3f}",
            f"ordering_ok: {str(warning is None).lower()}",
        ]
        if warning:
            logger.warning(warning)
    emit(lines)
    if args.report_out:
        write_json(report, args.report_out)
    return EXIT_OK


def cmd_selfcheck(ctx: Context) -> int:
    args = ctx.args
    sobel = FAULTS[args.fault]() if args.fault else None
    report = run_selfcheck(ctx.seed, args.instances, args.pairs, sobel)
    emit(report.to_lines())
    if not report.passed:
        for failure in report.failures:
            logger.error(f"check {failure.name} failed: measured {failure.measured:.3e} > {failure.tolerance:.1e}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_loss(ctx: Context) -> int:
    args = ctx.args
    cfg = section(ctx.settings, "loss")
    gt = read_depth(args.gt, args.encoding)
    pred = read_depth(args.pred, args.encoding)
    if pred.shape != gt.shape:
        pred = resize_depth(pred, gt.shape)
    unit = args.unit or cfg.get("depth_unit", "m")
    weights = LossWeights.ablation(args.ablation, unit, float(cfg.get("lambda1", 0.5)))
    report = balanced_loss(
        gt,
        pred,
        weights,
        dynamic_range=args.dynamic_range,
        gradient=False,
        grad_mode=args.grad_mode or cfg.get("grad_mode", "literal"),
        window=int(cfg.get("ssim_window", 7)),
    )
    emit([f"{key}: {value:.6f}" for key, value in report.as_dict().items()] + [
        f"lambda1: {weights.lambda1}",
        f"lambda2: {weights.lambda2}",
        f"lambda3: {weights.lambda3}",
    ])
    return EXIT_OK


def cmd_augment_preview(ctx: Context) -> int:
    args = ctx.args
    policy = AugmentPolicy.from_settings(ctx.settings)
    rgb = read_rgb(args.image)
    depth = resize_depth(read_depth(args.depth, args.encoding), rgb.shape[2:])
    sample = DepthSample(rgb, depth[None, None], DepthUnit(args.unit), args.max_depth)
    lines = [f"policy: {args.policy}", f"seed: {ctx.seed}"]
    if args.policy == "default":
        plan = plan_default(ctx.seed, policy)
        out = apply_default(sample, plan)
    elif args.policy == "shifting":
        plan = plan_shifting(ctx.seed, sample.unit, policy)
        out = apply_shifting(sample, plan, policy)
        params = plan.params(sample.unit, policy)
        if plan.c_shift is not None:
            eta = ",".join(f"{e:.4f}" for e in params.eta)
            lines.append(f"c_shift: beta={params.beta:.4f} gamma={params.gamma:.4f} eta={eta}")
        if plan.d_shift is not None:
            lines += [f"d_shift_m: {params.shift_s:.4f}", f"d_shift_bound_m: {params.shift_bound_m:.2f}"]
    else:
        plan = None
        out = sample
    if plan is not None:
        lines += [f"fired.{name}: {str(flag).lower()}" for name, flag in plan.fired.items()]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rgb(out_dir / "rgb.png", out.rgb)
    render_depth(out.depth, 0.0, out.max_depth, "plasma_reversed", out_dir / "depth.png", valid_mask=out.valid_mask)
    lines.append(f"out_dir: {out_dir}")
    emit(lines)
    return EXIT_OK


def cmd_generate_dataset(ctx: Context) -> int:
    args = ctx.args
    size = ctx.input_size()
    manifest = generate_synthetic_dataset(
        args.n, ctx.seed, args.out_dir, size=size, encoding=args.encoding, unit=args.unit, max_depth=args.max_depth
    )
    emit([
        f"manifest: {Path(args.out_dir) / 'manifest.yaml'}",
        f"samples: {len(manifest)}",
        f"size: {format_size(size)}",
        f"depth_encoding: {manifest.depth_encoding.value}",
    ])
    return EXIT_OK


def cmd_init_weights(ctx: Context) -> int:
    args = ctx.args
    config = ModelConfig.preset(args.variant, activation=args.activation, input_size=ctx.default_size)
    model = build(config, ctx.seed)
    path = save_weights(model, args.out)
    emit([f"variant: {model.variant.value}", f"params_total: {model.param_count}", f"seed: {ctx.seed}", f"out: {path}"])
    return EXIT_OK


def cmd_export_colormaps(ctx: Context) -> int:
    written = export_colormaps(ctx.args.out_dir)
    emit([f"colormap.{name}: {path}" for name, path in written.items()])
    return EXIT_OK


def cmd_serve(ctx: Context) -> int:
    from .api.main import create_app, serve

    args = ctx.args
    cfg = section(ctx.settings, "serve")
    model = ctx.model(args.weights, args.variant)
    metrics = InferenceMetrics({"metrics_port": args.metrics_port or cfg.get("metrics_port")})
    app = create_app(model, args.colormap or cfg.get("colormap", "plasma_reversed"), metrics)
    serve(app, args.host or cfg.get("host", "0.0.0.0"), args.port or int(cfg.get("port", 8000)))
    return EXIT_OK


COMMANDS = {
    "profile": cmd_profile,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "selfcheck": cmd_selfcheck,
    "loss": cmd_loss,
    "augment-preview": cmd_augment_preview,
    "generate-dataset": cmd_generate_dataset,
    "init-weights": cmd_init_weights,
    "export-colormaps": cmd_export_colormaps,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    sink = configure_loguru("INFO")
    try:
        args = build_parser().parse_args(argv)
        settings = load_runtime_config(args.config)
        log_cfg = dict(section(settings, "logging"))
        if args.verbose:
            log_cfg["log_level"] = "DEBUG"
            sink = configure_loguru("DEBUG")
        LoggingHandler(log_cfg)
        ctx = Context(args, settings)
        kernels.set_num_threads(ctx.threads)
        return COMMANDS[args.command](ctx)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (MeterError, OSError, ValueError) as e:
        logger.error(str(e))
        return EXIT_FAILURE
    finally:
        kernels.set_num_threads(1)
        logger.remove(sink)
