"""Command-line entry point.

Subcommands cover the full pipeline: pair-gen, train, eval, sr, gradcheck,
param-count, sweep-depth, sweep-lambda. Every run is deterministic given
(flags, config file, seed, inputs). Exit codes: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, UnetSRError
from .losses import LossConfig
from .model import NetConfig, layer_shapes, param_count

# Keys accepted in a JSON run-config file; explicit flags win over the file.
CONFIG_KEYS = {
    "depth", "scale", "base_width", "width_cap", "seed",
    "epochs", "batch_size", "lr0", "lr_half_every", "beta1", "beta2", "adam_eps",
    "shuffle", "max_grad_norm", "val_holdout",
    "loss", "lambda_g", "sqrt_epsilon",
    "pairs", "val_pairs", "out",
}

DEFAULTS = {
    "depth": 5,
    "scale": 2,
    "base_width": 64,
    "width_cap": 512,
    "seed": 0,
    "epochs": 200,
    "batch_size": 1,
    "lr0": 1e-3,
    "lr_half_every": 25,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "shuffle": True,
    "max_grad_norm": None,
    "val_holdout": None,
    "loss": "mixge",
    "lambda_g": 0.1,
    "sqrt_epsilon": 1e-12,
    "pairs": None,
    "val_pairs": None,
    "out": "runs/default",
}


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = sorted(set(payload) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"config {path} has unknown keys: {', '.join(unknown)}")
    return payload


def _merge_settings(args) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if getattr(args, "no_shuffle", False):
        merged["shuffle"] = False
    return merged


def _net_config(s: dict) -> NetConfig:
    return NetConfig(depth=int(s["depth"]), scale=int(s["scale"]),
                     base_width=int(s["base_width"]), width_cap=int(s["width_cap"]),
                     seed=int(s["seed"]))


def _train_config(s: dict):
    from .training import TrainConfig

    loss = LossConfig(kind=str(s["loss"]), lambda_g=float(s["lambda_g"]),
                      sqrt_epsilon=float(s["sqrt_epsilon"]))
    return TrainConfig(
        epochs=int(s["epochs"]),
        batch_size=int(s["batch_size"]),
        lr0=float(s["lr0"]),
        lr_half_every=int(s["lr_half_every"]),
        beta1=float(s["beta1"]),
        beta2=float(s["beta2"]),
        adam_eps=float(s["adam_eps"]),
        seed=int(s["seed"]),
        loss=loss,
        shuffle=bool(s["shuffle"]),
        max_grad_norm=None if s["max_grad_norm"] is None else float(s["max_grad_norm"]),
    )


def _require(s: dict, key: str, flag: str):
    if s.get(key) is None:
        raise ConfigError(f"missing required setting {key!r} (flag {flag} or config file)")
    return s[key]


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_pair_gen(args) -> int:
    from .images import make_pairs

    manifest = make_pairs(args.src, args.out, args.scale)
    print(f"wrote {len(manifest)} pairs under {args.out} "
          f"(manifest {Path(args.out) / f'x{args.scale}' / 'pairs.json'})")
    return 0


def cmd_train(args) -> int:
    from .checkpoint import load_checkpoint
    from .images import PairManifest
    from .model import build
    from .training import split_holdout, train

    s = _merge_settings(args)
    net_cfg = _net_config(s)
    train_cfg = _train_config(s)
    pairs = PairManifest.load(_require(s, "pairs", "--pairs"))
    pairs.validate_extents()

    val_pairs = None
    if s["val_pairs"] is not None:
        val_pairs = PairManifest.load(s["val_pairs"])
    elif s["val_holdout"] is not None:
        pairs, val_pairs = split_holdout(pairs, int(s["val_holdout"]), int(s["seed"]))

    out = Path(s["out"])
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        if resume.config != net_cfg:
            raise ConfigError("--resume checkpoint was built with a different net config")
    model = build(net_cfg)
    report = train(model, pairs, train_cfg, out / "checkpoints",
                   val_pairs=val_pairs, resume=resume, progress=not args.quiet)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "train_report.csv")
    report.write_json(out / "train_report.json")
    print(f"trained {train_cfg.epochs} epochs; checkpoints in {out / 'checkpoints'}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .images import PairManifest
    from .metrics import SSIMWindow
    from .training import bicubic_predictor, evaluate_pairs, identity_predictor, model_predictor

    pairs = PairManifest.load(args.pairs)
    if len(pairs) == 0:
        raise ConfigError(f"manifest {args.pairs} is empty")
    if args.ckpt:
        model = load_checkpoint(args.ckpt).build_model()
        predictor = model_predictor(model)
    elif args.baseline == "bicubic":
        predictor = bicubic_predictor(pairs.entries[0].scale)
    else:
        predictor = identity_predictor()

    window = SSIMWindow(covariance=not args.ssim_deviation_product)
    report = evaluate_pairs(pairs, predictor, window)
    out_csv = Path(args.out_csv) if args.out_csv else Path("metrics.csv")
    out_json = Path(args.out_json) if args.out_json else out_csv.with_suffix(".json")
    report.write_csv(out_csv)
    report.write_json(out_json)
    print(f"images={len(report.rows)} mean_psnr_db={report.mean_psnr_db} "
          f"mean_ssim={report.mean_ssim}")
    return 0


def cmd_sr(args) -> int:
    from .checkpoint import load_checkpoint
    from .images import decode_image, encode_png, from_tensor, to_tensor

    model = load_checkpoint(args.ckpt).build_model()
    buf = decode_image(args.in_path)
    out = model.predict(to_tensor(buf))
    encode_png(from_tensor(out), args.out_path)
    r = model.config.scale
    print(f"wrote {args.out_path} ({buf.width * r}x{buf.height * r})")
    return 0


def cmd_gradcheck(args) -> int:
    from .verification import run_suites

    reports = run_suites(args.module)
    failed = 0
    for rep in reports:
        print(rep)
        failed += 0 if rep.passed else 1
    print(f"{len(reports) - failed}/{len(reports)} checks passed")
    return 0 if failed == 0 else 1


def cmd_param_count(args) -> int:
    cfg = NetConfig(depth=args.depth, scale=args.scale,
                    base_width=args.base_width, width_cap=args.width_cap)
    layers = []
    for name, (cout, cin, kh, kw) in layer_shapes(cfg):
        layers.append({
            "name": name,
            "weight_shape": [cout, cin, kh, kw],
            "params": cout * cin * kh * kw + cout,
        })
    total = param_count(cfg)
    width = max(len(l["name"]) for l in layers)
    for l in layers:
        shape = "x".join(str(s) for s in l["weight_shape"])
        print(f"{l['name']:<{width}}  {shape:>12}  {l['params']:>10}")
    print(f"{'total':<{width}}  {'':>12}  {total:>10}")
    if args.json:
        payload = {"config": {"depth": cfg.depth, "scale": cfg.scale,
                              "base_width": cfg.base_width, "width_cap": cfg.width_cap},
                   "total": total, "layers": layers}
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def _parse_grid(text: str, cast):
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def cmd_sweep_depth(args) -> int:
    from .images import PairManifest
    from .training import DEPTH_GRID, sweep_depth, write_sweep_csv

    s = _merge_settings(args)
    depths = _parse_grid(args.depths, int) if args.depths else list(DEPTH_GRID)
    pairs = PairManifest.load(_require(s, "pairs", "--pairs"))
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_depth(depths, _net_config(s), _train_config(s), pairs,
                       work_dir=out, progress=not args.quiet)
    write_sweep_csv(rows, out / "sweep_depth.csv")
    print(f"wrote {out / 'sweep_depth.csv'} ({len(rows)} rows)")
    return 0


def cmd_sweep_lambda(args) -> int:
    from .images import PairManifest
    from .training import LAMBDA_GRID, sweep_lambda, write_sweep_csv

    s = _merge_settings(args)
    lambdas = _parse_grid(args.lambdas, float) if args.lambdas else list(LAMBDA_GRID)
    pairs = PairManifest.load(_require(s, "pairs", "--pairs"))
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_lambda(lambdas, _net_config(s), _train_config(s), pairs,
                        work_dir=out, progress=not args.quiet)
    write_sweep_csv(rows, out / "sweep_lambda.csv")
    print(f"wrote {out / 'sweep_lambda.csv'} ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, help="encoder stages (default 5)")
    p.add_argument("--scale", type=int, choices=(2, 4, 8), help="magnification (default 2)")
    p.add_argument("--base-width", dest="base_width", type=int,
                   help="channels after the first block (default 64)")
    p.add_argument("--width-cap", dest="width_cap", type=int,
                   help="maximum channel width (default 512)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; explicit flags override it")
    p.add_argument("--pairs", help="pairs.json manifest to train on")
    p.add_argument("--out", help="output directory (default runs/default)")
    p.add_argument("--epochs", type=int, help="training epochs (default 200)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="samples per update (default 1)")
    p.add_argument("--lr0", type=float, help="initial learning rate (default 1e-3)")
    p.add_argument("--lr-half-every", dest="lr_half_every", type=int,
                   help="halve the learning rate every this many epochs (default 25)")
    p.add_argument("--loss", choices=("mse", "mixge"),
                   help="training loss (default mixge)")
    p.add_argument("--lambda-g", dest="lambda_g", type=float,
                   help="gradient-loss weight (default 0.1)")
    p.add_argument("--seed", type=int, help="seed for init and shuffling (default 0)")
    p.add_argument("--no-shuffle", action="store_true", help="keep manifest order each epoch")
    p.add_argument("--max-grad-norm", dest="max_grad_norm", type=float,
                   help="clip global gradient norm (default off)")
    p.add_argument("--val-pairs", dest="val_pairs", help="validation manifest")
    p.add_argument("--val-holdout", dest="val_holdout", type=int,
                   help="reserve this many training pairs for validation (seeded)")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unetsr",
        description="Single-image super-resolution: pair generation, training, "
                    "evaluation, inference, gradient verification and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair-gen", help="build LR/HR training pairs from a directory of images")
    p.add_argument("--src", required=True, help="directory of source images (PNG/JPEG/BMP)")
    p.add_argument("--out", required=True, help="output directory for hr/, x<scale>/lr/, pairs.json")
    p.add_argument("--scale", type=int, choices=(2, 4, 8), required=True)
    p.set_defaults(func=cmd_pair_gen)

    p = sub.add_parser("train", help="train a model on a pairs manifest")
    _add_train_flags(p)
    _add_model_flags(p)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint or baseline over a manifest")
    p.add_argument("--pairs", required=True, help="pairs.json manifest")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ckpt", help="checkpoint to evaluate")
    group.add_argument("--baseline", choices=("bicubic", "identity"),
                       help="bicubic upscaling, or ground truth against itself")
    p.add_argument("--out-csv", dest="out_csv", help="per-image rows (default metrics.csv)")
    p.add_argument("--out-json", dest="out_json", help="dataset summary (default <csv>.json)")
    p.add_argument("--ssim-deviation-product", action="store_true",
                   help="use the std-deviation-product SSIM variant instead of covariance")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sr", help="super-resolve one image with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_path", required=True, help="input image")
    p.add_argument("--out", dest="out_path", required=True, help="output PNG")
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--module", choices=("all", "loss", "model", "ops"), default="all")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("param-count", help="parameter total and per-layer table for a config")
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--scale", type=int, choices=(2, 4, 8), default=2)
    p.add_argument("--base-width", dest="base_width", type=int, default=64)
    p.add_argument("--width-cap", dest="width_cap", type=int, default=512)
    p.add_argument("--json", help="also write the table as JSON here")
    p.set_defaults(func=cmd_param_count)

    p = sub.add_parser("sweep-depth", help="train at several depths, report PSNR per depth")
    _add_train_flags(p)
    _add_model_flags(p)
    p.add_argument("--depths", help="comma-separated depth grid (default 2..8)")
    p.set_defaults(func=cmd_sweep_depth)

    p = sub.add_parser("sweep-lambda", help="train at several gradient-loss weights")
    _add_train_flags(p)
    _add_model_flags(p)
    p.add_argument("--lambdas",
                   help="comma-separated weight grid (default 1e-4,1e-3,1e-2,1e-1,1)")
    p.set_defaults(func=cmd_sweep_lambda)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UnetSRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
