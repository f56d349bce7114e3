"""Command-line entry points: fuse, simulate, eval, masks.

Exit status is 0 on success, 1 on input or runtime errors (unreadable files,
empty seed sets, size mismatches) and 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path


from . import io
from .core import (ConfigError, DisparityField, EmptySeedSet, FusionError, FusionParams, load_params,
                   params_from_mapping)

SCHEMA_VERSION = 1

log = logging.getLogger("depthfusion")


class InputError(Exception):
    """Bad or unreadable input; maps to exit status 1."""


def _set_threads():
    raw = os.environ.get("FUSE_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FUSE_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("FUSE_THREADS must be ≥1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"cannot read {p}: no such file")
    return p


def _params(args) -> FusionParams:
    base = FusionParams()
    if getattr(args, "config", None):
        try:
            text = _require(args.config).read_text()
        except InputError as exc:
            raise ConfigError(str(exc)) from None
        base = load_params(text)
    overrides = {}
    for flag, key in (("criterion", "criterion"), ("r", "r"), ("T", "T"), ("lam", "lam"),
                      ("gamma_d", "gamma_d"), ("window", "window"), ("range", "range")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "no_subpixel", False):
        overrides["subpixel"] = False
    return params_from_mapping(overrides, base)


def _read_pair(args):
    try:
        left, color_l = io.read_image(_require(args.left), keep_color=True)
        right, color_r = io.read_image(_require(args.right), keep_color=True)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image: {exc}") from None
    if left.shape != right.shape:
        raise InputError(f"{args.left} and {args.right} differ in size")
    return left, right, color_l, color_r


def _read_prior(path, shape):
    try:
        prior = io.read_prior(_require(path))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read prior {path}: {exc}") from None
    try:
        prior.validate(shape)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return prior


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_fuse(args) -> int:
    from .pipeline import fuse

    params = _params(args)
    left, right, color_l, color_r = _read_pair(args)
    prior = _read_prior(args.prior, left.shape)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = fuse(left, right, prior, params, fill=not args.no_fill, color_left=color_l,
                   color_right=color_r, method=args.method)
    except EmptySeedSet as exc:
        raise EmptySeedSet(f"{args.prior}: {exc}") from None
    io.write_disparity(out / "disparity.pfm", res.disparity)
    io.disparity_to_png(out / "disparity.png", res.disparity, params.d_min, params.d_max,
                        res.masks.depth_occ)
    stats = res.stats()
    stats.update({
        "schema_version": SCHEMA_VERSION,
        "params": params.as_dict(),
        "method": args.method,
        "fill": not args.no_fill,
        "inputs": {"left": str(args.left), "right": str(args.right), "prior": str(args.prior)},
        "final_density": float(res.disparity.density()),
    })
    if res.growth is not None:
        stats["invariant_violations"] = res.growth.check_invariants(params.r, params.T)
    _write_json(out / "stats.json", stats)
    if args.dump_masks:
        _dump_masks(out, left, res.masks, res.entropy)
    if args.trace:
        if res.growth is None:
            log.warning("--trace has no effect with --method wta")
        else:
            res.growth.write_trace(out / "trace.csv")
    log.info("wrote %s (density %.1f%%)", out / "disparity.pfm", 100 * res.disparity.density())
    return 0


def _dump_masks(out: Path, left, masks, entropy):
    io.masks_overlay(out / "masks.png", left, masks.stereo_occ, masks.depth_occ)
    io.write_mask(out / "stereo_occ.png", masks.stereo_occ)
    io.write_mask(out / "depth_occ.png", masks.depth_occ)
    io.write_image(out / "entropy.png", entropy)


def cmd_masks(args) -> int:
    from .energy import entropy_field
    from .initialization import initial_maps

    params = _params(args)
    left, right, color_l, color_r = _read_pair(args)
    prior = _read_prior(args.prior, left.shape).clip(params.d_min, params.d_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _, _, masks, _ = initial_maps(prior, left, right, params, color_left=color_l,
                                      color_right=color_r)
    except EmptySeedSet as exc:
        raise EmptySeedSet(f"{args.prior}: {exc}") from None
    _dump_masks(out, left, masks, entropy_field(left, params.window_half))
    return 0


def cmd_simulate(args) -> int:
    from .evaluation import DegradeConfig, builtin_scene, degrade, render_scene

    try:
        cfg = DegradeConfig(args.factor, args.bias, args.sigma, args.period)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.gt:
        try:
            gt = io.read_disparity(_require(args.gt))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read {args.gt}: {exc}") from None
        io.write_disparity(out / "gt.pfm", gt)
    else:
        try:
            scene = builtin_scene(args.scene, args.width, args.height, seed=args.seed)
        except KeyError:
            raise ConfigError(f"unknown scene {args.scene!r}") from None
        rendered = render_scene(scene)
        # the sensor sees the whole frame; scoring excludes stereo occlusions
        gt = rendered.gt
        io.write_image(out / "left.png", rendered.left)
        io.write_image(out / "right.png", rendered.right)
        io.write_disparity(out / "gt.pfm",
                           DisparityField(gt.values, gt.valid & ~rendered.occluded))
    prior = degrade(gt, cfg, args.seed)
    io.write_prior_csv(out / "prior.csv", prior)
    log.info("wrote %d prior samples to %s", len(prior), out / "prior.csv")
    return 0


def _parse_deltas(text: str):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--delta expects comma-separated numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError("--delta values must be positive")
    return vals


def cmd_eval(args) -> int:
    from .evaluation import bmp, mse

    deltas = _parse_deltas(args.delta)
    try:
        result = io.read_disparity(_require(args.result))
        gt = io.read_disparity(_require(args.gt))
        occl = io.read_mask(_require(args.occl)) if args.occl else None
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read input: {exc}") from None
    if result.shape != gt.shape or (occl is not None and occl.shape != gt.shape):
        raise InputError(f"size mismatch: result {result.shape}, gt {gt.shape}"
                         + (f", occlusion mask {occl.shape}" if occl is not None else ""))
    report = {
        "schema_version": SCHEMA_VERSION,
        "bmp": {f"{d:g}": bmp(result, gt, occl, d) for d in deltas},
        "density": float(result.density()),
    }
    try:
        report["mse"] = mse(result, gt, occl)
    except FusionError:
        report["mse"] = None
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_param_flags(p):
    g = p.add_argument_group("fusion parameters")
    g.add_argument("--config", help="key=value parameter file")
    g.add_argument("--criterion", choices=("ecc", "emcc"))
    g.add_argument("--r", type=int, help="propagation radius")
    g.add_argument("--T", type=float, help="energy acceptance threshold")
    g.add_argument("--lambda", dest="lam", type=float, help="regularizer weight")
    g.add_argument("--gamma-d", dest="gamma_d", type=float, help="aggregation bandwidth")
    g.add_argument("--window", type=int, help="odd window size, e.g. 9")
    g.add_argument("--range", help="disparity search range dmin:dmax")
    g.add_argument("--no-subpixel", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthfusion",
                                     description="Fuse a rectified stereo pair with a sparse depth prior.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse a stereo pair and a sparse prior")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("prior", help="CSV (x,y,d) or PFM with non-finite gaps")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--method", choices=("grow", "wta"), default="grow")
    p.add_argument("--no-fill", action="store_true", help="skip post-filling")
    p.add_argument("--dump-masks", action="store_true", help="also write occlusion masks and entropy")
    p.add_argument("--trace", action="store_true", help="write the growing trace as CSV")
    _add_param_flags(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("simulate", help="render a synthetic scene and a degraded prior")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scene", default="two_planes")
    src.add_argument("--gt", help="ground-truth PFM to degrade instead of a scene")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--factor", type=int, default=10, help="downsampling factor")
    p.add_argument("--sigma", type=float, default=2.0, help="noise deviation (px)")
    p.add_argument("--bias", type=float, default=2.0, help="mean bias (px)")
    p.add_argument("--period", type=float, default=40.0, help="noise wavelength (px)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="score a disparity map against ground truth")
    p.add_argument("result")
    p.add_argument("gt")
    p.add_argument("--occl", help="PNG mask of occluded pixels (white = excluded)")
    p.add_argument("--delta", default="0.5,1,2", help="comma-separated BMP thresholds")
    p.add_argument("-o", "--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("masks", help="write occlusion masks and the entropy map")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("prior")
    p.add_argument("-o", "--out", required=True, help="output directory")
    _add_param_flags(p)
    p.set_defaults(func=cmd_masks)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        _set_threads()
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InputError, FusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
