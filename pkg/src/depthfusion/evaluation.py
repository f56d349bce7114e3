"""Metrics, synthetic scenes and the simulated-prior protocol."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .core import DisparityField, FusionParams, NoValidPixels, SparsePrior
from .energy import EnergyContext
from .growing import grow, post_fill, wta_baseline
from .pipeline import prepare

DEFAULT_DELTAS = (0.5, 1.0, 2.0)
METHODS = (
    "fused_ecc", "fused_emcc", "wta", "wta_stereo", "upsample_only",
    "data_term_ecc", "simple_fusion_ecc",
)


# ---------------------------------------------------------------------------
# metrics


def _eval_mask(result: DisparityField, gt: DisparityField, occl) -> np.ndarray:
    if result.shape != gt.shape:
        raise ValueError(f"result {result.shape} and ground truth {gt.shape} differ in size")
    mask = gt.valid.copy()
    if occl is not None:
        occl = np.asarray(occl, bool)
        if occl.shape != gt.shape:
            raise ValueError("occlusion mask size differs from ground truth")
        mask &= ~occl
    if not mask.any():
        raise NoValidPixels("no non-occluded ground-truth pixel")
    return mask


def bmp(result: DisparityField, gt: DisparityField, occl=None, delta: float = 1.0) -> float:
    """Percentage of non-occluded pixels with |D - G| > delta; invalid D counts as bad."""
    mask = _eval_mask(result, gt, occl)
    # invalid entries may hold inf; they are either masked out or counted bad
    err = np.abs(np.where(result.valid, result.values, 0.0) - np.where(gt.valid, gt.values, 0.0))
    bad = ~result.valid | ~(err <= delta)
    return 100.0 * float(bad[mask].sum()) / float(mask.sum())


def mse(result: DisparityField, gt: DisparityField, occl=None) -> float:
    """Mean squared error over non-occluded pixels where the result is valid."""
    mask = _eval_mask(result, gt, occl) & result.valid
    if not mask.any():
        raise NoValidPixels("result has no valid pixel inside the evaluation mask")
    diff = result.values[mask] - gt.values[mask]
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# simulated prior


@dataclass(frozen=True)
class DegradeConfig:
    downsample_factor: int = 10
    bias_amplitude: float = 2.0
    noise_sigma: float = 2.0
    noise_period: float = 40.0

    def __post_init__(self):
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be ≥1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be ≥0")
        if not self.noise_period > 0:
            raise ValueError("noise_period must be >0")


def bias_field(x, y, shape, amplitude, rng) -> np.ndarray:
    """Smooth additive bias with mean ``amplitude`` over a symmetric grid: a tilted ramp."""
    h, w = shape
    theta = rng.uniform(0, 2 * np.pi)
    xn = 2.0 * x / max(w - 1, 1) - 1.0
    yn = 2.0 * y / max(h - 1, 1) - 1.0
    return amplitude * (1.0 + 0.25 * (np.cos(theta) * xn + np.sin(theta) * yn))


def sinusoid_noise(x, y, sigma, period, phase_x, phase_y) -> np.ndarray:
    """sigma * sin(2 pi x / P + phx) * sin(2 pi y / P + phy); peak-to-peak 2 sigma."""
    return sigma * np.sin(2 * np.pi * x / period + phase_x) * np.sin(2 * np.pi * y / period + phase_y)


def degrade(gt: DisparityField, cfg: DegradeConfig = DegradeConfig(), rng_seed=0,
            exclude=None) -> SparsePrior:
    """Sparse, biased, noisy samples of ``gt`` on a regular grid.

    ``exclude`` marks pixels the simulated sensor cannot see.
    """
    rng = np.random.default_rng(rng_seed)
    h, w = gt.shape
    f = cfg.downsample_factor
    yy, xx = np.mgrid[0:h:f, 0:w:f]
    x, y = xx.ravel(), yy.ravel()
    phx, phy = rng.uniform(0, 2 * np.pi, size=2)
    bias = bias_field(x, y, (h, w), cfg.bias_amplitude, rng)
    noise = sinusoid_noise(x, y, cfg.noise_sigma, cfg.noise_period, phx, phy)
    keep = gt.valid[y, x]
    if exclude is not None:
        keep &= ~np.asarray(exclude, bool)[y, x]
    d = gt.values[y, x] + bias + noise
    return SparsePrior(x[keep], y[keep], d[keep])


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class Texture:
    """Band-limited random texture: a sum of cosines, defined at any real (x, y)."""

    mean: float = 0.5
    amplitude: float = 0.15  # standard deviation
    fmin: float = 0.03  # cycles per pixel
    fmax: float = 0.12
    components: int = 48
    seed: int = 0
    envelope_floor: float = 1.0  # < 1 modulates contrast between floor and 1
    envelope_period: float = 120.0

    def __call__(self, x, y):
        rng = np.random.default_rng(self.seed)
        k = self.components
        f = rng.uniform(self.fmin, self.fmax, k)
        ang = rng.uniform(0, np.pi, k)
        ph = rng.uniform(0, 2 * np.pi, k)
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        acc = np.zeros(np.broadcast(x, y).shape)
        for i in range(k):
            acc += np.cos(2 * np.pi * f[i] * (np.cos(ang[i]) * x + np.sin(ang[i]) * y) + ph[i])
        acc *= self.amplitude * np.sqrt(2.0 / k)
        if self.envelope_floor < 1.0:
            ea = rng.uniform(0, np.pi)
            u = (np.cos(ea) * x + np.sin(ea) * y) / self.envelope_period
            env = 0.5 * (1 + np.cos(2 * np.pi * u))
            acc *= self.envelope_floor + (1 - self.envelope_floor) * env
        return self.mean + acc


@dataclass(frozen=True)
class Layer:
    """Planar surface d = a + bx*x + by*y over a rectangle of the left image."""

    disparity: float | tuple = 0.0
    rect: tuple | None = None  # (x0, y0, x1, y1), half-open; None = whole frame
    texture: Texture = Texture()

    @property
    def plane(self):
        if np.isscalar(self.disparity):
            return float(self.disparity), 0.0, 0.0
        a, bx, by = self.disparity
        return float(a), float(bx), float(by)

    def d(self, x, y):
        a, bx, by = self.plane
        return a + bx * np.asarray(x, np.float64) + by * np.asarray(y, np.float64)

    def covers(self, x, y):
        """Coverage at real left-image x (pixel centres at integers)."""
        x = np.asarray(x, np.float64)
        y = np.asarray(y)
        if self.rect is None:
            return np.ones(np.broadcast(x, y).shape, bool)
        x0, y0, x1, y1 = self.rect
        return (x >= x0 - 0.5) & (x < x1 - 0.5) & (y >= y0) & (y < y1)

    def source_x(self, xr, y):
        """Left x seen at right position xr: solves xr = x + d(x, y)."""
        a, bx, by = self.plane
        return (np.asarray(xr, np.float64) - a - by * np.asarray(y, np.float64)) / (1.0 + bx)


@dataclass(frozen=True)
class Scene:
    """Layers listed back to front; later layers occlude earlier ones."""

    width: int = 320
    height: int = 240
    layers: tuple = (Layer(),)
    image_noise: float = 0.0
    seed: int = 0
    d_range: tuple = (0, 32)


@dataclass
class RenderedScene:
    left: np.ndarray
    right: np.ndarray
    gt: DisparityField
    occluded: np.ndarray
    layer_id: np.ndarray
    scene: Scene


def _layer_map(scene: Scene, xs, ys, view: float):
    """Front-most layer index seen at positions xs of a view shifted by ``view``*d.

    Returns (layer index, source left x) arrays; -1 where nothing is visible.
    """
    lid = np.full(np.shape(xs), -1, np.int64)
    src = np.full(np.shape(xs), np.nan)
    for k, layer in enumerate(scene.layers):
        if view == 0.0:
            xl = np.asarray(xs, np.float64)
        else:
            a, bx, by = layer.plane
            xl = (xs - view * (a + by * ys)) / (1.0 + view * bx)
        cov = layer.covers(xl, ys)
        lid[cov] = k
        src[cov] = xl[cov]
    return lid, src


def occlusion_mask(scene: Scene, view: float = 1.0) -> np.ndarray:
    """Left pixels hidden from a camera at ``view`` times the stereo baseline."""
    h, w = scene.height, scene.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    lid, _ = _layer_map(scene, xs, ys, 0.0)
    occ = lid < 0
    for k, layer in enumerate(scene.layers):
        sel = lid == k
        if not sel.any():
            continue
        xv = xs[sel] + view * layer.d(xs[sel], ys[sel])
        out = (xv < -0.5) | (xv > w - 0.5) if view == 1.0 else np.zeros(len(xv), bool)
        hidden = np.zeros(len(xv), bool)
        for j in range(k + 1, len(scene.layers)):
            other = scene.layers[j]
            a, bx, by = other.plane
            xl = (xv - view * (a + by * ys[sel])) / (1.0 + view * bx)
            hidden |= other.covers(xl, ys[sel])
        occ[sel] = out | hidden
    return occ


def render_scene(scene: Scene) -> RenderedScene:
    h, w = scene.height, scene.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    lid, _ = _layer_map(scene, xs, ys, 0.0)
    if np.any(lid < 0):
        raise ValueError("scene leaves pixels uncovered; add a background layer")
    left = np.zeros((h, w))
    gt = np.zeros((h, w))
    for k, layer in enumerate(scene.layers):
        sel = lid == k
        left[sel] = layer.texture(xs[sel], ys[sel])
        gt[sel] = layer.d(xs[sel], ys[sel])
    # nearer layers must have larger disparity wherever they overlap
    for k, layer in enumerate(scene.layers):
        cov = layer.covers(xs, ys)
        for j in range(k):
            both = cov & scene.layers[j].covers(xs, ys)
            if np.any(layer.d(xs[both], ys[both]) < scene.layers[j].d(xs[both], ys[both])):
                raise ValueError(f"layer {k} is drawn in front of layer {j} but is farther away")
    rlid, rsrc = _layer_map(scene, xs, ys, 1.0)
    right = np.full((h, w), np.nan)
    for k, layer in enumerate(scene.layers):
        sel = rlid == k
        right[sel] = layer.texture(rsrc[sel], ys[sel])
    # right pixels no surface maps to (left frame edge): extend the background texture
    miss = ~np.isfinite(right)
    if miss.any():
        bg = scene.layers[0]
        right[miss] = bg.texture(bg.source_x(xs[miss], ys[miss]), ys[miss])
    if scene.image_noise > 0:
        rng = np.random.default_rng(scene.seed + 7919)
        left = left + rng.normal(0, scene.image_noise, left.shape)
        right = right + rng.normal(0, scene.image_noise, right.shape)
    left = np.clip(left, 0, 1)
    right = np.clip(right, 0, 1)
    occ = occlusion_mask(scene, 1.0)
    return RenderedScene(left, right, DisparityField(gt, np.ones((h, w), bool)), occ, lid, scene)


def builtin_scene(name: str, width: int = 320, height: int = 240, seed: int = 0, **kw) -> Scene:
    """Named desk-scale scenes.

    single_plane        one textured fronto-parallel plane (``disparity`` kw, default 5.3)
    two_planes          textured background at 4 px, foreground box at 12 px
    two_planes_low_texture
                        slanted planes, weak and patchy texture, image noise
    """
    sx, sy = width / 320.0, height / 240.0
    box = (int(110 * sx), int(60 * sy), int(230 * sx), int(180 * sy))
    if name == "single_plane":
        d = kw.get("disparity", 5.3)
        tex = Texture(0.5, 0.15, 0.04, 0.12, seed=seed)
        return Scene(width, height, (Layer(d, None, tex),), kw.get("image_noise", 0.0), seed)
    if name == "two_planes":
        bg = Layer(4.0, None, Texture(0.3, 0.08, seed=seed))
        fg = Layer(12.0, box, Texture(0.7, 0.08, seed=seed + 1))
        return Scene(width, height, (bg, fg), kw.get("image_noise", 0.0), seed)
    if name == "two_planes_low_texture":
        bg = Layer((6.2, 0.012 / sx, 0.006 / sy), None,
                   Texture(0.3, 0.06, 0.03, 0.12, seed=seed, envelope_floor=0.05,
                           envelope_period=140.0 * sx))
        fg = Layer((17.4, -0.008 / sx, 0.004 / sy), box,
                   Texture(0.7, 0.05, 0.03, 0.12, seed=seed + 1, envelope_floor=0.05,
                           envelope_period=90.0 * sx))
        return Scene(width, height, (bg, fg), kw.get("image_noise", 0.01), seed)
    raise KeyError(f"unknown scene {name!r}")


# ---------------------------------------------------------------------------
# experiments


def method_params(method: str, base: FusionParams) -> FusionParams:
    if method == "fused_ecc" or method == "wta":
        return base.replace(criterion="ecc")
    if method == "fused_emcc":
        return base.replace(criterion="emcc")
    if method == "wta_stereo":
        return base.replace(fusion="stereo", aggregation=False)
    if method == "data_term_ecc":
        return base.replace(criterion="ecc", fusion="fixed")
    if method == "simple_fusion_ecc":
        return base.replace(criterion="ecc", fusion="fixed", subpixel=False, aggregation=False)
    raise KeyError(method)


def run_experiment(scene: Scene | RenderedScene, degrade_cfg: DegradeConfig = DegradeConfig(),
                   params: FusionParams | None = None, methods=("fused_ecc", "upsample_only"),
                   rng_seed=0, deltas=DEFAULT_DELTAS, fill: bool = True,
                   keep_outputs: bool = False) -> dict:
    """Render, degrade, fuse with each method and score against ground truth."""
    rendered = scene if isinstance(scene, RenderedScene) else render_scene(scene)
    sc = rendered.scene
    if params is None:
        params = FusionParams(d_min=sc.d_range[0], d_max=sc.d_range[1])
    prior = degrade(rendered.gt, degrade_cfg, rng_seed)
    t0 = time.perf_counter()
    base_ctx, _, seeds, _ = prepare(rendered.left, rendered.right, prior, params)
    t_init = time.perf_counter() - t0
    report = {
        "scene": {"width": sc.width, "height": sc.height, "layers": len(sc.layers)},
        "degrade": degrade_cfg.__dict__.copy(),
        "rng_seed": rng_seed,
        "n_prior": len(prior),
        "initialization_s": t_init,
        "methods": {},
    }
    outputs = {}
    for m in methods:
        if m not in METHODS:
            raise KeyError(f"unknown method {m!r}")
        t0 = time.perf_counter()
        if m == "upsample_only":
            pre = base_ctx.d0
            out = post_fill(pre, base_ctx) if fill else pre
        else:
            ctx = EnergyContext(base_ctx.left, base_ctx.right, base_ctx.d0, base_ctx.masks,
                                method_params(m, params), entropy=base_ctx.entropy)
            if m.startswith("wta"):
                pre = wta_baseline(ctx)[0]
            else:
                pre = grow(seeds, ctx).field
            out = post_fill(pre, ctx) if fill else pre
        dt = time.perf_counter() - t0
        entry = {f"bmp_{d:g}": bmp(out, rendered.gt, rendered.occluded, d) for d in deltas}
        entry["mse"] = mse(out, rendered.gt, rendered.occluded)
        entry["density"] = 100.0 * pre.density()
        entry["runtime_s"] = dt
        report["methods"][m] = entry
        if keep_outputs:
            outputs[m] = (pre, out)
    if keep_outputs:
        report["_outputs"] = outputs
        report["_rendered"] = rendered
    return report


def format_report(report: dict) -> str:
    """Aligned method x metric table."""
    methods = report["methods"]
    if not methods:
        return ""
    cols = list(next(iter(methods.values())).keys())
    width = max(len(m) for m in methods) + 2
    head = "method".ljust(width) + "".join(c.rjust(12) for c in cols)
    lines = [head, "-" * len(head)]
    for m, vals in methods.items():
        lines.append(m.ljust(width) + "".join(f"{vals[c]:12.3f}" for c in cols))
    return "\n".join(lines)


def report_json(report: dict) -> str:
    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    return json.dumps(clean, indent=2, sort_keys=True)
