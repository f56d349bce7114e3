"""Local energy: stereo data term, prior regulariser and adaptive mixing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import (
    DisparityField,
    FusionParams,
    InfeasiblePixel,
    OcclusionMasks,
    to_gray,
    window_patch,
    x_gradient,
)
from .correlation import T_HI, T_LO

INF = math.inf
ENTROPY_BINS = 32


@dataclass(frozen=True)
class EtaPair:
    eta_s: float
    eta_d: float

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.eta_s) and math.isfinite(self.eta_d)


def depth_kernel(x, gamma):
    """g(x; gamma) = exp(-|x| / gamma)."""
    return np.exp(-np.abs(x) / gamma)


def aggregation_weights(d0: DisparityField, p, half: int, gamma_d: float) -> np.ndarray:
    """Row-major window weights favouring pixels on the same surface as ``p``."""
    x, y = p
    if not d0.valid[y, x]:
        return np.ones((2 * half + 1) ** 2)
    vals = window_patch(d0.values, x, y, half).ravel()
    ok = window_patch(d0.valid, x, y, half).ravel()
    w = depth_kernel(d0.values[y, x] - vals, gamma_d)
    w[~ok] = 1.0
    return w


def regularizer(d, d0_p, lam):
    return lam * abs(d - d0_p)


def entropy_field(img: np.ndarray, half: int, bins: int = ENTROPY_BINS) -> np.ndarray:
    """Windowed Shannon entropy of intensities in [0,1], normalised by log(bins)."""
    return K.entropy_kernel(np.ascontiguousarray(img, dtype=np.float64), int(half), int(bins))


def _surrogate_disparity(field: DisparityField) -> np.ndarray:
    """Fill invalid pixels per row with the farther (smaller) nearest valid value."""
    vals = field.masked()
    out = vals.copy()
    for y in range(vals.shape[0]):
        row = vals[y]
        ok = np.isfinite(row)
        if not ok.any() or ok.all():
            continue
        idx = np.arange(len(row))
        left = np.maximum.accumulate(np.where(ok, idx, -1))
        right = np.minimum.accumulate(np.where(ok, idx, len(row))[::-1])[::-1]
        lv = np.where(left >= 0, row[np.clip(left, 0, None)], np.inf)
        rv = np.where(right < len(row), row[np.clip(right, None, len(row) - 1)], np.inf)
        out[y, ~ok] = np.minimum(lv, rv)[~ok]
    return out


def stereo_occlusion_mask(
    left_to_right: DisparityField,
    right_to_left: DisparityField,
    tol: float = 1.0,
    fill_invalid: bool = True,
    occlusions_only: bool = True,
) -> np.ndarray:
    """Left-right cross-check.

    Left pixel p maps to right pixel ``x + d_LR(p)``; a consistent right map
    holds ``-d_LR(p)`` there. A pixel is occluded in the right view when its
    counterpart sees a nearer surface, i.e. ``-d_RL > d_LR + tol``. With
    ``occlusions_only=False`` any disagreement beyond ``tol`` is marked (the
    symmetric check). Pixels whose counterpart is invalid are marked, and so
    are pixels that fall out of frame for every disparity within ``tol``. Invalid left pixels are checked with the background
    disparity of their scanline neighbourhood when ``fill_invalid`` is set,
    otherwise left unmarked.
    """
    if left_to_right.shape != right_to_left.shape:
        raise ValueError("disparity maps differ in shape")
    h, w = left_to_right.shape
    dlr = _surrogate_disparity(left_to_right) if fill_invalid else left_to_right.masked()
    check = np.isfinite(dlr)
    ys, xs = np.nonzero(check)
    xr = np.rint(xs + dlr[ys, xs]).astype(np.int64)
    # out of frame only if no disparity within tol lands inside
    inside = (xs + dlr[ys, xs] + tol > -0.5) & (xs + dlr[ys, xs] - tol < w - 0.5)
    xr_c = np.clip(xr, 0, w - 1)
    ok_r = right_to_left.valid[ys, xr_c]
    diff = -right_to_left.values[ys, xr_c] - dlr[ys, xs]
    if not occlusions_only:
        diff = np.abs(diff)
    bad = ~inside | ((xr == xr_c) & (~ok_r | (diff > tol)))
    mask = np.zeros((h, w), bool)
    mask[ys, xs] = bad
    return mask


def eta_fields(masks: OcclusionMasks, entropy: np.ndarray, mode: str = "adaptive",
               d0valid: np.ndarray | None = None):
    """Per-pixel (eta_s, eta_d) arrays; INF marks the infeasible set."""
    so = masks.stereo_occ
    do = masks.depth_occ
    if mode == "adaptive":
        es = np.clip(entropy, 0.0, 1.0).astype(np.float64)
        ed = 1.0 - es
        es = np.where(so & ~do, 0.0, es)
        ed = np.where(so & ~do, 1.0, ed)
        es = np.where(do & ~so, 1.0, es)
        ed = np.where(do & ~so, 0.0, ed)
        both = so & do
        es[both] = INF
        ed[both] = INF
        return es, ed
    shape = entropy.shape
    if mode == "fixed":
        es = np.full(shape, 0.5)
        ed = np.full(shape, 0.5)
    elif mode == "stereo":
        es = np.ones(shape)
        ed = np.zeros(shape)
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    if d0valid is not None:
        es[~d0valid] = 1.0
        ed[~d0valid] = 0.0
    return es, ed


@dataclass
class EnergyContext:
    """Everything the local energy needs, precomputed once per image pair."""

    left: np.ndarray
    right: np.ndarray
    d0: DisparityField
    masks: OcclusionMasks
    params: FusionParams
    entropy: np.ndarray | None = None
    eta_s: np.ndarray = field(init=False, repr=False)
    eta_d: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.left = to_gray(self.left)
        self.right = to_gray(self.right)
        shape = self.left.shape
        if self.right.shape != shape or self.d0.shape != shape or self.masks.stereo_occ.shape != shape:
            raise ValueError("context fields differ in shape")
        if self.entropy is None:
            self.entropy = entropy_field(self.left, self.params.window_half)
        if np.any(self.entropy < 0) or np.any(self.entropy > 1):
            raise ValueError("entropy must lie in [0,1]")
        self.gleft = x_gradient(self.left)
        self.gright = x_gradient(self.right)
        # a pixel without a prior value is depth-occluded whatever the caller says
        eff = OcclusionMasks(self.masks.stereo_occ, self.masks.depth_occ | ~self.d0.valid)
        self.eta_s, self.eta_d = eta_fields(eff, self.entropy, self.params.fusion, self.d0.valid)
        self.feasible = np.isfinite(self.eta_s)
        self.growable = self.feasible & ~eff.depth_occ
        self.subpix = (self.entropy >= self.params.entropy_subpixel_threshold) & self.params.subpixel
        self._kd = None

    @property
    def shape(self):
        return self.left.shape

    def kernel_data(self) -> K.KernelData:
        if self._kd is None:
            # regulariser needs finite d0 even where eta_d == 0
            d0 = np.where(self.d0.valid, self.d0.values, 0.0)
            self._kd = K.KernelData(
                self.left, self.gleft, self.right, self.gright,
                np.ascontiguousarray(d0), np.ascontiguousarray(self.d0.valid),
                self.eta_s, self.eta_d, np.ascontiguousarray(self.subpix),
                np.ascontiguousarray(self.feasible), np.ascontiguousarray(self.growable),
            )
        return self._kd

    def kernel_cfg(self, r: int | None = None, T: float | None = None,
                   d_range: tuple[int, int] | None = None) -> K.KernelCfg:
        p = self.params
        lo, hi = d_range if d_range is not None else (p.d_min, p.d_max)
        return K.KernelCfg(
            int(p.window_half), float(p.gamma_d), bool(p.aggregation),
            K.ECC if p.criterion == "ecc" else K.EMCC,
            float(p.lam), int(p.r if r is None else r),
            float(p.T if T is None else T), int(lo), int(hi), T_LO, T_HI,
        )


def data_term(ctx: EnergyContext, p, d: int):
    """(E_S, t*) with E_S = 1 - C(t*); 2 signals a textureless window."""
    x, y = p
    cfg = ctx.kernel_cfg()
    n = (2 * cfg.half + 1) ** 2
    wbuf = np.ones(n)
    if cfg.use_weights:
        K.fill_weights(ctx.kernel_data().d0, ctx.d0.valid, x, y, cfg.half, cfg.gamma_d, wbuf)
    es, t = K.data_term_at(ctx.kernel_data(), cfg, x, y, int(d), wbuf, np.zeros(10),
                           bool(ctx.subpix[y, x]))
    return float(es), float(t)


def eta(ctx: EnergyContext, p) -> EtaPair:
    x, y = p
    return EtaPair(float(ctx.eta_s[y, x]), float(ctx.eta_d[y, x]))


def local_energy(ctx: EnergyContext, p, d: int):
    """(E, t*) = eta_s * E_S(d; t*) + eta_d * lam * |d - d0_p|."""
    x, y = p
    if not ctx.feasible[y, x]:
        raise InfeasiblePixel(f"pixel {p} is in both occlusion sets")
    cfg = ctx.kernel_cfg()
    wbuf = np.ones((2 * cfg.half + 1) ** 2)
    if cfg.use_weights:
        K.fill_weights(ctx.kernel_data().d0, ctx.d0.valid, x, y, cfg.half, cfg.gamma_d, wbuf)
    e, t = K.energy_at(ctx.kernel_data(), cfg, x, y, int(d), wbuf, np.zeros(10),
                       bool(ctx.subpix[y, x]))
    return float(e), float(t)
