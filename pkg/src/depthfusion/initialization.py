"""Dense initial disparity map from a sparse, noisy prior.

Two steps: outlier removal among the sparse samples, then a colour-guided
scattered-data filter. The same filter is reused for post-filling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .core import DisparityField, EmptySeedSet, FusionParams, OcclusionMasks, SparsePrior
from .energy import stereo_occlusion_mask


@dataclass(frozen=True)
class UpsampleConfig:
    radius: int = 20
    gamma_c: float = 10.0
    e_c: float = 0.2
    gamma_s: float | None = None  # spatial sigma, defaults to radius / 2

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be ≥1")
        if not self.gamma_c > 0 or (self.gamma_s is not None and not self.gamma_s > 0):
            raise ValueError("bandwidths must be positive")
        if not 0 <= self.e_c <= 1:
            raise ValueError("e_c must be in [0,1]")

    @property
    def sigma_s(self) -> float:
        return self.gamma_s if self.gamma_s is not None else self.radius / 2.0

    @classmethod
    def from_params(cls, params: FusionParams) -> "UpsampleConfig":
        return cls(params.upsample_radius, params.gamma_c, params.e_c)


def refine_sparse(prior: SparsePrior, left=None, min_neighbors: int = 4,
                  min_threshold: float = 2.0, mad_factor: float = 3.0,
                  max_passes: int = 10):
    """Drop samples inconsistent with their neighbourhood.

    A sample is removed when it deviates from the median of its neighbours
    (within twice the mean sample spacing) by more than
    ``max(min_threshold, mad_factor * MAD)``. Samples with fewer than
    ``min_neighbors`` neighbours are kept. Passes repeat until nothing changes,
    so the result is a fixed point.

    Returns (kept prior, removed prior). ``left`` is accepted for interface
    symmetry; the rule only looks at disparities.
    """
    if len(prior) == 0:
        raise EmptySeedSet("empty prior")
    keep = np.ones(len(prior), bool)
    pts = np.column_stack([prior.x, prior.y]).astype(np.float64)
    for _ in range(max_passes):
        idx = np.flatnonzero(keep)
        if len(idx) < min_neighbors + 1:
            break
        sub = pts[idx]
        span = np.ptp(sub, axis=0) + 1.0
        spacing = np.sqrt(span[0] * span[1] / len(idx))
        tree = cKDTree(sub)
        neigh = tree.query_ball_point(sub, r=2.0 * spacing)
        d = prior.d[idx]
        drop = []
        for k, nb in enumerate(neigh):
            nb = [j for j in nb if j != k]
            if len(nb) < min_neighbors:
                continue
            vals = d[nb]
            med = np.median(vals)
            mad = np.median(np.abs(vals - med))
            if abs(d[k] - med) > max(min_threshold, mad_factor * mad):
                drop.append(idx[k])
        if not drop:
            break
        keep[drop] = False
    return prior.subset(keep), prior.subset(~keep)


def _guide(image, color=None) -> np.ndarray:
    """Guidance planes on a 0-255 scale, shape (h, w, c)."""
    src = color if color is not None else image
    arr = np.asarray(src, dtype=np.float64)
    if arr.max(initial=0) <= 1.0:
        arr = arr * 255.0
    if arr.ndim == 2:
        arr = arr[..., None]
    return np.ascontiguousarray(arr)


def full_support(cfg: UpsampleConfig, density: float) -> float:
    """Spatial weight collected by a pixel surrounded by samples at ``density``."""
    r = cfg.radius
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    rr = xx**2 + yy**2
    ws = np.exp(-rr / (2 * cfg.sigma_s**2))[rr <= r * r]
    return density * ws.sum()


def upsample(prior: SparsePrior, left, cfg: UpsampleConfig = UpsampleConfig(),
             color=None, use_color: bool = True, return_support: bool = False):
    """Joint spatial/colour weighted interpolation of sparse disparities.

    D0(p) = sum_q ws(p,q) wc(p,q) d_q / sum_q ws(p,q) wc(p,q), with a Gaussian
    spatial kernel and wc = exp(-|c_p - c_q|_1 / gamma_c). A pixel is left
    invalid when its spatial support falls below ``e_c`` times the support of a
    pixel with all-round sample coverage at the prior's mean density.
    """
    guide = _guide(left, color)
    h, w = guide.shape[:2]
    num, den, sden, _, _ = K.upsample_scatter(
        guide, prior.x, prior.y, prior.d, int(cfg.radius), float(cfg.sigma_s),
        float(cfg.gamma_c), bool(use_color),
    )
    density = len(prior) / float(h * w)
    support = sden / max(full_support(cfg, density), 1e-300)
    valid = (support >= cfg.e_c) & (den > 0)
    values = np.zeros((h, w))
    values[valid] = num[valid] / den[valid]
    field = DisparityField(values, valid)
    if return_support:
        return field, support
    return field


def _hidden_in_right(prior: SparsePrior) -> np.ndarray:
    """Samples occluded in the right view.

    A sample is hidden when some nearer sample on the same row lies to its left
    in the left view but lands to its right after the shift (the pair swaps
    order). Checked with a running maximum of x + d along each row.
    """
    n = len(prior)
    hidden = np.zeros(n, bool)
    if n == 0:
        return hidden
    order = np.lexsort((prior.x, prior.y))
    y = prior.y[order]
    xr = prior.x[order] + prior.d[order]
    starts = np.flatnonzero(np.r_[True, y[1:] != y[:-1]])
    ends = np.r_[starts[1:], n]
    for s, e in zip(starts, ends):
        seg = xr[s:e]
        prev_max = np.maximum.accumulate(np.r_[-np.inf, seg[:-1]])
        hidden[order[s:e]] = prev_max > seg
    return hidden


def mirror_prior(prior: SparsePrior, width: int, zbuffer: bool = True) -> SparsePrior:
    """Left-frame samples (x, y, d) re-expressed in the right frame as (x+d, y, -d).

    With ``zbuffer`` samples hidden behind nearer ones in the right view are
    dropped. On collisions the larger-magnitude (nearer) disparity wins.
    """
    if zbuffer:
        prior = prior.subset(~_hidden_in_right(prior))
    xr = np.rint(prior.x + prior.d).astype(np.int64)
    inside = (xr >= 0) & (xr < width)
    xr, yr, dr = xr[inside], prior.y[inside], -prior.d[inside]
    order = np.lexsort((-np.abs(dr), xr, yr))
    xr, yr, dr = xr[order], yr[order], dr[order]
    first = np.ones(len(xr), bool)
    first[1:] = (xr[1:] != xr[:-1]) | (yr[1:] != yr[:-1])
    return SparsePrior(xr[first], yr[first], dr[first])


def initial_maps(prior_left: SparsePrior, left, right, params: FusionParams = FusionParams(),
                 prior_right: SparsePrior | None = None, color_left=None, color_right=None,
                 refine: bool = True):
    """Refine and upsample both views' priors, then derive the occlusion masks.

    Returns (D0 left, D0 right, masks, refined left prior).
    """
    if len(prior_left) == 0:
        raise EmptySeedSet("empty prior")
    cfg = UpsampleConfig.from_params(params)
    h, w = np.asarray(left).shape[:2]
    if refine:
        kept, removed = refine_sparse(prior_left, left)
    else:
        kept, removed = prior_left, prior_left.subset(np.zeros(len(prior_left), bool))
    if len(kept) == 0:
        raise EmptySeedSet("refinement removed every sample")
    if prior_right is None:
        prior_right = mirror_prior(kept, w)
    elif refine:
        prior_right, _ = refine_sparse(prior_right, right)
    d0l = upsample(kept, left, cfg, color_left)
    d0r = upsample(prior_right, right, cfg, color_right)
    so = stereo_occlusion_mask(d0l, d0r, params.crosscheck_tol)
    do = ~d0l.valid
    do[removed.y, removed.x] = True
    return d0l, d0r, OcclusionMasks(so, do), kept
