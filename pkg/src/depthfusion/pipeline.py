"""End-to-end fusion: prior -> initial map -> region growing -> filling."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import DisparityField, FusionParams, OcclusionMasks, SparsePrior, to_gray
from .energy import EnergyContext, entropy_field
from .growing import GrowResult, grow, post_fill, wta_baseline
from .initialization import initial_maps


@dataclass
class FusionResult:
    disparity: DisparityField  # final output (filled unless fill=False)
    grown: DisparityField  # before filling
    d0: DisparityField
    d0_right: DisparityField
    masks: OcclusionMasks
    entropy: np.ndarray
    growth: GrowResult | None
    seeds: SparsePrior
    timings: dict = field(default_factory=dict)

    def stats(self) -> dict:
        e = self.growth.energy[self.growth.assigned] if self.growth is not None else np.array([])
        hist, edges = np.histogram(e, bins=10, range=(0.0, 1.0))
        return {
            "density": float(self.grown.density()),
            "d0_density": float(self.d0.density()),
            "n_seeds": int(len(self.seeds)),
            "n_visits": int(self.growth.n_visits) if self.growth else 0,
            "n_evaluations": int(self.growth.n_evals) if self.growth else 0,
            "stereo_occluded": float(self.masks.stereo_occ.mean()),
            "depth_occluded": float(self.masks.depth_occ.mean()),
            "energy_histogram": {"edges": edges.tolist(), "counts": hist.tolist()},
            "runtime_s": {k: round(v, 6) for k, v in self.timings.items()},
        }


def prepare(left, right, prior: SparsePrior, params: FusionParams = FusionParams(),
            color_left=None, color_right=None, refine: bool = True):
    """Initial maps, masks and the energy context."""
    t0 = time.perf_counter()
    left = to_gray(left)
    right = to_gray(right)
    prior = prior.clip(params.d_min, params.d_max)
    d0l, d0r, masks, kept = initial_maps(prior, left, right, params, color_left=color_left,
                                         color_right=color_right, refine=refine)
    t1 = time.perf_counter()
    ent = entropy_field(left, params.window_half)
    ctx = EnergyContext(left, right, d0l, masks, params, entropy=ent)
    t2 = time.perf_counter()
    timings = {"initialization": t1 - t0, "context": t2 - t1}
    return ctx, d0r, kept, timings


def fuse(left, right, prior: SparsePrior, params: FusionParams = FusionParams(),
         fill: bool = True, color_left=None, color_right=None, method: str = "grow",
         refine: bool = True) -> FusionResult:
    """Fuse a rectified pair with a sparse prior registered to the left image.

    ``method`` is ``grow`` (the seeded propagation) or ``wta`` (per-pixel
    minimiser of the same energy over the full range).
    """
    ctx, d0r, seeds, timings = prepare(left, right, prior, params, color_left,
                                       color_right, refine)
    t0 = time.perf_counter()
    growth = None
    if method == "grow":
        growth = grow(seeds, ctx)
        grown = growth.field
    elif method == "wta":
        grown = wta_baseline(ctx)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    t1 = time.perf_counter()
    out = post_fill(grown, ctx, color=color_left) if fill else grown
    t2 = time.perf_counter()
    timings.update({"growing": t1 - t0, "filling": t2 - t1})
    return FusionResult(out, grown, ctx.d0, d0r, ctx.masks, ctx.entropy, growth, seeds, timings)
