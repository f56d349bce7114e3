import csv
import math

import numpy as np
import pytest
from scipy import ndimage

from conftest import flat_context_inputs, shifted_pair
from depthfusion.core import DisparityField, EmptySeedSet, FusionParams, OcclusionMasks, SparsePrior
from depthfusion.energy import EnergyContext, local_energy
from depthfusion.evaluation import DegradeConfig, run_experiment
from depthfusion.growing import (
    FillWarning,
    expand,
    grow,
    grow_stepwise,
    post_fill,
    seed,
    wta_baseline,
)


def plane_ctx(shift=3.4, d0=3.0, params=None, masks=None, seed_=3, h=40, w=56):
    left, right = shifted_pair(h, w, shift, seed_)
    d0f, none = flat_context_inputs(h, w, d0)
    return EnergyContext(left, right, d0f, masks or none, params or FusionParams(d_min=0, d_max=8))


def center_seed(ctx, d):
    h, w = ctx.shape
    return SparsePrior([w // 2], [h // 2], [float(d)])


def test_single_seed_grows_dense_correct_map():
    ctx = plane_ctx()
    res = grow(center_seed(ctx, 3.0), ctx)
    assert res.check_invariants(1, 0.5) == []
    inner = res.assigned[6:-6, 6:-12]
    assert inner.mean() > 0.98
    vals = res.field.values[6:-6, 6:-12][inner]
    assert np.abs(vals - 3.4).max() < 0.15
    assert res.n_visits <= res.assigned.size


def test_stepwise_matches_compiled():
    ctx = plane_ctx(params=FusionParams(d_min=0, d_max=8, r=2))
    pr = SparsePrior([10, 30, 45], [10, 25, 5], [3.0, 4.0, 2.0])
    a = grow(pr, ctx)
    b = grow_stepwise(pr, ctx)
    for name in ("d", "t", "energy", "assigned", "parent", "assign_step", "visit_step"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    assert (a.n_visits, a.n_evals, a.n_seeds) == (b.n_visits, b.n_evals, b.n_seeds)


def test_queue_structure_does_not_change_output():
    ctx = plane_ctx(shift=2.6, d0=2.0, seed_=5)
    pr = SparsePrior([5, 28, 50, 20], [5, 20, 35, 30], [2.0, 3.0, 3.0, 1.0])
    a = grow_stepwise(pr, ctx, queue="heap")
    b = grow_stepwise(pr, ctx, queue="sorted")
    assert np.array_equal(a.field.values, b.field.values)
    assert np.array_equal(a.assigned, b.assigned)


def test_seed_queue_pops_in_energy_order():
    ctx = plane_ctx()
    pr = SparsePrior([10, 20, 30, 40], [10, 20, 30, 15], [0.0, 3.0, 7.0, 5.0])
    st = seed(pr, ctx)
    assert len(st.queue) == 4 and st.n_seeds == 4
    assert not st.assigned.any()
    energies = [st.queue.pop()[0] for _ in range(4)]
    assert energies == sorted(energies)
    # seeds are scored at t = 0
    ctx0 = plane_ctx(params=FusionParams(d_min=0, d_max=8, subpixel=False))
    expected = sorted(local_energy(ctx0, (x, y), int(d))[0] for x, y, d in zip(pr.x, pr.y, pr.d))
    assert energies == pytest.approx(expected, abs=1e-12)


def test_queue_ties_break_by_pixel_order():
    ctx = plane_ctx()
    st = seed(center_seed(ctx, 3.0), ctx)
    st.queue.pop()
    for e, pix in ((0.3, 7), (0.1, 9), (0.2, 4), (0.1, 2)):
        st.push(e, pix, 3, False)
    assert [st.queue.pop()[1] for _ in range(4)] == [2, 9, 4, 7]


def test_all_seeds_infeasible():
    h, w = 40, 56
    both = np.zeros((h, w), bool)
    both[10:20, 10:20] = True
    ctx = plane_ctx(masks=OcclusionMasks(both, both))
    pr = SparsePrior([12, 15], [12, 15], [3.0, 3.0])
    with pytest.raises(EmptySeedSet):
        grow(pr, ctx)
    with pytest.raises(EmptySeedSet):
        seed(pr, ctx)


def test_zero_threshold_assigns_nothing():
    ctx = plane_ctx()
    res = grow(center_seed(ctx, 3.0), ctx, T=0.0)
    assert not res.assigned.any()
    assert res.n_visits == 1


def test_expand_with_assigned_neighbours_only_visits():
    ctx = plane_ctx()
    st = seed(center_seed(ctx, 3.0), ctx)
    while expand(st, ctx):
        pass
    h, w = ctx.shape
    p = 20 * w + 20
    st.visited[p] = False
    st.push(0.0, p, 3, False)
    before = st.assigned.copy()
    assert expand(st, ctx)
    assert st.visited[p]
    assert np.array_equal(st.assigned, before)
    assert len(st.queue) == 0
    assert not expand(st, ctx)


def test_candidates_limited_to_radius():
    # truth is 3.4 but the seed says 0: each step can move by at most r
    ctx = plane_ctx(d0=0.0, params=FusionParams(d_min=0, d_max=8, fusion="stereo", T=2.5))
    res = grow(center_seed(ctx, 0.0), ctx, r=1)
    assert res.check_invariants(1, 2.5) == []
    par = res.parent[res.assigned]
    d = res.d[res.assigned]
    assert np.all(np.abs(d - res.parent_d[res.assigned]) <= 1)
    assert np.all(par >= 0)


def test_two_islands_separated_by_depth_occlusion_band():
    h, w = 40, 90
    left, right = shifted_pair(h, w, 3.0, 8)
    left[:, 38:52] = 0.5
    right[:, 38:55] = 0.5
    do = np.zeros((h, w), bool)
    do[:, 38:52] = True
    vals = np.full((h, w), 3.0)
    d0 = DisparityField(vals, ~do)
    ctx = EnergyContext(left, right, d0, OcclusionMasks(np.zeros((h, w), bool), do),
                        FusionParams(d_min=0, d_max=8))
    res = grow(SparsePrior([15, 70], [20, 20], [3.0, 3.0]), ctx)
    assert not res.assigned[:, 38:52].any()
    _, n = ndimage.label(res.assigned)
    assert n == 2
    assert res.check_invariants(1, 0.5) == []


def test_trace_is_a_forest(tmp_path):
    ctx = plane_ctx(params=FusionParams(d_min=0, d_max=8, r=2))
    res = grow(SparsePrior([10, 40], [10, 30], [3.0, 4.0]), ctx)
    path = tmp_path / "trace.csv"
    res.write_trace(path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == res.assigned.sum()
    steps = [int(r["step"]) for r in rows]
    assert steps == sorted(steps)
    w = ctx.shape[1]
    for r in rows:
        px, py = int(r["parent_x"]), int(r["parent_y"])
        assert res.visit_step[py, px] < int(r["step"])
        assert float(r["energy"]) < 0.5
        assert abs(int(r["d"]) - res.parent_d[int(r["y"]), int(r["x"])]) <= 2
        assert res.parent[int(r["y"]), int(r["x"])] == py * w + px


# ---------------------------------------------------------------------------
# winner-take-all


def test_wta_equals_grow_with_full_range_and_seeds_everywhere():
    ctx = plane_ctx(shift=2.7, seed_=9, h=24, w=32)
    h, w = ctx.shape
    yy, xx = np.mgrid[0:h, 0:w]
    seeds = SparsePrior(xx.ravel(), yy.ravel(), np.full(h * w, 3.0))
    g = grow(seeds, ctx, r=8, T=math.inf)
    _, d, t, e = wta_baseline(ctx)
    assert g.assigned.all()
    assert np.array_equal(g.d, d) and np.array_equal(g.t, t)


def test_wta_pure_prior_returns_prior():
    h, w = 30, 40
    flat = np.full((h, w), 0.5)
    d0 = DisparityField(np.full((h, w), 5.0), np.ones((h, w), bool))
    masks = OcclusionMasks(np.ones((h, w), bool), np.zeros((h, w), bool))
    ctx = EnergyContext(flat, flat, d0, masks, FusionParams(d_min=0, d_max=8))
    f, d, t, _ = wta_baseline(ctx)
    assert np.all(f.values == 5.0) and np.all(t == 0.0)


def test_wta_worse_than_grow_on_low_texture(low_texture):
    rep = run_experiment(low_texture, DegradeConfig(10, 2.0, 2.0), methods=("fused_ecc", "wta"))
    m = rep["methods"]
    assert m["wta"]["bmp_1"] >= m["fused_ecc"]["bmp_1"]


# ---------------------------------------------------------------------------
# post-filling


def row_ctx(w=15):
    img = np.tile(np.linspace(0.2, 0.8, w), (1, 1))
    d0, masks = flat_context_inputs(1, w, 0.0)
    return EnergyContext(img, img, d0, masks, FusionParams(d_min=0, d_max=32))


def test_fill_dense_is_identity():
    ctx = row_ctx()
    f = DisparityField(np.arange(15.0)[None], np.ones((1, 15), bool))
    out = post_fill(f, ctx)
    assert np.array_equal(out.values, f.values) and out.valid.all()


def test_fill_single_gap_streak_and_filter():
    ctx = row_ctx()
    vals = np.r_[np.full(7, 10.0), 0.0, np.full(7, 14.0)][None]
    valid = np.ones((1, 15), bool)
    valid[0, 7] = False
    f = DisparityField(vals, valid)
    streak = post_fill(f, ctx, max_gap_fraction=0.0)
    assert streak.values[0, 7] == 10.0
    filt = post_fill(f, ctx, max_gap_fraction=0.1)
    assert 10.0 < filt.values[0, 7] < 14.0
    assert filt.valid.all()


def test_fill_rows_without_data_copy_nearest_row():
    img = np.random.default_rng(0).uniform(0, 1, (6, 10))
    d0, masks = flat_context_inputs(6, 10, 0.0)
    ctx = EnergyContext(img, img, d0, masks, FusionParams(d_min=0, d_max=32))
    vals = np.tile(np.arange(6.0)[:, None], (1, 10))
    valid = np.ones((6, 10), bool)
    valid[4:] = False
    out = post_fill(DisparityField(vals, valid), ctx, max_gap_fraction=0.0)
    assert out.valid.all()
    assert np.all(out.values[4:] == 3.0)


def test_fill_without_any_valid_pixel_warns():
    ctx = row_ctx()
    f = DisparityField(np.zeros((1, 15)), np.zeros((1, 15), bool))
    with pytest.warns(FillWarning):
        out = post_fill(f, ctx)
    assert not out.valid.any()
