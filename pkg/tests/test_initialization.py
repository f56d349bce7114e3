import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from depthfusion.core import EmptySeedSet, FusionParams, SparsePrior
from depthfusion.evaluation import DegradeConfig, degrade
from depthfusion.initialization import (
    UpsampleConfig,
    initial_maps,
    mirror_prior,
    refine_sparse,
    upsample,
)


def grid_prior(h, w, step, fn):
    yy, xx = np.mgrid[0:h:step, 0:w:step]
    x, y = xx.ravel(), yy.ravel()
    return SparsePrior(x, y, fn(x, y).astype(np.float64))


def plane(x, y):
    return 8.0 + 0.02 * x - 0.01 * y


def test_upsample_config_validation():
    with pytest.raises(ValueError):
        UpsampleConfig(radius=0)
    with pytest.raises(ValueError):
        UpsampleConfig(gamma_c=0)
    with pytest.raises(ValueError):
        UpsampleConfig(e_c=1.5)
    assert UpsampleConfig().sigma_s == 10.0


# ---------------------------------------------------------------------------
# refinement


def test_refine_keeps_clean_plane():
    pr = grid_prior(100, 120, 10, plane)
    kept, removed = refine_sparse(pr)
    assert len(kept) == len(pr) and len(removed) == 0


def test_refine_removes_single_outlier():
    pr = grid_prior(100, 120, 10, plane)
    k = int(np.flatnonzero((pr.x == 50) & (pr.y == 50))[0])
    pr.d[k] += 20.0
    kept, removed = refine_sparse(pr)
    assert len(removed) == 1
    assert (removed.x[0], removed.y[0]) == (50, 50)


def test_refine_keeps_isolated_samples():
    pr = SparsePrior([0, 50, 100], [0, 50, 100], [1.0, 30.0, 2.0])
    kept, removed = refine_sparse(pr)
    assert len(kept) == 3


def test_refine_empty_prior():
    with pytest.raises(EmptySeedSet):
        refine_sparse(SparsePrior([], [], []))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_refine_idempotent(two_planes, seed):
    pr = degrade(two_planes.gt, DegradeConfig(10, 2.0, 2.0), seed)
    pr.d[::37] += 15.0
    kept, _ = refine_sparse(pr)
    again, removed = refine_sparse(kept)
    assert len(removed) == 0 and len(again) == len(kept)


# ---------------------------------------------------------------------------
# upsampling


def test_upsample_constant_plane():
    pr = grid_prior(60, 80, 5, lambda x, y: np.full(x.shape, 7.25))
    f = upsample(pr, np.full((60, 80), 0.5))
    # the grid ends at (75, 55); only the far corner lacks support
    assert f.valid[:56, :76].all()
    assert np.allclose(f.values[f.valid], 7.25)


def test_seed_free_disk_is_invalid():
    pr = grid_prior(200, 200, 5, lambda x, y: np.full(x.shape, 3.0))
    far = (pr.x - 100) ** 2 + (pr.y - 100) ** 2 > 40**2
    f = upsample(pr.subset(far), np.full((200, 200), 0.5))
    assert not f.valid[100, 100]
    assert not f.valid[90:111, 90:111].any()
    assert f.valid[10, 10]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_upsample_is_convex_combination(seed):
    rng = np.random.default_rng(seed)
    n = 40
    pr = SparsePrior(rng.choice(50, n), rng.choice(40, n), rng.uniform(2, 20, n))
    pr = pr.subset(np.unique(pr.y * 50 + pr.x, return_index=True)[1])
    img = rng.uniform(0, 1, (40, 50))
    f = upsample(pr, img, UpsampleConfig(radius=10))
    v = f.values[f.valid]
    assert np.all(v >= pr.d.min() - 1e-9) and np.all(v <= pr.d.max() + 1e-9)


def test_colour_term_helps_at_discontinuities(two_planes):
    pr = degrade(two_planes.gt, DegradeConfig(10, 0.0, 0.0), 0)

    def rms(use_color):
        f = upsample(pr, two_planes.left, UpsampleConfig(), use_color=use_color)
        err = f.values[f.valid] - two_planes.gt.values[f.valid]
        return np.sqrt(np.mean(err**2))

    assert rms(True) < rms(False)


# ---------------------------------------------------------------------------
# right-view prior


def test_mirror_shifts_and_negates():
    pr = SparsePrior([0, 5], [1, 2], [3.0, 4.0])
    m = mirror_prior(pr, 20)
    got = sorted(zip(m.x.tolist(), m.y.tolist(), m.d.tolist()))
    assert got == [(3, 1, -3.0), (9, 2, -4.0)]


def test_mirror_collision_keeps_nearer():
    pr = SparsePrior([2, 4], [0, 0], [6.0, 4.0])
    m = mirror_prior(pr, 20, zbuffer=False)
    assert len(m) == 1 and m.d[0] == -6.0


def test_mirror_zbuffer_drops_hidden_samples():
    # background at d=4 just left of a foreground edge at d=12 ends up behind it
    pr = SparsePrior([10, 12, 14, 20], [0, 0, 0, 0], [4.0, 12.0, 4.0, 4.0])
    m = mirror_prior(pr, 40)
    assert sorted(m.x.tolist()) == [14, 24]
    # without the z-buffer the hidden sample survives; the collision at 24 keeps d=-12
    m = mirror_prior(pr, 40, zbuffer=False)
    assert sorted(zip(m.x.tolist(), m.d.tolist())) == [(14, -4.0), (18, -4.0), (24, -12.0)]


def test_mirror_drops_out_of_frame():
    pr = SparsePrior([18], [0], [5.0])
    assert len(mirror_prior(pr, 20)) == 0


# ---------------------------------------------------------------------------
# initial maps and masks


def test_consistent_prior_has_no_interior_stereo_occlusion(single_plane):
    params = FusionParams(d_min=0, d_max=32)
    pr = degrade(single_plane.gt, DegradeConfig(10, 0.0, 0.0), 0)
    _, _, masks, _ = initial_maps(pr, single_plane.left, single_plane.right, params)
    assert not masks.stereo_occ[:, :-10].any()


def test_sensor_gap_is_depth_occluded_inside_stereo_occlusion(two_planes):
    params = FusionParams(d_min=0, d_max=32)
    h, w = two_planes.gt.shape
    blind = np.zeros((h, w), bool)
    blind[60:180, 60:110] = True  # shadow left of the box, as seen by an offset sensor
    pr = degrade(two_planes.gt, DegradeConfig(10, 0.0, 0.0), 0, exclude=blind)
    _, _, masks, _ = initial_maps(pr, two_planes.left, two_planes.right, params)
    do = masks.depth_occ
    assert do[120, 85]
    so = ndimage.binary_dilation(masks.stereo_occ, iterations=3)
    assert (do & so).sum() >= 0.8 * do.sum()


def test_removed_seeds_are_depth_occluded(two_planes):
    params = FusionParams(d_min=0, d_max=32)
    pr = degrade(two_planes.gt, DegradeConfig(10, 2.0, 2.0), 3)
    pr.d[::41] += 18.0
    _, _, masks, kept = initial_maps(pr, two_planes.left, two_planes.right, params)
    kept_idx = set(zip(kept.x.tolist(), kept.y.tolist()))
    removed = np.array([(x, y) not in kept_idx for x, y in zip(pr.x.tolist(), pr.y.tolist())])
    assert removed.sum() >= 10
    assert masks.depth_occ[pr.y[removed], pr.x[removed]].all()


def test_initial_maps_empty_prior(two_planes):
    with pytest.raises(EmptySeedSet):
        initial_maps(SparsePrior([], [], []), two_planes.left, two_planes.right)
