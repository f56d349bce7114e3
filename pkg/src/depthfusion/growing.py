"""Seeded region growing with highest-confidence-first visiting order.

Seeds start the propagation but are not assignments themselves: a seed pixel
receives its output value from a neighbour, exactly like any other pixel. Each
visit proposes values for the unassigned 4-neighbours, restricted to
``|d - d_parent| <= r``, and accepts them when the local energy is below ``T``.

``grow`` runs the compiled loop. ``GrowState`` with ``seed``/``expand`` is the
same algorithm step by step in Python; it is slower but exposes the queue and
lets the priority structure be swapped.
"""
from __future__ import annotations

import bisect
import csv
import heapq
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels as K
from .core import DisparityField, EmptySeedSet, MetaDisparity, SparsePrior
from .energy import EnergyContext

log = logging.getLogger(__name__)

NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class FillWarning(UserWarning):
    pass


@dataclass
class GrowResult:
    d: np.ndarray  # integer disparity
    t: np.ndarray  # subpixel correction
    energy: np.ndarray
    assigned: np.ndarray
    parent: np.ndarray  # flat index of the visiting pixel, -1 if none
    parent_d: np.ndarray  # disparity the parent propagated
    assign_step: np.ndarray
    visit_step: np.ndarray
    n_visits: int
    n_evals: int
    n_seeds: int

    @property
    def field(self) -> DisparityField:
        return DisparityField(np.where(self.assigned, self.d + self.t, 0.0), self.assigned.copy())

    def meta(self, x: int, y: int) -> MetaDisparity:
        return MetaDisparity(x, y, int(self.d[y, x]), float(self.t[y, x]), float(self.energy[y, x]))

    def trace_rows(self):
        """(step, pixel, parent, d, t, energy) for every assignment, in order."""
        w = self.d.shape[1]
        idx = np.flatnonzero(self.assigned.ravel())
        idx = idx[np.argsort(self.assign_step.ravel()[idx], kind="stable")]
        for p in idx:
            y, x = divmod(int(p), w)
            par = int(self.parent.ravel()[p])
            yield (int(self.assign_step.ravel()[p]), (x, y),
                   divmod(par, w)[::-1] if par >= 0 else None,
                   int(self.d[y, x]), float(self.t[y, x]), float(self.energy[y, x]))

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "x", "y", "parent_x", "parent_y", "d", "t", "energy"])
            for step, (x, y), par, d, t, e in self.trace_rows():
                px, py = par if par is not None else (-1, -1)
                wr.writerow([step, x, y, px, py, d, f"{t:.9g}", f"{e:.9g}"])

    def check_invariants(self, r: int, T: float) -> list[str]:
        """Violations of the growing contract; empty when everything holds."""
        problems = []
        npix = self.assigned.size
        if self.n_visits > npix:
            problems.append(f"{self.n_visits} visits for {npix} pixels")
        a = self.assigned.ravel()
        vs = self.visit_step.ravel()
        asg = self.assign_step.ravel()
        par = self.parent.ravel()
        if np.any(a & (par < 0)):
            problems.append("assigned pixel without parent")
        if np.any(~a & (par >= 0)):
            problems.append("parent recorded for unassigned pixel")
        idx = np.flatnonzero(a)
        if len(idx):
            p = par[idx]
            if np.any(vs[p] < 0) or np.any(vs[p] >= asg[idx]):
                problems.append("child assigned before its parent was visited")
            dd = np.abs(self.d.ravel()[idx] - self.parent_d.ravel()[idx])
            if np.any(dd > r):
                problems.append(f"|d_child - d_parent| up to {dd.max()} > r={r}")
            if np.any(~(self.energy.ravel()[idx] < T)):
                problems.append("accepted energy not below T")
            if np.any(np.abs(self.t.ravel()[idx]) >= 1):
                problems.append("|t| >= 1")
            if len(np.unique(asg[idx])) != len(idx):
                problems.append("two assignments share a step")
        return problems


def _seed_arrays(prior: SparsePrior, ctx: EnergyContext):
    h, w = ctx.shape
    p = ctx.params
    prior.validate((h, w))
    d = np.clip(np.rint(prior.d), p.d_min, p.d_max).astype(np.int64)
    idx = (prior.y * w + prior.x).astype(np.int64)
    return idx, d


def grow(prior: SparsePrior, ctx: EnergyContext, r: int | None = None, T: float | None = None,
         d_range=None) -> GrowResult:
    """Run the region growing to completion."""
    idx, d = _seed_arrays(prior, ctx)
    cfg = ctx.kernel_cfg(r=r, T=T, d_range=d_range)
    out = K.grow_kernel(ctx.kernel_data(), cfg, idx, d)
    (d_out, t_out, e_out, assigned, parent, parent_d, asg, vis,
     n_visits, n_evals, n_seeds) = out
    if n_seeds == 0:
        raise EmptySeedSet("every seed lies in the infeasible region")
    shape = ctx.shape
    res = GrowResult(
        d_out.reshape(shape), t_out.reshape(shape), e_out.reshape(shape),
        assigned.reshape(shape), parent.reshape(shape), parent_d.reshape(shape),
        asg.reshape(shape), vis.reshape(shape), int(n_visits), int(n_evals), int(n_seeds),
    )
    log.debug("grow: %d seeds, %d visits, %d evaluations, density %.3f",
              n_seeds, n_visits, n_evals, assigned.mean())
    return res


class _SortedQueue:
    """Pending entries kept fully sorted; pops the smallest."""

    def __init__(self):
        self._items = []

    def push(self, item):
        bisect.insort(self._items, item)

    def pop(self):
        return self._items.pop(0)

    def __len__(self):
        return len(self._items)


class _HeapQueue:
    def __init__(self):
        self._items = []

    def push(self, item):
        heapq.heappush(self._items, item)

    def pop(self):
        return heapq.heappop(self._items)

    def __len__(self):
        return len(self._items)


@dataclass
class GrowState:
    shape: tuple
    queue: object
    visited: np.ndarray
    assigned: np.ndarray
    d: np.ndarray
    t: np.ndarray
    energy: np.ndarray
    parent: np.ndarray
    parent_d: np.ndarray
    assign_step: np.ndarray
    visit_step: np.ndarray
    step: int = 0
    counter: int = 0
    n_visits: int = 0
    n_evals: int = 0
    n_seeds: int = 0
    r: int = 1
    T: float = 0.5
    d_range: tuple = (0, 0)
    _wbuf: np.ndarray = field(default=None, repr=False)

    def push(self, energy, pixel, d, is_seed):
        self.queue.push((float(energy), int(pixel), self.counter, int(d), bool(is_seed)))
        self.counter += 1

    def has_pending(self) -> bool:
        return len(self.queue) > 0

    def result(self) -> GrowResult:
        return GrowResult(
            self.d.reshape(self.shape), self.t.reshape(self.shape),
            self.energy.reshape(self.shape), self.assigned.reshape(self.shape),
            self.parent.reshape(self.shape), self.parent_d.reshape(self.shape),
            self.assign_step.reshape(self.shape), self.visit_step.reshape(self.shape),
            self.n_visits, self.n_evals, self.n_seeds,
        )


def seed(prior: SparsePrior, ctx: EnergyContext, queue: str = "heap", r=None, T=None,
         d_range=None) -> GrowState:
    """Evaluate every feasible seed at its rounded prior (t = 0) and queue it."""
    if len(prior) == 0:
        raise EmptySeedSet("empty prior")
    h, w = ctx.shape
    npix = h * w
    p = ctx.params
    st = GrowState(
        shape=(h, w), queue=_HeapQueue() if queue == "heap" else _SortedQueue(),
        visited=np.zeros(npix, bool), assigned=np.zeros(npix, bool),
        d=np.zeros(npix, np.int64), t=np.zeros(npix), energy=np.full(npix, np.inf),
        parent=np.full(npix, -1, np.int64), parent_d=np.zeros(npix, np.int64),
        assign_step=np.full(npix, -1, np.int64), visit_step=np.full(npix, -1, np.int64),
        r=int(p.r if r is None else r), T=float(p.T if T is None else T),
        d_range=tuple(d_range) if d_range is not None else (p.d_min, p.d_max),
    )
    cfg = ctx.kernel_cfg(r=st.r, T=st.T, d_range=st.d_range)
    st._wbuf = np.ones((2 * cfg.half + 1) ** 2)
    kd = ctx.kernel_data()
    s = np.zeros(10)
    idx, dd = _seed_arrays(prior, ctx)
    entries = []
    for pix, d in zip(idx, dd):
        y, x = divmod(int(pix), w)
        if not ctx.feasible[y, x]:
            continue
        if cfg.use_weights:
            K.fill_weights(kd.d0, kd.d0valid, x, y, cfg.half, cfg.gamma_d, st._wbuf)
        e, _ = K.energy_at(kd, cfg, x, y, int(d), st._wbuf, s, False)
        entries.append((e, int(pix), int(d)))
    if not entries:
        raise EmptySeedSet("every seed lies in the infeasible region")
    for e, pix, d in entries:
        st.push(e, pix, d, True)
    st.n_seeds = len(entries)
    return st


def expand(state: GrowState, ctx: EnergyContext) -> bool:
    """Visit the lowest-energy pending entry. Returns False once the queue is empty."""
    h, w = state.shape
    kd = ctx.kernel_data()
    cfg = ctx.kernel_cfg(r=state.r, T=state.T, d_range=state.d_range)
    s = np.zeros(10)
    while state.has_pending():
        e, p, _, d, is_seed = state.queue.pop()
        if state.visited[p] or (is_seed and state.assigned[p]):
            continue
        break
    else:
        return False
    state.visited[p] = True
    state.visit_step[p] = state.step
    state.step += 1
    state.n_visits += 1
    y, x = divmod(p, w)
    for ox, oy in NEIGHBOURS:
        xn, yn = x + ox, y + oy
        if not (0 <= xn < w and 0 <= yn < h):
            continue
        q = yn * w + xn
        if state.assigned[q] or not ctx.growable[yn, xn]:
            continue
        dq, tq, eq, ne = K.best_candidate(kd, cfg, xn, yn, d, state._wbuf, s)
        state.n_evals += ne
        if ne > 0 and eq < state.T:
            state.assigned[q] = True
            state.d[q] = dq
            state.t[q] = tq
            state.energy[q] = eq
            state.parent[q] = p
            state.parent_d[q] = d
            state.assign_step[q] = state.step
            state.step += 1
            if not state.visited[q]:
                state.push(eq, q, dq, False)
    return True


def grow_stepwise(prior: SparsePrior, ctx: EnergyContext, queue: str = "heap", **kw) -> GrowResult:
    st = seed(prior, ctx, queue=queue, **kw)
    while expand(st, ctx):
        pass
    return st.result()


def wta_baseline(ctx: EnergyContext, d_range=None):
    """Independent per-pixel minimiser of the local energy over the full range.

    Returns (field, d, t, energy); infeasible pixels are invalid.
    """
    cfg = ctx.kernel_cfg(d_range=d_range)
    d, t, e, valid = K.wta_kernel(ctx.kernel_data(), cfg)
    return DisparityField(np.where(valid, d + t, 0.0), valid), d, t, e


def _streak_fill(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = values.copy()
    h, w = values.shape
    idx = np.arange(w)
    rows_ok = valid.any(axis=1)
    for y in range(h):
        ok = valid[y]
        if not rows_ok[y] or ok.all():
            continue
        row = values[y]
        left = np.maximum.accumulate(np.where(ok, idx, -1))
        right = np.minimum.accumulate(np.where(ok, idx, w)[::-1])[::-1]
        lv = np.where(left >= 0, row[np.clip(left, 0, None)], np.inf)
        rv = np.where(right < w, row[np.clip(right, None, w - 1)], np.inf)
        out[y, ~ok] = np.minimum(lv, rv)[~ok]
    if not rows_ok.all():
        good = np.flatnonzero(rows_ok)
        for y in np.flatnonzero(~rows_ok):
            out[y] = out[good[np.argmin(np.abs(good - y))]]
    return out


def post_fill(field: DisparityField, ctx: EnergyContext, max_gap_fraction: float = 0.005,
              color=None) -> DisparityField:
    """Fill holes: small ones with the joint upsampling filter, the rest by streaks."""
    from .initialization import UpsampleConfig, _guide

    if field.valid.all():
        return field.copy()
    if not field.valid.any():
        warnings.warn("no valid disparity to fill from; returning input", FillWarning)
        return field.copy()
    values = np.where(field.valid, field.values, 0.0)
    valid = field.valid.copy()
    labels, n = ndimage.label(~valid)
    if n:
        sizes = np.bincount(labels.ravel())
        small = sizes <= max_gap_fraction * valid.size
        small[0] = False
        target = small[labels]
        ty, tx = np.nonzero(target)
        if len(tx):
            cfg = UpsampleConfig.from_params(ctx.params)
            guide = _guide(ctx.left, color)
            est, wsum, ssum = K.fill_gather(
                guide, np.ascontiguousarray(values), np.ascontiguousarray(valid),
                tx.astype(np.int64), ty.astype(np.int64), int(cfg.radius),
                float(cfg.sigma_s), float(cfg.gamma_c),
            )
            ok = wsum > 0
            values[ty[ok], tx[ok]] = est[ok]
            valid[ty[ok], tx[ok]] = True
    values = _streak_fill(values, valid)
    return DisparityField(values, np.ones_like(valid))
