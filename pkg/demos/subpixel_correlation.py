# coding: utf-8

# # Subpixel correlation in closed form
#
# Both correlation criteria in the package depend on a subpixel offset t through a
# first-order Taylor expansion of the image intensities. That turns the search for
# the best t into maximising a ratio of low-order polynomials, which has a closed form.
# This script checks the closed form against brute force and then recovers a known shift.

import numpy as np

from depthfusion.correlation import (
    TaylorPatchPair,
    ecc,
    ecc_maximize,
    emcc,
    emcc_as_rational,
    emcc_maximize,
    make_pair,
)

rng = np.random.default_rng(0)

# ## One random window pair
#
# A TaylorPatchPair holds four vectors: left and right intensities and their x-gradients.

pair = TaylorPatchPair(*rng.uniform(0, 1, (4, 81)))

t_emcc, c_emcc = emcc_maximize(pair)
t_ecc, c_ecc = ecc_maximize(pair)
print(f"EMCC: t* = {t_emcc:+.5f}, C(t*) = {c_emcc:.6f}, C(0) = {emcc(pair, 0.0):.6f}")
print(f"ECC : t* = {t_ecc:+.5f}, C(t*) = {c_ecc:.6f}, C(0) = {ecc(pair, 0.0):.6f}")

# The EMCC criterion is a rational quadratic A(t)/B(t):

f = emcc_as_rational(pair)
print("numerator coefficients  ", np.round([f.a0, f.a1, f.a2], 4))
print("denominator coefficients", np.round([f.b0, f.b1, f.b2], 4))

# ## Against a dense grid

ts = np.linspace(-0.99, 0.99, 19801)
grid = np.array([emcc(pair, t) for t in ts])
print(f"grid argmax t = {ts[grid.argmax()]:+.5f}, value {grid.max():.6f}")

# ## Recovering a known shift
#
# Left pixel x matches right pixel x + d + t. Build a smooth 1-D signal, shift the
# right view by 0.3 px and ask for t at integer disparity 0.

x = np.arange(120, dtype=np.float64)


def signal(v):
    return 0.5 + 0.2 * np.sin(v / 3.0) + 0.1 * np.cos(v / 7.0)


left = np.tile(signal(x), (15, 1))
for true_t in (0.3, -0.45, 0.8):
    right = np.tile(signal(x - true_t), (15, 1))
    p = make_pair(left, right, 60, 7, 0, 4)
    print(f"true shift {true_t:+.2f}: ECC t* = {ecc_maximize(p)[0]:+.3f}, "
          f"EMCC t* = {emcc_maximize(p)[0]:+.3f}")

# The linearisation is only first order, so the estimate degrades as |t| grows; that is
# why the growing step only ever asks for the residual below one pixel.
