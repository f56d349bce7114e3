"""Subpixel-enhanced correlation criteria and their closed-form maximisers.

Two criteria are provided, both functions of a subpixel shift ``t`` obtained
by linearising the right window, ``u_R(x+d+t) ~ u_R + t * du_R``:

* ECC, the Pearson coefficient of ``u_L`` and ``u_R + t du_R``.
* EMCC, the Moravec coefficient with the shift split symmetrically, i.e.
  ``u_L - t/2 du_L`` against ``u_R + t/2 du_R``.

The EMCC is a ratio of two quadratics in ``t``; such a ratio has at most one
interior maximum, found by ``maximize_rational_quadratic``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import EPS, DegenerateWindow, window_patch, x_gradient

T_LO = -0.99
T_HI = 0.99


@dataclass(frozen=True)
class TaylorPatchPair:
    uL: np.ndarray
    uR: np.ndarray
    duL: np.ndarray
    duR: np.ndarray

    def __post_init__(self):
        n = len(self.uL)
        if not (len(self.uR) == len(self.duL) == len(self.duR) == n):
            raise ValueError("pair vectors differ in length")

    def sums(self) -> np.ndarray:
        return K.vector_sums(
            np.asarray(self.uL, np.float64), np.asarray(self.uR, np.float64),
            np.asarray(self.duL, np.float64), np.asarray(self.duR, np.float64),
        )

    def scaled(self, k: float) -> "TaylorPatchPair":
        return TaylorPatchPair(k * self.uL, k * self.uR, k * self.duL, k * self.duR)


@dataclass(frozen=True)
class RationalQuadratic:
    a0: float
    a1: float
    a2: float
    b0: float
    b1: float
    b2: float

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        return (self.a0 + t * (self.a1 + t * self.a2)) / (self.b0 + t * (self.b1 + t * self.b2))

    @property
    def numerator(self):
        return self.a0, self.a1, self.a2

    @property
    def denominator(self):
        return self.b0, self.b1, self.b2

    def derivative_numerator(self) -> tuple[float, float, float]:
        """Coefficients (c0, c1, c2) with f'(t) = C(t) / B(t)^2."""
        return K.rq_derivative_coeffs(self.a0, self.a1, self.a2, self.b0, self.b1, self.b2)

    def stationary_points(self) -> tuple[float, float]:
        """(maximiser, minimiser) roots of C(t); NaN where a root is absent."""
        return K.rq_stationary(*self.derivative_numerator())

    def second_derivative(self, t: float) -> float:
        c0, c1, c2 = self.derivative_numerator()
        B = self.b0 + t * (self.b1 + t * self.b2)
        dB = self.b1 + 2 * self.b2 * t
        C = c0 + t * (c1 + t * c2)
        dC = c1 + 2 * c2 * t
        return (dC * B - 2 * dB * C) / B**3


def make_pair(left, right, x, y, d, half, gleft=None, gright=None) -> TaylorPatchPair:
    """Zero-mean windows at left (x, y) and right (x + d, y), with x-derivatives."""
    if gleft is None:
        gleft = x_gradient(left)
    if gright is None:
        gright = x_gradient(right)
    def zm(img, cx):
        v = window_patch(img, cx, y, half).ravel().astype(np.float64)
        return v - v.mean()
    return TaylorPatchPair(zm(left, x), zm(right, x + d), zm(gleft, x), zm(gright, x + d))


def ecc(pair: TaylorPatchPair, t: float) -> float:
    nl = np.linalg.norm(pair.uL)
    shifted = pair.uR + t * pair.duR
    nr = np.linalg.norm(shifted)
    if nl < EPS or nr < EPS:
        raise DegenerateWindow("textureless window in ECC")
    return float(pair.uL @ shifted / (nl * nr))


def ecc_maximize(pair: TaylorPatchPair, lo: float = T_LO, hi: float = T_HI):
    """(t*, ECC(t*)) over [lo, hi]."""
    s = pair.sums()
    if K.ecc_degenerate(s, lo, hi, True):
        raise DegenerateWindow("textureless window in ECC")
    t, v = K.ecc_maximize_sums(s, lo, hi)
    return float(t), float(v)


def emcc(pair: TaylorPatchPair, t: float) -> float:
    a = pair.uL - 0.5 * t * pair.duL
    b = pair.uR + 0.5 * t * pair.duR
    den = a @ a + b @ b
    if den < EPS:
        raise DegenerateWindow("textureless window in EMCC")
    return float(2.0 * (a @ b) / den)


def emcc_as_rational(pair: TaylorPatchPair) -> RationalQuadratic:
    return RationalQuadratic(*K.emcc_coeffs(pair.sums()))


def maximize_rational_quadratic(f: RationalQuadratic, interval=(T_LO, T_HI)):
    lo, hi = interval
    t, v = K.rq_maximize(f.a0, f.a1, f.a2, f.b0, f.b1, f.b2, float(lo), float(hi))
    return float(t), float(v)


def emcc_maximize(pair: TaylorPatchPair, lo: float = T_LO, hi: float = T_HI):
    s = pair.sums()
    if K.emcc_degenerate(s, lo, hi, True):
        raise DegenerateWindow("textureless window in EMCC")
    return maximize_rational_quadratic(emcc_as_rational(pair), (lo, hi))


def apply_weights(pair: TaylorPatchPair, w) -> TaylorPatchPair:
    """Element-wise weighting of all four vectors; no re-centering afterwards."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if len(w) != len(pair.uL):
        raise ValueError(f"weights have length {len(w)}, pair has {len(pair.uL)}")
    return TaylorPatchPair(w * pair.uL, w * pair.uR, w * pair.duL, w * pair.duR)
