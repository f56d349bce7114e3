"""Shared types: images, sparse priors, disparity fields, masks and parameters.

Images are plain 2-D ``float64`` numpy arrays in ``[0, 1]`` indexed ``[y, x]``.
Disparities follow the convention that left pixel ``(x, y)`` matches right
position ``(x + d + t, y)``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class FusionError(Exception):
    """Base class for errors raised by this package."""


class DegenerateWindow(FusionError):
    """A correlation window has (near) zero variance."""


class EmptySeedSet(FusionError):
    """No usable seed survives filtering."""


class InfeasiblePixel(FusionError):
    """The pixel lies in both occlusion sets; no energy is defined there."""


class NoValidPixels(FusionError):
    """A metric was asked to average over an empty pixel set."""


class ConfigError(FusionError, ValueError):
    """Invalid parameter value or unparsable configuration."""


# norms / denominators below this are treated as textureless
EPS = 1e-8


@dataclass(frozen=True)
class FusionParams:
    r: int = 1
    T: float = 0.5
    lam: float = 0.01
    gamma_d: float = 5.0
    gamma_c: float = 10.0
    e_c: float = 0.2
    upsample_radius: int = 20
    window_half: int = 4
    entropy_subpixel_threshold: float = 0.4
    d_min: int = 0
    d_max: int = 64
    criterion: str = "ecc"
    # ablation switches; all on reproduces the full method
    subpixel: bool = True
    aggregation: bool = True
    fusion: str = "adaptive"  # adaptive | fixed | stereo
    crosscheck_tol: float = 1.0

    def __post_init__(self):
        if self.r < 1:
            raise ConfigError("r must be ≥1")
        if not self.T > 0:
            raise ConfigError("T must be >0")
        if self.lam < 0:
            raise ConfigError("lam must be ≥0")
        if not self.gamma_d > 0:
            raise ConfigError("gamma_d must be >0")
        if not self.gamma_c > 0:
            raise ConfigError("gamma_c must be >0")
        if not 0 <= self.e_c <= 1:
            raise ConfigError("e_c must be in [0,1]")
        if self.upsample_radius < 1:
            raise ConfigError("upsample_radius must be ≥1")
        if self.window_half < 1:
            raise ConfigError("window must be at least 3x3")
        if not 0 <= self.entropy_subpixel_threshold <= 1:
            raise ConfigError("entropy_subpixel_threshold must be in [0,1]")
        if not self.d_min < self.d_max:
            raise ConfigError("d_min must be < d_max")
        if self.criterion not in ("ecc", "emcc"):
            raise ConfigError("criterion must be ecc or emcc")
        if self.fusion not in ("adaptive", "fixed", "stereo"):
            raise ConfigError("fusion must be adaptive, fixed or stereo")

    @property
    def window(self) -> int:
        return 2 * self.window_half + 1

    def replace(self, **changes) -> "FusionParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_ALIASES = {
    "lambda": "lam",
    "gamma-d": "gamma_d",
    "gamma-c": "gamma_c",
    "e-c": "e_c",
    "radius": "upsample_radius",
    "upsample-radius": "upsample_radius",
    "window-half": "window_half",
    "entropy_threshold": "entropy_subpixel_threshold",
    "t": "T",
}


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(FusionParams)}[name]
    raw = raw.strip()
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw.lower()
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


def params_from_mapping(values: dict, base: FusionParams | None = None) -> FusionParams:
    """Build params from loose key/value pairs (config keys or CLI names)."""
    known = {f.name for f in dataclasses.fields(FusionParams)}
    changes = {}
    for key, raw in values.items():
        k = key.strip()
        k = _ALIASES.get(k, _ALIASES.get(k.lower(), k))
        if k == "window":
            try:
                size = int(raw)
            except ValueError:
                raise ConfigError(f"window: cannot parse {raw!r}") from None
            if size < 3 or size % 2 == 0:
                raise ConfigError("window must be an odd size ≥3")
            changes["window_half"] = size // 2
            continue
        if k == "range":
            try:
                lo, hi = str(raw).split(":")
                changes["d_min"], changes["d_max"] = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"range must look like dmin:dmax, got {raw!r}") from None
            continue
        if k not in known:
            raise ConfigError(f"unknown parameter {key!r}")
        changes[k] = raw if not isinstance(raw, str) else _coerce(k, raw)
    base = base or FusionParams()
    return dataclasses.replace(base, **changes)


def load_params(config_source: str = "") -> FusionParams:
    """Parse flat ``key=value`` text; unspecified keys keep their defaults."""
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",)
    )
    parser.optionxform = str
    try:
        parser.read_string("[params]\n" + config_source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return params_from_mapping(dict(parser["params"]))


@dataclass
class SparsePrior:
    """Seed pixels with prior disparities in the left-image frame."""

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64).ravel()
        self.y = np.asarray(self.y, dtype=np.int64).ravel()
        self.d = np.asarray(self.d, dtype=np.float64).ravel()
        if not (len(self.x) == len(self.y) == len(self.d)):
            raise ValueError("x, y, d must have equal length")

    def __len__(self):
        return len(self.d)

    def validate(self, shape, d_min=None, d_max=None):
        h, w = shape
        if np.any((self.x < 0) | (self.x >= w) | (self.y < 0) | (self.y >= h)):
            raise ValueError("prior position outside image bounds")
        flat = self.y * w + self.x
        if len(np.unique(flat)) != len(flat):
            raise ValueError("duplicate prior positions")
        if d_min is not None and np.any(self.d < d_min):
            raise ValueError("prior disparity below d_min")
        if d_max is not None and np.any(self.d > d_max):
            raise ValueError("prior disparity above d_max")

    def subset(self, keep: np.ndarray) -> "SparsePrior":
        return SparsePrior(self.x[keep], self.y[keep], self.d[keep])

    def clip(self, d_min, d_max) -> "SparsePrior":
        return SparsePrior(self.x, self.y, np.clip(self.d, d_min, d_max))

    @classmethod
    def from_field(cls, values: np.ndarray, valid: np.ndarray | None = None):
        if valid is None:
            valid = np.isfinite(values)
        y, x = np.nonzero(valid)
        return cls(x, y, values[y, x])

    def to_image(self, shape):
        vals = np.full(shape, np.nan)
        vals[self.y, self.x] = self.d
        return vals


class MetaDisparity(NamedTuple):
    x: int
    y: int
    d: int
    t: float
    energy: float


@dataclass
class DisparityField:
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape:
            raise ValueError("values and valid differ in shape")

    @property
    def shape(self):
        return self.values.shape

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @classmethod
    def from_array(cls, values: np.ndarray) -> "DisparityField":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.isfinite(values))

    @classmethod
    def empty(cls, shape) -> "DisparityField":
        return cls(np.zeros(shape), np.zeros(shape, bool))

    def masked(self) -> np.ndarray:
        """Values with invalid pixels set to NaN."""
        return np.where(self.valid, self.values, np.nan)

    def density(self) -> float:
        return float(self.valid.mean())

    def copy(self) -> "DisparityField":
        return DisparityField(self.values.copy(), self.valid.copy())


@dataclass
class OcclusionMasks:
    stereo_occ: np.ndarray
    depth_occ: np.ndarray

    def __post_init__(self):
        self.stereo_occ = np.asarray(self.stereo_occ, dtype=bool)
        self.depth_occ = np.asarray(self.depth_occ, dtype=bool)
        if self.stereo_occ.shape != self.depth_occ.shape:
            raise ValueError("mask shapes differ")

    @classmethod
    def none(cls, shape) -> "OcclusionMasks":
        return cls(np.zeros(shape, bool), np.zeros(shape, bool))


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luminance in [0,1] from gray or RGB input (uint8/uint16/float)."""
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr / 255.0
    elif arr.dtype == np.uint16:
        arr = arr / 65535.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3:
        arr = arr[..., :3] @ np.array([0.299, 0.587, 0.114])
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite samples")
    return np.ascontiguousarray(arr, dtype=np.float64)


def window_indices(center: int, half: int, size: int) -> np.ndarray:
    return np.clip(np.arange(center - half, center + half + 1), 0, size - 1)


def window_patch(img: np.ndarray, x: int, y: int, half: int) -> np.ndarray:
    """(2h+1)x(2h+1) patch around (x, y) with replicated borders."""
    h, w = img.shape
    return img[np.ix_(window_indices(y, half, h), window_indices(x, half, w))]


def window_vector(img: np.ndarray, center, half: int) -> np.ndarray:
    """Zero-mean, row-major vectorised window around ``center = (x, y)``."""
    x, y = center
    v = window_patch(img, x, y, half).ravel().astype(np.float64)
    return v - v.mean()


def x_gradient(img: np.ndarray) -> np.ndarray:
    """Central difference along x, replicated border."""
    padded = np.pad(img, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (padded[:, 2:] - padded[:, :-2])
