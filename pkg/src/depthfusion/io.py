"""File formats: PFM disparities, PGM/PNG images, sparse prior CSV."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .core import DisparityField, SparsePrior, to_gray


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array (top row first)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").rstrip()
        if header == "PF":
            channels = 3
        elif header == "Pf":
            channels = 1
        else:
            raise ValueError(f"{path}: not a PFM file")
        dims = fh.readline().decode("ascii")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"{path}: malformed PFM header")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(fh.readline().decode("ascii").rstrip())
        endian = "<" if scale < 0 else ">"
        data = np.fromfile(fh, endian + "f4")
    shape = (height, width, 3) if channels == 3 else (height, width)
    data = np.reshape(data, shape)
    return np.flipud(data).astype(np.float32)


def write_pfm(path, values: np.ndarray):
    """Write a single-channel little-endian PFM (scale -1.0)."""
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("only single-channel PFM output is supported")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(arr).tobytes())


def write_disparity(path, field: DisparityField, invalid=np.inf):
    """PFM with invalid pixels stored as ``invalid`` (inf by default)."""
    write_pfm(path, np.where(field.valid, field.values, invalid))


def read_disparity(path) -> DisparityField:
    return DisparityField.from_array(read_pfm(path).astype(np.float64))


def read_image(path, keep_color: bool = False):
    """Gray image in [0,1]; with ``keep_color`` also the RGB planes (0-255)."""
    with Image.open(path) as im:
        arr = np.array(im)
    gray = to_gray(arr)
    if not keep_color:
        return gray
    if arr.ndim == 3:
        color = arr[..., :3].astype(np.float64)
        if arr.dtype == np.uint16:
            color /= 257.0
    else:
        color = None
    return gray, color


def write_image(path, img: np.ndarray):
    """Save a float image in [0,1] as 8-bit (PNG or PGM, by extension)."""
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.array(im.convert("L"))
    return arr > 127


def write_mask(path, mask: np.ndarray):
    Image.fromarray((np.asarray(mask, bool) * 255).astype(np.uint8)).save(path)


def disparity_to_png(path, field: DisparityField, d_min: float, d_max: float,
                     depth_occ: np.ndarray | None = None):
    """Linear gray scale over [d_min, d_max]; unmatched white, depth-occluded black."""
    vals = (field.values - d_min) / float(d_max - d_min)
    img = np.clip(np.rint(vals * 254.0), 0, 254).astype(np.uint8)
    img[~field.valid] = 255
    if depth_occ is not None:
        img[np.asarray(depth_occ, bool) & ~field.valid] = 0
    Image.fromarray(img).save(path)


def masks_overlay(path, left: np.ndarray, stereo_occ, depth_occ):
    """Left image with stereo occlusions in red and depth occlusions in blue."""
    g = np.clip(np.rint(np.asarray(left) * 255.0), 0, 255).astype(np.uint8)
    rgb = np.stack([g, g, g], axis=-1)
    rgb[np.asarray(stereo_occ, bool)] = (255, 0, 0)
    rgb[np.asarray(depth_occ, bool)] = (0, 0, 255)
    rgb[np.asarray(stereo_occ, bool) & np.asarray(depth_occ, bool)] = (255, 0, 255)
    Image.fromarray(rgb).save(path)


def read_prior_csv(path) -> SparsePrior:
    """Lines ``x,y,d``; blank lines, ``#`` comments and a header row are skipped."""
    xs, ys, ds = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected x,y,d")
            try:
                x, y, d = int(float(parts[0])), int(float(parts[1])), float(parts[2])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: cannot parse {line!r}") from None
            xs.append(x)
            ys.append(y)
            ds.append(d)
    return SparsePrior(xs, ys, ds)


def write_prior_csv(path, prior: SparsePrior):
    with open(path, "w") as fh:
        fh.write("x,y,d\n")
        for x, y, d in zip(prior.x, prior.y, prior.d):
            fh.write(f"{x},{y},{d:.6f}\n")


def read_prior(path) -> SparsePrior:
    """CSV or PFM (non-finite entries mark missing samples)."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        vals = read_pfm(path).astype(np.float64)
        return SparsePrior.from_field(vals, np.isfinite(vals))
    return read_prior_csv(path)
