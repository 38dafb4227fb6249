"""Projection of scatter point clouds onto the radar slant-range plane.

The image keeps the cloud's geometry echo: the horizontal axis is the
LOS-frame x coordinate (cross-range), the vertical axis the signed
projection of the world point onto the LOS direction (range), with near
range at the top of the image. Intensities are splatted bilinearly so
sum-mode total pixel mass equals the total in-bounds point intensity;
the window auto-fits the point extent plus a 5% margin unless an
explicit extent is supplied. The extent endpoints align with the outer
pixel centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from .errors import ConfigError
from .geometry import boresight, radar_rotation
from .scatter import PointCloud

FloatArray = NDArray[np.float64]

WINDOW_MARGIN = 0.05
_DEGENERATE_HALF_SPAN = 0.5


@dataclass(frozen=True)
class IntensityMap:
    pixels: FloatArray            # (H, W), >= 0, finite
    extent: tuple[float, float, float, float]   # (cross_min, cross_max, range_min, range_max)
    azimuth_deg: float
    depression_deg: float

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


def slant_coords(cloud: PointCloud) -> tuple[FloatArray, FloatArray]:
    """(cross-range, range) coordinates of every point, using the cloud's geometry echo."""
    rotation = radar_rotation(cloud.azimuth_deg, cloud.depression_deg)
    los = boresight(cloud.azimuth_deg, cloud.depression_deg)
    cross = cloud.positions @ rotation[0]
    rng_coord = cloud.positions @ los
    return cross, rng_coord


def _fit_extent(cross: FloatArray, rng_coord: FloatArray) -> tuple[float, float, float, float]:
    def padded(lo: float, hi: float) -> tuple[float, float]:
        span = hi - lo
        if span <= 0.0:
            return lo - _DEGENERATE_HALF_SPAN, hi + _DEGENERATE_HALF_SPAN
        return lo - WINDOW_MARGIN * span, hi + WINDOW_MARGIN * span

    c_lo, c_hi = padded(float(cross.min()), float(cross.max()))
    r_lo, r_hi = padded(float(rng_coord.min()), float(rng_coord.max()))
    return c_lo, c_hi, r_lo, r_hi


def project(cloud: PointCloud, width: int, height: int, mode: str = "sum",
            log_compress: bool = False,
            extent: tuple[float, float, float, float] | None = None) -> IntensityMap:
    """Rasterize the cloud into a (height, width) intensity map.

    mode="sum" accumulates bilinear contributions (conserves total
    intensity); mode="max" keeps the per-pixel maximum of the weighted
    contributions. With log_compress the result is log(1 + x) compressed
    and max-normalized to [0, 1].
    """
    if width < 1 or height < 1:
        raise ConfigError("width and height must be >= 1")
    if mode not in ("sum", "max"):
        raise ConfigError(f"mode must be 'sum' or 'max', got {mode!r}")

    pixels = np.zeros((height, width))
    if len(cloud) > 0:
        cross, rng_coord = slant_coords(cloud)
        if extent is None:
            extent = _fit_extent(cross, rng_coord)
        c_lo, c_hi, r_lo, r_hi = extent
        if c_hi <= c_lo or r_hi <= r_lo:
            raise ConfigError("extent must be strictly positive in both axes")

        # Map the extent onto the pixel-center lattice; near range at the top row.
        fx = (cross - c_lo) / (c_hi - c_lo) * (width - 1) if width > 1 else np.zeros_like(cross)
        fy = (rng_coord - r_lo) / (r_hi - r_lo) * (height - 1) if height > 1 else np.zeros_like(rng_coord)

        inside = (fx >= 0.0) & (fx <= width - 1) & (fy >= 0.0) & (fy <= height - 1)
        fx = fx[inside]
        fy = fy[inside]
        weights = cloud.intensities[inside]

        x0 = np.floor(fx).astype(np.int64)
        y0 = np.floor(fy).astype(np.int64)
        x0 = np.minimum(x0, width - 2) if width > 1 else x0
        y0 = np.minimum(y0, height - 2) if height > 1 else y0
        ax = fx - x0
        ay = fy - y0

        corners = (
            (y0, x0, (1.0 - ax) * (1.0 - ay)),
            (y0, np.minimum(x0 + 1, width - 1), ax * (1.0 - ay)),
            (np.minimum(y0 + 1, height - 1), x0, (1.0 - ax) * ay),
            (np.minimum(y0 + 1, height - 1), np.minimum(x0 + 1, width - 1), ax * ay),
        )
        if mode == "sum":
            for yy, xx, w in corners:
                np.add.at(pixels, (yy, xx), weights * w)
        else:
            for yy, xx, w in corners:
                np.maximum.at(pixels, (yy, xx), weights * w)
    elif extent is None:
        extent = (-_DEGENERATE_HALF_SPAN, _DEGENERATE_HALF_SPAN,
                  -_DEGENERATE_HALF_SPAN, _DEGENERATE_HALF_SPAN)

    if log_compress:
        pixels = np.log1p(pixels)
        peak = pixels.max()
        if peak > 0.0:
            pixels = pixels / peak

    return IntensityMap(
        pixels=pixels,
        extent=tuple(float(v) for v in extent),
        azimuth_deg=cloud.azimuth_deg,
        depression_deg=cloud.depression_deg,
    )


def _quantize(pixels: FloatArray, max_value: int) -> np.ndarray:
    peak = float(pixels.max())
    scale = peak if peak > 0.0 else 1.0
    # round-half-up quantization
    return np.floor(pixels / scale * max_value + 0.5).astype(np.uint32)


def write_image(imap: IntensityMap, path, bit_depth: int = 8) -> None:
    """Write the map as grayscale PGM (P5) or PNG, 8- or 16-bit, deterministic bytes."""
    if bit_depth not in (8, 16):
        raise ConfigError("bit_depth must be 8 or 16")
    p = Path(path)
    suffix = p.suffix.lower()
    max_value = (1 << bit_depth) - 1
    q = _quantize(imap.pixels, max_value)
    if suffix == ".pgm":
        header = f"P5\n{imap.width} {imap.height}\n{max_value}\n".encode("ascii")
        if bit_depth == 8:
            body = q.astype(np.uint8).tobytes()
        else:
            body = q.astype(">u2").tobytes()  # PGM 16-bit is big-endian
        p.write_bytes(header + body)
    elif suffix == ".png":
        if bit_depth == 8:
            Image.fromarray(q.astype(np.uint8)).save(p, format="PNG")
        else:
            Image.fromarray(q.astype(np.uint16)).save(p, format="PNG")
    else:
        raise ConfigError(f"unsupported image format {suffix!r} (expected .pgm or .png)")
