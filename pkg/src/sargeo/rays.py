"""Two-level ray generation: regular angular grid plus Monte Carlo beam.

Both levels are generated in the sensor's beam frame (see
`geometry.beam_frame`) and rotated to world: the grid sweeps a regular
(alpha, beta) window sized to the target's angular extent, and the Monte
Carlo beam perturbs the boresight with per-component Gaussian noise.
Randomness is keyed by (seed, ray ordinal), so the sequence is
reproducible and independent of how the work is partitioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import rng
from .errors import GeometryError
from .geometry import ViewGeometry, beam_frame, boresight, sensor_position
from .mesh import TriangleMesh

FloatArray = NDArray[np.float64]

AUTO_WINDOW_MARGIN = 1.10

DEFAULT_MC_COUNT = 200_000
DEFAULT_MC_SIGMA = 0.05  # radians


@dataclass(frozen=True)
class Ray:
    origin: FloatArray
    direction: FloatArray
    ray_id: int


@dataclass(frozen=True)
class GridSpec:
    alpha_start_deg: float
    alpha_end_deg: float
    beta_start_deg: float
    beta_end_deg: float
    step_deg: float

    def __post_init__(self):
        if self.step_deg <= 0.0:
            raise GeometryError("grid step must be > 0")
        if self.alpha_end_deg < self.alpha_start_deg or self.beta_end_deg < self.beta_start_deg:
            raise GeometryError("grid window end must be >= start on both axes")

    def alphas(self) -> FloatArray:
        n = int(round((self.alpha_end_deg - self.alpha_start_deg) / self.step_deg)) + 1
        return self.alpha_start_deg + self.step_deg * np.arange(n)

    def betas(self) -> FloatArray:
        n = int(round((self.beta_end_deg - self.beta_start_deg) / self.step_deg)) + 1
        return self.beta_start_deg + self.step_deg * np.arange(n)


@dataclass(frozen=True)
class MonteCarloSpec:
    count: int = DEFAULT_MC_COUNT
    sigma: float = DEFAULT_MC_SIGMA
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise GeometryError("Monte Carlo ray count must be >= 1")
        if not (np.isfinite(self.sigma) and self.sigma >= 0.0):
            raise GeometryError("sigma must be finite and >= 0")


@dataclass(frozen=True)
class RayBundle:
    """A batch of rays stored as arrays; indexing yields individual Ray views."""

    origins: FloatArray     # (N, 3)
    directions: FloatArray  # (N, 3) unit
    ids: NDArray[np.int64]  # (N,)

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __getitem__(self, i: int) -> Ray:
        return Ray(self.origins[i], self.directions[i], int(self.ids[i]))


def beam_direction(alpha_deg: float, beta_deg: float) -> FloatArray:
    """Beam-local direction (cos b cos a, cos b sin a, sin b) for grid angles in degrees."""
    a = np.radians(alpha_deg)
    b = np.radians(beta_deg)
    return np.array([np.cos(b) * np.cos(a), np.cos(b) * np.sin(a), np.sin(b)])


def auto_grid_spec(geom: ViewGeometry, mesh: TriangleMesh) -> GridSpec:
    """Symmetric (alpha, beta) window covering the bounding sphere plus a 10% margin."""
    ratio = mesh.bounding_radius / geom.range
    if ratio >= 1.0:
        raise GeometryError(
            "sensor inside the target bounding sphere: "
            f"range {geom.range} <= bounding radius {mesh.bounding_radius}"
        )
    half_deg = math.degrees(math.asin(ratio)) * AUTO_WINDOW_MARGIN
    if half_deg >= 90.0:
        raise GeometryError("required angular window reaches 180 degrees; increase the range")
    step = geom.grid_step_deg
    # Exact step, window expanded to the next step multiple (epsilon guards
    # the ceil against last-ulp jitter in the bounding radius).
    n = int(math.ceil(2.0 * half_deg / step - 1e-9)) + 1
    span = (n - 1) * step
    return GridSpec(
        alpha_start_deg=-span / 2.0,
        alpha_end_deg=span / 2.0,
        beta_start_deg=-span / 2.0,
        beta_end_deg=span / 2.0,
        step_deg=step,
    )


def grid_rays(geom: ViewGeometry, mesh: TriangleMesh, spec: GridSpec | None = None) -> RayBundle:
    """Regular-grid beam covering the target; alpha varies fastest, ids run row-major."""
    if spec is None:
        spec = auto_grid_spec(geom, mesh)
    frame = beam_frame(geom.azimuth_deg, geom.depression_deg)
    origin = sensor_position(geom, mesh.centroid)

    alphas = np.radians(spec.alphas())
    betas = np.radians(spec.betas())
    bb, aa = np.meshgrid(betas, alphas, indexing="ij")
    aa = aa.ravel()
    bb = bb.ravel()
    local = np.column_stack([
        np.cos(bb) * np.cos(aa),
        np.cos(bb) * np.sin(aa),
        np.sin(bb),
    ])
    directions = local @ frame.T
    n = len(aa)
    return RayBundle(
        origins=np.broadcast_to(origin, (n, 3)).copy(),
        directions=directions,
        ids=np.arange(n, dtype=np.int64),
    )


def monte_carlo_rays(geom: ViewGeometry, mesh: TriangleMesh, spec: MonteCarloSpec) -> RayBundle:
    """Gaussian-perturbed beam aimed at the mesh centroid.

    The perturbation is drawn in the beam frame, where the boresight is
    exactly (1, 0, 0); sample i depends only on (seed, i).
    """
    frame = beam_frame(geom.azimuth_deg, geom.depression_deg)
    origin = sensor_position(geom, mesh.centroid)
    ids = np.arange(spec.count, dtype=np.int64)

    local = np.empty((spec.count, 3))
    local[:, 0] = 1.0
    local[:, 1] = 0.0
    local[:, 2] = 0.0
    if spec.sigma > 0.0:
        for lane in range(3):
            noise = rng.gaussian(spec.seed, rng.STREAM_MC_DIRECTION, ids, lane)
            local[:, lane] += spec.sigma * noise
        local /= np.linalg.norm(local, axis=1, keepdims=True)
        directions = local @ frame.T
    else:
        directions = np.tile(boresight(geom.azimuth_deg, geom.depression_deg), (spec.count, 1))
    return RayBundle(
        origins=np.broadcast_to(origin, (spec.count, 3)).copy(),
        directions=directions,
        ids=ids,
    )
