"""Object-centric radar observation geometry.

Conventions (documented, not configurable): the world X axis is the 0
degree azimuth direction and Y is 90 degrees, with azimuth increasing
counter-clockwise; the depression angle measures the line of sight below
horizontal. The sensor sits at

    target_center + R * (cos(az) cos(dep), sin(az) cos(dep), sin(dep))

so the line-of-sight (LOS) unit vector pointing at the target is the
negative of that direction triple. Angles are degrees at every public
interface and radians internally.

`radar_rotation` builds the world-to-LOS rotation

    [ cos(az)          -sin(az)           0        ]
    [ sin(az) cos(dep)  cos(az) cos(dep) -sin(dep) ]
    [ sin(az) sin(dep)  cos(az) sin(dep)  cos(dep) ]

Note that under the sensor placement above this matrix does not map the
LOS vector onto a coordinate axis; downstream consumers (slant
projection) therefore work with the LOS projection explicitly instead of
assuming an axis-aligned LOS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import GeometryError

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class ViewGeometry:
    """One observation: azimuth/depression angles, sensor range, angular grid step."""

    azimuth_deg: float
    depression_deg: float
    range: float
    grid_step_deg: float = 0.2

    def __post_init__(self):
        for name in ("azimuth_deg", "depression_deg", "range", "grid_step_deg"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise GeometryError(f"{name} must be finite, got {v!r}")
        object.__setattr__(self, "azimuth_deg", float(self.azimuth_deg) % 360.0)
        if not 0.0 < self.depression_deg <= 90.0:
            raise GeometryError(
                f"depression_deg must be in (0, 90], got {self.depression_deg}"
            )
        if self.range <= 0.0:
            raise GeometryError(f"range must be > 0, got {self.range}")
        if self.grid_step_deg <= 0.0:
            raise GeometryError(f"grid_step_deg must be > 0, got {self.grid_step_deg}")


def radar_rotation(azimuth_deg: float, depression_deg: float) -> FloatArray:
    """World-to-LOS rotation matrix for the given angles (degrees)."""
    if not (np.isfinite(azimuth_deg) and np.isfinite(depression_deg)):
        raise GeometryError("rotation angles must be finite")
    a = np.radians(azimuth_deg)
    d = np.radians(depression_deg)
    ca, sa = np.cos(a), np.sin(a)
    cd, sd = np.cos(d), np.sin(d)
    return np.array(
        [
            [ca, -sa, 0.0],
            [sa * cd, ca * cd, -sd],
            [sa * sd, ca * sd, cd],
        ]
    )


def sensor_direction(azimuth_deg: float, depression_deg: float) -> FloatArray:
    """Unit vector from the target center toward the sensor."""
    a = np.radians(azimuth_deg)
    d = np.radians(depression_deg)
    return np.array([np.cos(a) * np.cos(d), np.sin(a) * np.cos(d), np.sin(d)])


def sensor_position(geom: ViewGeometry, target_center) -> FloatArray:
    """Sensor location in world coordinates for this geometry."""
    center = np.asarray(target_center, dtype=np.float64)
    return center + geom.range * sensor_direction(geom.azimuth_deg, geom.depression_deg)


def boresight(azimuth_deg: float, depression_deg: float) -> FloatArray:
    """Unit LOS vector pointing from the sensor toward the target center."""
    return -sensor_direction(azimuth_deg, depression_deg)


def beam_frame(azimuth_deg: float, depression_deg: float) -> FloatArray:
    """Orthonormal sensor-local frame as 3x3 columns (boresight, azimuth, elevation).

    Column 0 is the boresight; columns 1 and 2 are the normalized azimuth
    and depression derivatives of the boresight. The frame co-rotates
    exactly with a shared z-rotation of scene and azimuth, which is what
    makes beam-local sampling equivariant under azimuth shifts.
    """
    a = np.radians(azimuth_deg)
    d = np.radians(depression_deg)
    ca, sa = np.cos(a), np.sin(a)
    cd, sd = np.cos(d), np.sin(d)
    b = np.array([-ca * cd, -sa * cd, -sd])
    e_az = np.array([sa, -ca, 0.0])
    e_el = np.array([ca * sd, sa * sd, -cd])
    return np.column_stack([b, e_az, e_el])


def world_to_los(rotation: FloatArray, points) -> FloatArray:
    """Apply the world-to-LOS rotation to one point (3,) or a batch (N, 3)."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1:
        return rotation @ p
    return p @ rotation.T


def los_to_world(rotation: FloatArray, points) -> FloatArray:
    """Inverse of `world_to_los` (the transpose, since the matrix is orthonormal)."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1:
        return rotation.T @ p
    return p @ rotation
