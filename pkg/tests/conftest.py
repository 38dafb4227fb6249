from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from sargeo import (MonteCarloSpec, ScatterParams, ViewGeometry, build_scene,
                    flag_structural_faces, load_mesh, mesh_from_arrays, simulate)

ASSETS = Path(__file__).resolve().parent.parent / "assets"


@pytest.fixture(scope="session")
def cube_mesh():
    return load_mesh(ASSETS / "cube.obj")


@pytest.fixture(scope="session")
def aircraft_mesh():
    return flag_structural_faces(load_mesh(ASSETS / "aircraft.obj"), 15.0)


def make_corner_mesh(size: float = 2.0, half_depth: float = 1.0):
    """Two perpendicular plates sharing the z-axis edge (a dihedral corner).

    Plate A lies in the x=0 plane (spanning +y), plate B in the y=0 plane
    (spanning +x); the interior of the corner is the x>0, y>0 quadrant.
    """
    v = np.array([
        [0.0, 0.0, -half_depth],
        [0.0, 0.0, half_depth],
        [0.0, size, -half_depth],
        [0.0, size, half_depth],
        [size, 0.0, -half_depth],
        [size, 0.0, half_depth],
    ])
    f = np.array([
        [0, 2, 3], [0, 3, 1],   # plate A (x = 0)
        [0, 1, 5], [0, 5, 4],   # plate B (y = 0)
    ])
    return flag_structural_faces(mesh_from_arrays(v, f), 15.0)


def make_plate(center, normal_axis: int, half_u: float, half_v: float, two_sided_order=False):
    """Axis-aligned rectangular plate (2 triangles) perpendicular to normal_axis."""
    center = np.asarray(center, dtype=float)
    axes = [a for a in range(3) if a != normal_axis]
    du = np.zeros(3)
    dv = np.zeros(3)
    du[axes[0]] = half_u
    dv[axes[1]] = half_v
    corners = np.array([center - du - dv, center + du - dv, center + du + dv, center - du + dv])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return corners, faces


def random_soup(n_faces: int, seed: int, scale: float = 0.15):
    """Random triangle soup inside [-1, 1]^3 (hostile, interpenetrating geometry)."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    anchors = gen.uniform(-1.0, 1.0, size=(n_faces, 3))
    offsets = gen.uniform(-scale, scale, size=(n_faces, 2, 3))
    tri = np.concatenate([anchors[:, None, :], anchors[:, None, :] + offsets], axis=1)
    verts = tri.reshape(-1, 3)
    faces = np.arange(3 * n_faces).reshape(n_faces, 3)
    return mesh_from_arrays(verts, faces)


def random_unit_vectors(n: int, seed: int):
    gen = np.random.Generator(np.random.Philox(key=seed))
    v = gen.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.fixture(scope="session")
def warmed_kernels(cube_mesh):
    """Compile the numba kernels once so timed tests measure steady-state speed."""
    scene = build_scene(cube_mesh, ScatterParams(k_max=2))
    geom = ViewGeometry(10.0, 30.0, 10.0, grid_step_deg=5.0)
    simulate(scene, geom, MonteCarloSpec(count=64, sigma=0.02, seed=1), workers=1)
    return True
