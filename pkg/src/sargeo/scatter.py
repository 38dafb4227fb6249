"""Recursive multi-bounce scattering: pseudo-RCS response, reflection, point cloud.

Each traced ray carries a state (position, direction, energy, cumulative
path length, bounce index). At every hit the recorded intensity is

    I = E * exp(-mu * L_path) * psi(face)

where psi is the product of four per-face gains (base weight, small-face
edge gain, vertical-surface orientation gain, structural dihedral gain).
Points with I > tau_min enter the cloud together with their bounce index.
Between bounces the energy updates as E <- E * rho * exp(-mu * dL) and
the ray reflects specularly with an optional roughness jitter; tracing
stops on a miss, at k_max bounces, or when the energy drops below
tau_energy.

`trace_ray` is the single-ray reference implementation; `simulate` runs
the numba batch kernel over the full two-level beam and assembles the
canonical point cloud. Both share the same counter-based random streams,
so they agree bounce for bounce.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.typing import NDArray

from . import kernels, rng
from .bvh import BVHIndex, Hit, build_bvh, intersect
from .errors import ConfigError
from .geometry import ViewGeometry, beam_frame
from .mesh import TriangleMesh
from .rays import GridSpec, MonteCarloSpec, Ray, RayBundle, grid_rays, monte_carlo_rays

FloatArray = NDArray[np.float64]

SELF_INTERSECTION_FACTOR = 1e-6  # t_min for secondary bounces, relative to bounding radius


@dataclass(frozen=True)
class ScatterParams:
    """Tunable gains and thresholds of the scattering model (see module docstring)."""

    mu: float = 0.01              # absorption per model unit
    zeta: float = 0.1             # roughness in [0, 1]
    k_max: int = 4                # maximum bounces
    tau_min: float = 1e-3         # point intensity floor
    tau_energy: float = 1e-4      # ray-kill energy floor
    rho: float = 0.6              # per-bounce reflectance
    w_base: float = 1.0
    alpha_edge: float = 1.5
    tau_area: float = 0.05        # fraction of the median face area
    alpha_vert: float = 2.0
    gain_horizontal: float = 0.3
    tau_vert: float = 0.3         # |n_z| below this counts as vertical
    alpha_struct: float = 2.5

    def __post_init__(self):
        checks = [
            (self.mu >= 0.0, "mu must be >= 0"),
            (0.0 <= self.zeta <= 1.0, "zeta must be in [0, 1]"),
            (self.k_max >= 1, "k_max must be >= 1"),
            (self.tau_min > 0.0, "tau_min must be > 0"),
            (self.tau_energy > 0.0, "tau_energy must be > 0"),
            (0.0 < self.rho <= 1.0, "rho must be in (0, 1]"),
            (self.w_base > 0.0, "w_base must be > 0"),
            (self.alpha_edge > 1.0, "alpha_edge must be > 1"),
            (0.0 < self.tau_area < 1.0, "tau_area must be in (0, 1)"),
            (self.alpha_vert > 1.0, "alpha_vert must be > 1"),
            (0.0 < self.gain_horizontal < 1.0, "gain_horizontal must be in (0, 1)"),
            (0.0 < self.tau_vert < 1.0, "tau_vert must be in (0, 1)"),
            (self.alpha_struct > 1.0, "alpha_struct must be > 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


@dataclass(frozen=True)
class RayState:
    position: FloatArray
    direction: FloatArray
    energy: float
    path_length: float
    bounce: int


@dataclass(frozen=True)
class ScatterPoint:
    position: FloatArray
    intensity: float
    bounce: int
    ray_id: int


@dataclass(frozen=True)
class PointCloud:
    positions: FloatArray           # (M, 3), sorted by (ray_id, bounce)
    intensities: FloatArray         # (M,)
    bounces: NDArray[np.uint8]      # (M,)
    ray_ids: NDArray[np.int64]      # (M,)
    azimuth_deg: float
    depression_deg: float
    n_rays_grid: int = 0
    n_rays_mc: int = 0

    def __len__(self) -> int:
        return int(self.intensities.shape[0])

    def per_bounce_counts(self) -> dict[int, int]:
        if len(self) == 0:
            return {}
        values, counts = np.unique(self.bounces, return_counts=True)
        return {int(k): int(c) for k, c in zip(values, counts)}


@dataclass(frozen=True)
class TraceResult:
    points: list[ScatterPoint]
    states: list[RayState]          # states[0] is the launch state, states[k] after bounce k

    @property
    def exit_state(self) -> RayState:
        return self.states[-1]


@dataclass(frozen=True)
class Scene:
    """Immutable mesh + index + per-face response, shared across workers."""

    mesh: TriangleMesh
    index: BVHIndex
    params: ScatterParams
    face_psi: FloatArray = field(repr=False)
    t_min_secondary: float = 0.0


def face_response_gains(mesh: TriangleMesh, params: ScatterParams) -> FloatArray:
    """Per-face pseudo-RCS gain: w_base * H_edge * H_orient * H_struct."""
    median_area = float(np.median(mesh.face_areas))
    h_edge = np.where(mesh.face_areas < params.tau_area * median_area, params.alpha_edge, 1.0)
    h_orient = np.where(np.abs(mesh.face_normals[:, 2]) < params.tau_vert,
                        params.alpha_vert, params.gain_horizontal)
    h_struct = np.where(mesh.structural_flags, params.alpha_struct, 1.0)
    return params.w_base * h_edge * h_orient * h_struct


def pseudo_rcs(hit: Hit, mesh: TriangleMesh, params: ScatterParams) -> float:
    """Four-factor response at one hit (scalar form of `face_response_gains`)."""
    f = hit.face_id
    median_area = float(np.median(mesh.face_areas))
    h_edge = params.alpha_edge if mesh.face_areas[f] < params.tau_area * median_area else 1.0
    h_orient = (params.alpha_vert if abs(mesh.face_normals[f, 2]) < params.tau_vert
                else params.gain_horizontal)
    h_struct = params.alpha_struct if mesh.structural_flags[f] else 1.0
    return params.w_base * h_edge * h_orient * h_struct


def scatter_intensity(state: RayState, psi: float, params: ScatterParams) -> float:
    """Attenuated intensity recorded at a hit: E * exp(-mu * L_path) * psi."""
    if psi <= 0.0:
        raise ValueError("psi must be > 0")
    return state.energy * np.exp(-params.mu * state.path_length) * psi


def reflect(d, n, zeta: float, sampler=None) -> FloatArray:
    """Mirror reflection of d about n with optional roughness jitter.

    `sampler(attempt)` must return the attempt-th world-frame cube sample in
    (-1, 1)^3; it is required when zeta > 0. Jittered directions pointing
    into the surface are re-drawn (8 attempts, then pure specular).
    """
    d = np.asarray(d, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9 or abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("d and n must be unit vectors")
    dot = float(np.dot(d, n))
    if dot >= 0.0:
        raise ValueError("normal must face the incident ray (n . d < 0)")
    spec = d - 2.0 * dot * n
    if zeta == 0.0:
        return spec
    if sampler is None:
        raise ValueError("a jitter sampler is required when zeta > 0")
    for attempt in range(8):
        perturbed = spec + zeta * np.asarray(sampler(attempt), dtype=np.float64)
        norm = float(np.linalg.norm(perturbed))
        if norm < 1e-12:
            continue
        perturbed = perturbed / norm
        if float(np.dot(perturbed, n)) > 0.0:
            return perturbed
    return spec


def jitter_sampler(seed: int, ray_id: int, bounce: int, frame: FloatArray):
    """The (seed, ray_id, bounce)-keyed cube sampler used by the trace kernel."""

    def sample(attempt: int) -> FloatArray:
        lanes = [rng.pack_jitter_counter(bounce, attempt, lane) for lane in range(3)]
        cube = rng.uniform_sym(seed, rng.STREAM_REFLECT_JITTER, ray_id, lanes)
        return frame @ cube

    return sample


def build_scene(mesh: TriangleMesh, params: ScatterParams | None = None) -> Scene:
    params = params or ScatterParams()
    return Scene(
        mesh=mesh,
        index=build_bvh(mesh),
        params=params,
        face_psi=face_response_gains(mesh, params),
        t_min_secondary=SELF_INTERSECTION_FACTOR * mesh.bounding_radius,
    )


def trace_ray(scene: Scene, ray: Ray, seed: int = 0,
              frame: FloatArray | None = None) -> TraceResult:
    """Single-ray reference trace; mirrors the batch kernel bounce for bounce."""
    params = scene.params
    if frame is None:
        if params.zeta > 0.0:
            raise ValueError("a beam frame is required when zeta > 0")
        frame = np.eye(3)

    origin = np.asarray(ray.origin, dtype=np.float64)
    direction = np.asarray(ray.direction, dtype=np.float64)
    energy = 1.0
    path_len = 0.0
    t_min = 0.0
    points: list[ScatterPoint] = []
    states = [RayState(origin, direction, energy, path_len, 0)]

    for k in range(1, params.k_max + 1):
        hit = intersect(scene.index, scene.mesh, origin, direction, t_min)
        if hit is None:
            break
        path_len += hit.t
        state = RayState(hit.point, direction, energy, path_len, k)
        intensity = scatter_intensity(state, float(scene.face_psi[hit.face_id]), params)
        if intensity > params.tau_min:
            points.append(ScatterPoint(hit.point, intensity, k, ray.ray_id))
        energy = energy * params.rho * np.exp(-params.mu * hit.t)
        if k == params.k_max or energy < params.tau_energy:
            states.append(RayState(hit.point, direction, energy, path_len, k))
            break
        direction = reflect(direction, hit.normal, params.zeta,
                            jitter_sampler(seed, ray.ray_id, k, frame))
        origin = hit.point
        t_min = scene.t_min_secondary
        states.append(RayState(origin, direction, energy, path_len, k))
    return TraceResult(points=points, states=states)


def effective_workers(requested: int) -> int:
    """Clamp a worker request to numba's thread pool size."""
    return max(1, min(int(requested), numba.config.NUMBA_NUM_THREADS))


def simulate(scene: Scene, geom: ViewGeometry,
             mc: MonteCarloSpec | None = None,
             grid: GridSpec | None = None,
             workers: int = 1,
             seed: int | None = None) -> PointCloud:
    """Trace the full two-level beam and return the canonical point cloud.

    Grid rays come first (ids 0..G-1) followed by Monte Carlo rays
    (ids G..G+N-1). The run seed defaults to mc.seed. Output is sorted by
    (ray_id, bounce) and is bit-identical for any worker count.
    """
    if seed is None:
        seed = mc.seed if mc is not None else 0

    bundles: list[RayBundle] = [grid_rays(geom, scene.mesh, grid)]
    n_grid = len(bundles[0])
    n_mc = 0
    if mc is not None:
        mc_bundle = monte_carlo_rays(geom, scene.mesh, mc)
        n_mc = len(mc_bundle)
        bundles.append(mc_bundle)

    origins = np.ascontiguousarray(np.vstack([b.origins for b in bundles]))
    directions = np.ascontiguousarray(np.vstack([b.directions for b in bundles]))
    offsets = np.cumsum([0] + [len(b) for b in bundles])
    gids = np.concatenate([b.ids + offsets[i] for i, b in enumerate(bundles)])

    params = scene.params
    n_rays = origins.shape[0]
    k_max = params.k_max
    out_pos = np.zeros((n_rays * k_max, 3))
    out_intensity = np.zeros(n_rays * k_max)
    out_bounce = np.zeros(n_rays * k_max, dtype=np.uint8)
    out_valid = np.zeros(n_rays * k_max, dtype=bool)

    numba.set_num_threads(effective_workers(workers))
    frame = beam_frame(geom.azimuth_deg, geom.depression_deg)
    jitter_prefix = rng.stream_prefix(seed, rng.STREAM_REFLECT_JITTER)
    idx = scene.index
    kernels.trace_batch(
        idx.node_min, idx.node_max, idx.node_left, idx.node_count, idx.prim_ids,
        idx.tri_v0, idx.tri_e1, idx.tri_e2,
        scene.mesh.face_normals, scene.face_psi,
        origins, directions, gids,
        params.mu, params.zeta, params.k_max, params.tau_min,
        params.tau_energy, params.rho, scene.t_min_secondary,
        np.uint64(jitter_prefix), frame,
        out_pos, out_intensity, out_bounce, out_valid)

    rows = np.nonzero(out_valid)[0]
    return PointCloud(
        positions=out_pos[rows],
        intensities=out_intensity[rows],
        bounces=out_bounce[rows],
        ray_ids=gids[rows // k_max],
        azimuth_deg=geom.azimuth_deg,
        depression_deg=geom.depression_deg,
        n_rays_grid=n_grid,
        n_rays_mc=n_mc,
    )
