"""sargeo: geometric SAR scattering simulation and multi-modal fusion kernels.

A numpy/numba library with three layers:

* mesh + ray tracing: OBJ/STL loading, BVH nearest-hit queries, a
  recursive multi-bounce scattering trace with a pseudo-RCS response,
  producing deterministic scatter point clouds;
* slant-range projection: rasterization of point clouds into intensity
  maps with PGM/PNG output;
* fusion math: the five-stage feature fusion cascade (projection
  normalization, adaptive gating, feature-wise modulation, attention
  refine, cosine-guided interpolation) and the guidance-scale combiner.
"""

__version__ = "0.1.0"

from .bvh import BVHIndex, Hit, build_bvh, intersect
from .errors import ConfigError, GeometryError, MeshError, SimulatorError
from .fusion import (FusionDims, FusionParams, cfg_combine, cosine_guide,
                     film_modulate, fusion_forward, gate_fuse,
                     init_fusion_params, layer_norm, load_weights,
                     project_norm, refine, save_weights)
from .geometry import (ViewGeometry, beam_frame, boresight, los_to_world,
                       radar_rotation, sensor_position, world_to_los)
from .mesh import TriangleMesh, flag_structural_faces, load_mesh, mesh_from_arrays
from .plyio import read_ply, write_ply
from .projection import IntensityMap, project, write_image
from .rays import (GridSpec, MonteCarloSpec, Ray, RayBundle, auto_grid_spec,
                   beam_direction, grid_rays, monte_carlo_rays)
from .scatter import (PointCloud, RayState, ScatterParams, ScatterPoint,
                      Scene, build_scene, face_response_gains, pseudo_rcs,
                      reflect, scatter_intensity, simulate, trace_ray)

__all__ = [
    "__version__",
    "BVHIndex", "Hit", "build_bvh", "intersect",
    "ConfigError", "GeometryError", "MeshError", "SimulatorError",
    "FusionDims", "FusionParams", "cfg_combine", "cosine_guide",
    "film_modulate", "fusion_forward", "gate_fuse", "init_fusion_params",
    "layer_norm", "load_weights", "project_norm", "refine", "save_weights",
    "ViewGeometry", "beam_frame", "boresight", "los_to_world",
    "radar_rotation", "sensor_position", "world_to_los",
    "TriangleMesh", "flag_structural_faces", "load_mesh", "mesh_from_arrays",
    "read_ply", "write_ply",
    "IntensityMap", "project", "write_image",
    "GridSpec", "MonteCarloSpec", "Ray", "RayBundle", "auto_grid_spec",
    "beam_direction", "grid_rays", "monte_carlo_rays",
    "PointCloud", "RayState", "ScatterParams", "ScatterPoint", "Scene",
    "build_scene", "face_response_gains", "pseudo_rcs", "reflect",
    "scatter_intensity", "simulate", "trace_ray",
]
