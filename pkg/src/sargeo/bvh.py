"""Bounding volume hierarchy over mesh faces and nearest-hit queries.

Median-split builder: at every internal node the faces are stably sorted
by box-center along the widest centroid axis and cut at the middle, so
construction is a pure function of the mesh and the tree is balanced
(depth ~ log2(F)). Child nodes occupy adjacent slots (right = left + 1),
which is what the traversal kernel assumes. Node boxes are padded by
1e-9 of the scene extent so boundary hits cannot be lost to slab-test
rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .errors import MeshError
from .mesh import TriangleMesh

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

LEAF_SIZE = 4
_BOX_PAD_FACTOR = 1e-9


@dataclass(frozen=True)
class BVHIndex:
    node_min: FloatArray    # (N, 3)
    node_max: FloatArray    # (N, 3)
    node_left: IntArray     # (N,) child index (internal) or first-prim offset (leaf)
    node_count: IntArray    # (N,) 0 for internal nodes, leaf face count otherwise
    prim_ids: IntArray      # (F,) permutation of face ids, leaves own contiguous slices
    tri_v0: FloatArray      # (F, 3) first vertex per face
    tri_e1: FloatArray      # (F, 3) edge v1 - v0
    tri_e2: FloatArray      # (F, 3) edge v2 - v0

    @property
    def n_nodes(self) -> int:
        return int(self.node_min.shape[0])


@dataclass(frozen=True)
class Hit:
    face_id: int
    t: float
    point: FloatArray
    normal: FloatArray      # stored face normal, flipped to face the incoming ray
    barycentric: tuple[float, float]


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> BVHIndex:
    if mesh.n_faces < 1:
        raise MeshError("cannot build a BVH over an empty mesh")
    tri = mesh.vertices[mesh.faces]                     # (F, 3, 3)
    box_min = tri.min(axis=1)
    box_max = tri.max(axis=1)
    centers = 0.5 * (box_min + box_max)
    extent = float((box_max.max(axis=0) - box_min.min(axis=0)).max())
    pad = _BOX_PAD_FACTOR * max(extent, 1.0)

    n_faces = mesh.n_faces
    max_nodes = 2 * n_faces + 1
    node_min = np.empty((max_nodes, 3))
    node_max = np.empty((max_nodes, 3))
    node_left = np.zeros(max_nodes, dtype=np.int64)
    node_count = np.zeros(max_nodes, dtype=np.int64)
    order = np.arange(n_faces, dtype=np.int64)
    next_free = [1]  # slot 0 is the root

    def fill(node: int, start: int, end: int) -> None:
        members = order[start:end]
        node_min[node] = box_min[members].min(axis=0) - pad
        node_max[node] = box_max[members].max(axis=0) + pad
        count = end - start
        if count <= leaf_size:
            node_left[node] = start
            node_count[node] = count
            return
        span = centers[members].max(axis=0) - centers[members].min(axis=0)
        axis = int(np.argmax(span))
        perm = np.argsort(centers[members, axis], kind="stable")
        order[start:end] = members[perm]
        mid = start + count // 2
        left = next_free[0]
        next_free[0] += 2
        node_left[node] = left
        node_count[node] = 0
        fill(left, start, mid)
        fill(left + 1, mid, end)

    fill(0, 0, n_faces)
    n = next_free[0]

    def freeze(a: np.ndarray) -> np.ndarray:
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        return a

    return BVHIndex(
        node_min=freeze(node_min[:n]),
        node_max=freeze(node_max[:n]),
        node_left=freeze(node_left[:n]),
        node_count=freeze(node_count[:n]),
        prim_ids=freeze(order),
        tri_v0=freeze(tri[:, 0, :]),
        tri_e1=freeze(tri[:, 1, :] - tri[:, 0, :]),
        tri_e2=freeze(tri[:, 2, :] - tri[:, 0, :]),
    )


def intersect(index: BVHIndex, mesh: TriangleMesh, origin, direction,
              t_min: float = 0.0) -> Hit | None:
    """Nearest intersection with t > t_min, or None."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    if t_min < 0.0:
        raise ValueError("t_min must be >= 0")
    f, t, u, v = kernels.raycast_single(
        index.node_min, index.node_max, index.node_left, index.node_count,
        index.prim_ids, index.tri_v0, index.tri_e1, index.tri_e2, o, d, t_min)
    if f < 0:
        return None
    normal = mesh.face_normals[f]
    if float(np.dot(normal, d)) > 0.0:
        normal = -normal
    return Hit(
        face_id=int(f),
        t=float(t),
        point=o + t * d,
        normal=np.asarray(normal, dtype=np.float64),
        barycentric=(float(u), float(v)),
    )
