"""Triangle meshes: loading, per-face geometry, structural-face flagging.

Supported inputs are Wavefront OBJ text (v/f records; vn, vt and other
records ignored; polygons fan-triangulated from the first vertex) and
binary STL (80-byte header, uint32 triangle count, 50-byte records).
STL triangles carry no connectivity, so exactly-equal vertex triplets
are welded on load; without that the edge-dihedral structural flagging
below would never see a shared edge.

Faces with area below 1e-12 * bounding_radius**2 are dropped at load and
counted. All arrays are float64/int64 and frozen read-only; meshes are
safe to share across workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import MeshError

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

DEGENERATE_AREA_FACTOR = 1e-12


@dataclass(frozen=True)
class TriangleMesh:
    vertices: FloatArray          # (V, 3)
    faces: IntArray               # (F, 3)
    face_normals: FloatArray      # (F, 3), unit
    face_areas: FloatArray        # (F,)
    structural_flags: NDArray[np.bool_]  # (F,)
    centroid: FloatArray          # (3,)
    bounding_radius: float
    dropped_degenerate: int = 0
    nonmanifold_edges: int = 0

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def mesh_from_arrays(vertices, faces) -> TriangleMesh:
    """Build a mesh from raw (V, 3) vertices and (F, 3) vertex-index triples."""
    verts = np.ascontiguousarray(vertices, dtype=np.float64)
    tris = np.ascontiguousarray(faces, dtype=np.int64)
    if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] == 0:
        raise MeshError("vertices must be a non-empty (V, 3) array")
    if tris.ndim != 2 or tris.shape[1] != 3 or tris.shape[0] == 0:
        raise MeshError("faces must be a non-empty (F, 3) array")
    if not np.all(np.isfinite(verts)):
        raise MeshError("vertices contain non-finite values")
    if tris.min() < 0 or tris.max() >= verts.shape[0]:
        raise MeshError("face indices out of range")

    centroid = verts.mean(axis=0)
    bounding_radius = float(np.linalg.norm(verts - centroid, axis=1).max())
    if bounding_radius <= 0.0:
        raise MeshError("mesh collapses to a single point")

    tri_pts = verts[tris]
    cross = np.cross(tri_pts[:, 1] - tri_pts[:, 0], tri_pts[:, 2] - tri_pts[:, 0])
    double_area = np.linalg.norm(cross, axis=1)
    areas = 0.5 * double_area

    keep = areas >= DEGENERATE_AREA_FACTOR * bounding_radius**2
    dropped = int(np.count_nonzero(~keep))
    if not np.any(keep):
        raise MeshError("zero retained faces after dropping degenerate triangles")
    tris = tris[keep]
    cross = cross[keep]
    double_area = double_area[keep]
    areas = areas[keep]
    normals = cross / double_area[:, None]

    return TriangleMesh(
        vertices=_freeze(verts),
        faces=_freeze(np.ascontiguousarray(tris)),
        face_normals=_freeze(np.ascontiguousarray(normals)),
        face_areas=_freeze(np.ascontiguousarray(areas)),
        structural_flags=_freeze(np.zeros(len(tris), dtype=bool)),
        centroid=_freeze(centroid),
        bounding_radius=bounding_radius,
        dropped_degenerate=dropped,
    )


def _parse_obj(path: Path) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        kind = tokens[0]
        if kind == "v":
            if len(tokens) < 4:
                raise MeshError(f"{path}:{line_no}: vertex record needs 3 coordinates")
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError as exc:
                raise MeshError(f"{path}:{line_no}: bad vertex coordinate: {exc}") from exc
        elif kind == "f":
            if len(tokens) < 4:
                raise MeshError(f"{path}:{line_no}: face record needs >= 3 vertices")
            idx = []
            for tok in tokens[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise MeshError(f"{path}:{line_no}: bad face index {tok!r}") from exc
                # OBJ indices are 1-based; negative indices count from the end.
                if i > 0:
                    i -= 1
                elif i < 0:
                    i += len(vertices)
                else:
                    raise MeshError(f"{path}:{line_no}: face index 0 is invalid")
                if not 0 <= i < len(vertices):
                    raise MeshError(f"{path}:{line_no}: face index {tok!r} out of range")
                idx.append(i)
            for k in range(1, len(idx) - 1):  # fan triangulation from the first vertex
                faces.append([idx[0], idx[k], idx[k + 1]])
        # vn / vt / usemtl / o / g / s / mtllib are ignored
    if not vertices:
        raise MeshError(f"{path}: no vertex records found")
    if not faces:
        raise MeshError(f"{path}: no face records found")
    return np.asarray(vertices, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def _parse_binary_stl(path: Path) -> tuple[np.ndarray, np.ndarray]:
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 84:
        raise MeshError(f"{path}: truncated STL header (offset {len(blob)} < 84 bytes)")
    (count,) = struct.unpack_from("<I", blob, 80)
    expected = 84 + 50 * count
    if len(blob) < expected:
        raise MeshError(
            f"{path}: truncated STL body at byte offset {len(blob)} (expected {expected})"
        )
    if count == 0:
        raise MeshError(f"{path}: STL declares zero triangles")
    records = np.frombuffer(blob, dtype=np.uint8, count=50 * count, offset=84)
    records = records.reshape(count, 50)
    floats = records[:, :48].copy().view("<f4").reshape(count, 12).astype(np.float64)
    tri_pts = floats[:, 3:12].reshape(count, 3, 3)  # skip the stored normal

    # Weld exactly-equal vertices so shared edges become visible.
    flat = tri_pts.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    faces = inverse.reshape(count, 3)
    return uniq, faces.astype(np.int64)


def load_mesh(path) -> TriangleMesh:
    """Load an OBJ or binary STL file into a TriangleMesh."""
    p = Path(path)
    if not p.is_file():
        raise MeshError(f"mesh file not found: {p}")
    suffix = p.suffix.lower()
    if suffix == ".obj":
        verts, faces = _parse_obj(p)
    elif suffix == ".stl":
        verts, faces = _parse_binary_stl(p)
    else:
        raise MeshError(f"unsupported mesh format {suffix!r} (expected .obj or .stl)")
    return mesh_from_arrays(verts, faces)


def _edge_face_table(faces: IntArray) -> dict[tuple[int, int], list[int]]:
    table: dict[tuple[int, int], list[int]] = {}
    for fid, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            table.setdefault(key, []).append(fid)
    return table


def flag_structural_faces(mesh: TriangleMesh, dihedral_tolerance_deg: float = 15.0) -> TriangleMesh:
    """Flag faces adjacent to a near-90-degree dihedral edge.

    An edge shared by exactly two faces whose normals meet at 90 degrees
    (within the tolerance) marks both faces as structural — these are the
    corner-reflector style junctions that get the strong-response gain.
    The flag then extends one adjacency step across coplanar shared edges,
    so the triangles produced by splitting one polygon behave as a single
    face (a quad plate joined to another at 90 degrees is flagged whole).
    Edges shared by more than two faces are skipped and counted in
    `nonmanifold_edges`. Dihedral tests use |n1 . n2| so they are
    insensitive to winding-inconsistent normal flips.
    """
    if not 0.0 < dihedral_tolerance_deg < 45.0:
        raise MeshError(
            f"dihedral tolerance must be in (0, 45) degrees, got {dihedral_tolerance_deg}"
        )
    right_limit = np.sin(np.radians(dihedral_tolerance_deg))
    coplanar_limit = np.cos(np.radians(dihedral_tolerance_deg))
    flags = np.zeros(mesh.n_faces, dtype=bool)
    coplanar_pairs: list[tuple[int, int]] = []
    nonmanifold = 0
    for face_ids in _edge_face_table(mesh.faces).values():
        if len(face_ids) > 2:
            nonmanifold += 1
            continue
        if len(face_ids) != 2:
            continue
        f0, f1 = face_ids
        d = abs(float(np.dot(mesh.face_normals[f0], mesh.face_normals[f1])))
        if d <= right_limit:
            flags[f0] = True
            flags[f1] = True
        elif d >= coplanar_limit:
            coplanar_pairs.append((f0, f1))
    seeded = flags.copy()
    for f0, f1 in coplanar_pairs:
        if seeded[f0] or seeded[f1]:
            flags[f0] = True
            flags[f1] = True
    return replace(
        mesh,
        structural_flags=_freeze(flags),
        nonmanifold_edges=nonmanifold,
    )
