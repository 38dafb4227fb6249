import struct

import numpy as np
import pytest

from sargeo import MeshError, flag_structural_faces, load_mesh, mesh_from_arrays
from conftest import make_corner_mesh

from oracles import edge_dihedrals


def test_unit_cube_obj(cube_mesh):
    assert cube_mesh.n_faces == 12
    assert cube_mesh.n_vertices == 8
    assert abs(cube_mesh.face_areas.sum() - 6.0) < 1e-9


def test_single_triangle_geometry():
    mesh = mesh_from_arrays([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert mesh.face_areas[0] == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(mesh.face_normals[0], [0, 0, 1], atol=1e-12)


def test_degenerate_faces_dropped(tmp_path):
    lines = ["v 0 0 0", "v 1 0 0", "v 0 1 0", "v 0 0 1", "v 1 1 1"]
    # 9 proper faces + 1 degenerate (repeated vertex)
    good = [(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4), (1, 2, 5),
            (1, 3, 5), (1, 4, 5), (2, 3, 5), (2, 4, 5)]
    for f in good:
        lines.append("f " + " ".join(map(str, f)))
    lines.append("f 1 1 2")
    path = tmp_path / "degen.obj"
    path.write_text("\n".join(lines) + "\n")
    mesh = load_mesh(path)
    assert mesh.n_faces == 9
    assert mesh.dropped_degenerate == 1


def test_mesh_invariants(cube_mesh):
    assert cube_mesh.faces.max() < cube_mesh.n_vertices
    norms = np.linalg.norm(cube_mesh.face_normals, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)
    dist = np.linalg.norm(cube_mesh.vertices - cube_mesh.centroid, axis=1)
    assert dist.max() <= cube_mesh.bounding_radius + 1e-12
    assert not cube_mesh.vertices.flags.writeable


def test_load_is_deterministic(tmp_path, cube_mesh):
    from conftest import ASSETS
    again = load_mesh(ASSETS / "cube.obj")
    np.testing.assert_array_equal(again.vertices, cube_mesh.vertices)
    np.testing.assert_array_equal(again.faces, cube_mesh.faces)


def test_obj_errors(tmp_path):
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "missing.obj")

    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 oops\n")
    with pytest.raises(MeshError, match="bad.obj:4"):
        load_mesh(bad)

    out_of_range = tmp_path / "range.obj"
    out_of_range.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshError, match="out of range"):
        load_mesh(out_of_range)

    empty = tmp_path / "empty.obj"
    empty.write_text("# nothing\n")
    with pytest.raises(MeshError, match="no vertex records"):
        load_mesh(empty)

    all_degenerate = tmp_path / "flat.obj"
    all_degenerate.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    with pytest.raises(MeshError, match="zero retained faces"):
        load_mesh(all_degenerate)

    unknown = tmp_path / "mesh.xyz"
    unknown.write_text("v 0 0 0\n")
    with pytest.raises(MeshError, match="unsupported mesh format"):
        load_mesh(unknown)


def _binary_stl_bytes(triangles):
    blob = bytearray(b"\x00" * 80)
    blob += struct.pack("<I", len(triangles))
    for tri in triangles:
        blob += struct.pack("<3f", 0.0, 0.0, 0.0)
        for p in tri:
            blob += struct.pack("<3f", *p)
        blob += struct.pack("<H", 0)
    return bytes(blob)


def test_binary_stl_round_trip(tmp_path, cube_mesh):
    tris = cube_mesh.vertices[cube_mesh.faces]
    path = tmp_path / "cube.stl"
    path.write_bytes(_binary_stl_bytes(tris))
    mesh = load_mesh(path)
    assert mesh.n_faces == 12
    # welding recovers the 8 shared cube corners from 36 stored vertices
    assert mesh.n_vertices == 8
    assert abs(mesh.face_areas.sum() - 6.0) < 1e-9
    flagged = flag_structural_faces(mesh, 15.0)
    assert flagged.structural_flags.all()


def test_truncated_stl_reports_offset(tmp_path):
    path = tmp_path / "trunc.stl"
    path.write_bytes(b"\x00" * 84)  # declares 0 triangles via zero count
    with pytest.raises(MeshError, match="zero triangles"):
        load_mesh(path)
    path.write_bytes(b"\x00" * 80 + struct.pack("<I", 5) + b"\x00" * 10)
    with pytest.raises(MeshError, match="byte offset"):
        load_mesh(path)


def test_flag_two_squares_at_right_angle():
    mesh = make_corner_mesh()
    assert mesh.structural_flags.all()
    assert mesh.structural_flags.shape == (4,)


def test_flag_flat_plate_zero():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [2, 0, 0], [2, 1, 0]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3], [1, 4, 5], [1, 5, 2]])
    mesh = flag_structural_faces(mesh_from_arrays(v, f), 15.0)
    assert not mesh.structural_flags.any()


def test_flag_cube_all_faces(cube_mesh):
    flagged = flag_structural_faces(cube_mesh, 15.0)
    # independent enumeration: every non-coplanar cube dihedral is 90 degrees
    angles = [a for _, a in edge_dihedrals(cube_mesh) if a > 1.0]
    assert angles and all(abs(a - 90.0) < 1e-9 for a in angles)
    assert flagged.structural_flags.all()


def test_flag_tolerance_validation(cube_mesh):
    with pytest.raises(MeshError):
        flag_structural_faces(cube_mesh, 0.0)
    with pytest.raises(MeshError):
        flag_structural_faces(cube_mesh, 45.0)


def test_nonmanifold_edges_counted():
    # three faces sharing one edge
    v = np.array([[0, 0, 0], [0, 0, 1], [1, 0, 0], [0, 1, 0], [-1, -1, 0]], dtype=float)
    f = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    mesh = flag_structural_faces(mesh_from_arrays(v, f), 15.0)
    assert mesh.nonmanifold_edges == 1
