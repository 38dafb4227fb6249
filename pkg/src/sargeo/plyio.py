"""PLY serialization of scatter point clouds (ascii and binary little-endian).

Wire format per vertex: x, y, z, intensity as 32-bit floats, bounce as
uint8, ray_id as uint32, optionally an RGB uchar triple colored by bounce
count (blue single, yellow double, red triple, purple for four or more).
Header comments carry the observation geometry echo and ray counts, so a
cloud file is self-describing for projection. Writing is deterministic:
the same cloud always produces identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MeshError
from .scatter import PointCloud

BOUNCE_PALETTE = {1: (0, 0, 255), 2: (255, 255, 0), 3: (255, 0, 0)}
MULTI_BOUNCE_COLOR = (160, 32, 240)


def bounce_color(k: int) -> tuple[int, int, int]:
    return BOUNCE_PALETTE.get(int(k), MULTI_BOUNCE_COLOR)


def _record_dtype(colors: bool) -> np.dtype:
    spec = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
            ("intensity", "<f4"), ("bounce", "u1"), ("ray_id", "<u4")]
    if colors:
        spec += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    return np.dtype(spec)


def _records(cloud: PointCloud, colors: bool) -> np.ndarray:
    rec = np.zeros(len(cloud), dtype=_record_dtype(colors))
    rec["x"] = cloud.positions[:, 0]
    rec["y"] = cloud.positions[:, 1]
    rec["z"] = cloud.positions[:, 2]
    rec["intensity"] = cloud.intensities
    rec["bounce"] = cloud.bounces
    rec["ray_id"] = cloud.ray_ids
    if colors:
        for k in np.unique(cloud.bounces):
            r, g, b = bounce_color(int(k))
            mask = cloud.bounces == k
            rec["red"][mask] = r
            rec["green"][mask] = g
            rec["blue"][mask] = b
    return rec


def write_ply(cloud: PointCloud, path, binary: bool = True, colors: bool = False) -> None:
    p = Path(path)
    fmt = "binary_little_endian" if binary else "ascii"
    header = [
        "ply",
        f"format {fmt} 1.0",
        "comment generated by sargeo",
        f"comment azimuth_deg={cloud.azimuth_deg:.6f}",
        f"comment depression_deg={cloud.depression_deg:.6f}",
        f"comment n_rays_grid={cloud.n_rays_grid}",
        f"comment n_rays_mc={cloud.n_rays_mc}",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property float intensity",
        "property uchar bounce",
        "property uint ray_id",
    ]
    if colors:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    rec = _records(cloud, colors)
    if binary:
        p.write_bytes(("\n".join(header) + "\n").encode("ascii") + rec.tobytes())
    else:
        lines = []
        for row in rec:
            parts = [format(float(row[name]), ".9g") for name in ("x", "y", "z", "intensity")]
            parts.append(str(int(row["bounce"])))
            parts.append(str(int(row["ray_id"])))
            if colors:
                parts += [str(int(row[c])) for c in ("red", "green", "blue")]
            lines.append(" ".join(parts))
        p.write_text("\n".join(header) + "\n" + "\n".join(lines) + ("\n" if lines else ""))


_PROPERTY_TYPES = {
    "float": ("<f4", 4), "float32": ("<f4", 4),
    "uchar": ("u1", 1), "uint8": ("u1", 1),
    "uint": ("<u4", 4), "uint32": ("<u4", 4),
    "int": ("<i4", 4), "int32": ("<i4", 4),
    "double": ("<f8", 8), "float64": ("<f8", 8),
}


def read_ply(path) -> PointCloud:
    """Parse a cloud written by `write_ply` (tolerates extra vertex properties)."""
    p = Path(path)
    if not p.is_file():
        raise MeshError(f"point-cloud file not found: {p}")
    blob = p.read_bytes()

    end_marker = b"end_header\n"
    end = blob.find(end_marker)
    if not blob.startswith(b"ply\n") or end < 0:
        raise MeshError(f"{p}: not a PLY file (missing magic or end_header)")
    header_lines = blob[:end].decode("ascii", errors="replace").splitlines()
    body = blob[end + len(end_marker):]

    fmt = None
    n_vertex = None
    props: list[tuple[str, str]] = []
    meta = {"azimuth_deg": 0.0, "depression_deg": 0.0, "n_rays_grid": 0, "n_rays_mc": 0}
    in_vertex = False
    for line_no, line in enumerate(header_lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise MeshError(f"{p}:{line_no}: unsupported PLY format {line!r}")
            fmt = tokens[1]
        elif tokens[0] == "comment" and len(tokens) > 1 and "=" in tokens[1]:
            key, _, value = tokens[1].partition("=")
            if key in meta:
                meta[key] = float(value) if key.endswith("_deg") else int(value)
        elif tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                n_vertex = int(tokens[2])
        elif tokens[0] == "property" and in_vertex:
            if len(tokens) != 3 or tokens[1] not in _PROPERTY_TYPES:
                raise MeshError(f"{p}:{line_no}: unsupported property {line!r}")
            props.append((tokens[2], tokens[1]))
    if fmt is None or n_vertex is None:
        raise MeshError(f"{p}: PLY header missing format or vertex element")
    names = [name for name, _ in props]
    for required in ("x", "y", "z", "intensity", "bounce", "ray_id"):
        if required not in names:
            raise MeshError(f"{p}: PLY vertex element missing property {required!r}")

    dtype = np.dtype([(name, _PROPERTY_TYPES[t][0]) for name, t in props])
    if fmt == "binary_little_endian":
        expected = n_vertex * dtype.itemsize
        if len(body) < expected:
            raise MeshError(
                f"{p}: truncated PLY body at byte offset {end + len(end_marker) + len(body)}"
                f" (expected {expected} body bytes)")
        rec = np.frombuffer(body, dtype=dtype, count=n_vertex)
    else:
        text_rows = body.decode("ascii", errors="replace").splitlines()
        if len(text_rows) < n_vertex:
            raise MeshError(f"{p}: PLY declares {n_vertex} vertices, found {len(text_rows)} rows")
        rec = np.zeros(n_vertex, dtype=dtype)
        for i in range(n_vertex):
            tokens = text_rows[i].split()
            if len(tokens) != len(props):
                raise MeshError(f"{p}: vertex row {i + 1} has {len(tokens)} fields, expected {len(props)}")
            try:
                for (name, t), tok in zip(props, tokens):
                    rec[name][i] = float(tok) if t in ("float", "float32", "double", "float64") else int(tok)
            except ValueError as exc:
                raise MeshError(f"{p}: vertex row {i + 1}: {exc}") from exc

    positions = np.column_stack([
        rec["x"].astype(np.float64),
        rec["y"].astype(np.float64),
        rec["z"].astype(np.float64),
    ])
    return PointCloud(
        positions=positions,
        intensities=rec["intensity"].astype(np.float64),
        bounces=rec["bounce"].astype(np.uint8),
        ray_ids=rec["ray_id"].astype(np.int64),
        azimuth_deg=meta["azimuth_deg"],
        depression_deg=meta["depression_deg"],
        n_rays_grid=meta["n_rays_grid"],
        n_rays_mc=meta["n_rays_mc"],
    )
