"""Command-line orchestration: simulate / sweep, project, fuse.

Subcommands
    simulate  trace a point cloud for one azimuth (or a --sweep of them),
              writing PLY + JSON metadata and optionally a projected image
    project   rasterize an existing PLY cloud to a PGM/PNG intensity map
    fuse      run the fusion cascade over feature files (.npy), writing the
              fused feature and the gate weights

Exit codes: 0 success, 2 config error, 3 I/O error, 4 geometry error.
Flags override config-file keys, which override built-in defaults. The
metadata JSON has a "timings" section that is excluded from determinism
guarantees; everything else (PLY bytes, image bytes, remaining metadata)
is identical across reruns and worker counts for a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, apply_overrides, load_config
from .errors import ConfigError, GeometryError, MeshError, SimulatorError
from .fusion import (FusionDims, film_modulate, gate_fuse, guided_or_passthrough,
                     init_fusion_params, load_weights, project_norm, refine,
                     save_weights)
from .mesh import flag_structural_faces, load_mesh
from .plyio import read_ply, write_ply
from .projection import project, write_image
from .scatter import build_scene, effective_workers, simulate


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, _, h = text.lower().partition("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ConfigError(f"--project expects WxH (e.g. 256x256), got {text!r}") from exc


def _parse_sweep(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--sweep expects start:end:step, got {text!r}")
    try:
        start, end, step = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"--sweep expects numeric start:end:step, got {text!r}") from exc
    if step <= 0:
        raise ConfigError("--sweep step must be > 0")
    if end < start:
        raise ConfigError("--sweep start must be <= end")
    azimuths = []
    k = 0
    while True:
        az = start + k * step
        if az > end + 1e-9:
            break
        azimuths.append(az)
        k += 1
    return azimuths


def _azimuth_tag(az: float) -> str:
    if abs(az - round(az)) < 1e-9:
        return f"{int(round(az)) % 1000:03d}"
    return f"{az:07.3f}"


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(
        cfg,
        mesh_path=args.mesh,
        azimuth_deg=args.azimuth,
        depression_deg=args.depression,
        range=args.range,
        grid_step_deg=args.grid_step,
        mc_count=args.mc_rays,
        mc_sigma=args.sigma,
        mu=args.mu,
        zeta=args.zeta,
        k_max=args.kmax,
        tau_min=args.tau_min,
        rho=args.rho,
        seed=args.seed,
        workers=args.workers,
        out_dir=args.out,
        mode=args.mode,
        log_compress=True if args.log_compress else None,
    )


def _write_metadata(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    if not cfg.mesh_path:
        raise ConfigError("a mesh path is required (--mesh or mesh.path in the config)")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t_load = time.perf_counter()
    mesh = flag_structural_faces(load_mesh(cfg.mesh_path), cfg.dihedral_tolerance_deg)
    scene = build_scene(mesh, cfg.scatter_params())
    load_seconds = time.perf_counter() - t_load

    project_size = _parse_size(args.project) if args.project else None
    if not args.sweep:
        _run_single(cfg, scene, cfg.azimuth_deg, out_dir, "", project_size, load_seconds)
        return 0

    failures = []
    azimuths = _parse_sweep(args.sweep)
    for az in azimuths:
        try:
            _run_single(cfg, scene, az, out_dir, f"_az{_azimuth_tag(az)}",
                        project_size, load_seconds)
        except SimulatorError as exc:
            failures.append((az, exc))
            print(f"error [azimuth {az}]: {exc}", file=sys.stderr)
    if failures:
        print(f"{len(failures)} of {len(azimuths)} azimuths failed", file=sys.stderr)
        return 1
    return 0


def _run_single(cfg: RunConfig, scene, azimuth_deg: float, out_dir: Path, tag: str,
                project_size, load_seconds: float) -> None:
    mesh = scene.mesh
    geom = cfg.view_geometry(mesh.bounding_radius, azimuth_deg)
    t0 = time.perf_counter()
    cloud = simulate(scene, geom, cfg.monte_carlo_spec(),
                     workers=cfg.workers, seed=cfg.seed)
    trace_seconds = time.perf_counter() - t0

    cloud_path = out_dir / f"cloud{tag}.ply"
    write_ply(cloud, cloud_path, binary=cfg.ply_format == "binary", colors=cfg.ply_colors)

    image_name = None
    if project_size is not None:
        width, height = project_size
        imap = project(cloud, width, height, mode=cfg.mode, log_compress=cfg.log_compress)
        image_path = out_dir / f"image{tag}.{cfg.image_format}"
        write_image(imap, image_path, bit_depth=cfg.bit_depth)
        image_name = image_path.name

    n_rays = cloud.n_rays_grid + cloud.n_rays_mc
    meta = {
        "tool": {"name": "sargeo", "version": __version__},
        "seed": cfg.seed,
        "config": asdict(cfg),
        "geometry": {
            "azimuth_deg": geom.azimuth_deg,
            "depression_deg": geom.depression_deg,
            "range": geom.range,
            "grid_step_deg": geom.grid_step_deg,
        },
        "mesh": {
            "faces": mesh.n_faces,
            "vertices": mesh.n_vertices,
            "bounding_radius": mesh.bounding_radius,
            "dropped_degenerate": mesh.dropped_degenerate,
            "nonmanifold_edges": mesh.nonmanifold_edges,
            "structural_faces": int(mesh.structural_flags.sum()),
        },
        "counts": {
            "points": len(cloud),
            "per_bounce": {str(k): v for k, v in cloud.per_bounce_counts().items()},
            "rays_grid": cloud.n_rays_grid,
            "rays_mc": cloud.n_rays_mc,
        },
        "outputs": {"cloud": cloud_path.name, "image": image_name},
        "workers": {"requested": cfg.workers, "effective": effective_workers(cfg.workers)},
        "timings": {
            "load_s": load_seconds,
            "trace_s": trace_seconds,
            "rays_per_s": (n_rays / trace_seconds) if trace_seconds > 0 else None,
        },
    }
    _write_metadata(out_dir / f"run{tag}.json", meta)


def cmd_project(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = apply_overrides(cfg, mode=args.mode, out_dir=args.out,
                          log_compress=True if args.log_compress else None)
    cloud = read_ply(args.cloud)
    width, height = _parse_size(args.project) if args.project else (cfg.width, cfg.height)
    imap = project(cloud, width, height, mode=cfg.mode, log_compress=cfg.log_compress)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image_path = out_dir / f"image.{cfg.image_format}"
    write_image(imap, image_path, bit_depth=cfg.bit_depth)
    meta = {
        "tool": {"name": "sargeo", "version": __version__},
        "source": str(args.cloud),
        "image": {
            "file": image_path.name,
            "width": imap.width,
            "height": imap.height,
            "mode": cfg.mode,
            "log_compress": cfg.log_compress,
            "extent": list(imap.extent),
            "azimuth_deg": imap.azimuth_deg,
            "depression_deg": imap.depression_deg,
        },
        "counts": {"points": len(cloud)},
    }
    _write_metadata(out_dir / "image.json", meta)
    return 0


def _load_feature(path, name: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise MeshError(f"{name} feature file not found: {p}")
    try:
        return np.asarray(np.load(p), dtype=np.float64)
    except ValueError as exc:
        raise MeshError(f"cannot load {name} feature file {p}: {exc}") from exc


def cmd_fuse(args) -> int:
    if args.weights:
        params = load_weights(args.weights)
    else:
        params = init_fusion_params(FusionDims(), seed=args.seed or 0)
    if args.export_weights:
        save_weights(params, Path(args.export_weights).with_suffix(".json"))

    ft = _load_feature(args.ft, "text")
    fp = _load_feature(args.fp, "point")
    if args.zero_image:
        if args.style_vector:
            sub = _load_feature(args.style_vector, "style")
        else:
            sub = np.zeros(params.dims.d_image)
        fi = np.broadcast_to(sub, (ft.shape[0], params.dims.d_image)).copy() \
            if ft.ndim == 2 else sub
    elif args.fi:
        fi = _load_feature(args.fi, "image")
    else:
        raise ConfigError("either --fi or --zero-image is required")

    try:
        ft_n = project_norm(ft, "t", params)
        fp_n = project_norm(fp, "p", params)
        fi_n = project_norm(fi, "i", params)
        alpha, pre = gate_fuse(ft_n, fp_n, fi_n, params)
        film = film_modulate(pre, fi_n, params)
        refined = refine(film, params)
        final = guided_or_passthrough(refined, fi_n, params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out_prefix = Path(args.out or "fused")
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    final_path = out_prefix.with_name(out_prefix.name + "_final.npy")
    alpha_path = out_prefix.with_name(out_prefix.name + "_alpha.npy")
    np.save(final_path, final)
    np.save(alpha_path, alpha)
    print(f"wrote {final_path} and {alpha_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sargeo",
        description="Geometric SAR scattering simulator and fusion kernels",
    )
    parser.add_argument("--version", action="version", version=f"sargeo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="trace a scatter point cloud")
    sim.add_argument("--config", help="YAML config file")
    sim.add_argument("--mesh", help="mesh file (.obj or .stl)")
    sim.add_argument("--azimuth", type=float, help="azimuth angle in degrees")
    sim.add_argument("--depression", type=float, help="depression angle in degrees")
    sim.add_argument("--range", type=float, help="sensor range in model units")
    sim.add_argument("--grid-step", type=float, help="grid angular step in degrees")
    sim.add_argument("--mc-rays", type=int, help="Monte Carlo ray count (0 disables)")
    sim.add_argument("--sigma", type=float, help="Monte Carlo beam divergence (radians)")
    sim.add_argument("--mu", type=float, help="absorption coefficient")
    sim.add_argument("--zeta", type=float, help="surface roughness in [0, 1]")
    sim.add_argument("--kmax", type=int, help="maximum bounce count")
    sim.add_argument("--tau-min", type=float, help="point intensity floor")
    sim.add_argument("--rho", type=float, help="per-bounce reflectance")
    sim.add_argument("--seed", type=int, help="run seed")
    sim.add_argument("--workers", type=int, help="worker thread count")
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--sweep", help="azimuth sweep start:end:step (degrees)")
    sim.add_argument("--project", help="also write an intensity image of size WxH")
    sim.add_argument("--mode", choices=("sum", "max"), help="projection accumulation mode")
    sim.add_argument("--log-compress", action="store_true", default=None,
                     help="log-compress and normalize the image")
    sim.set_defaults(func=cmd_simulate)

    proj = sub.add_parser("project", help="project a PLY cloud to an intensity image")
    proj.add_argument("cloud", help="input point cloud (.ply)")
    proj.add_argument("--config", help="YAML config file")
    proj.add_argument("--project", help="image size WxH (defaults to config)")
    proj.add_argument("--mode", choices=("sum", "max"), help="accumulation mode")
    proj.add_argument("--log-compress", action="store_true", default=None)
    proj.add_argument("--out", help="output directory")
    proj.set_defaults(func=cmd_project)

    fuse = sub.add_parser("fuse", help="run the fusion cascade over feature files")
    fuse.add_argument("--ft", required=True, help="text feature .npy (dim d_model)")
    fuse.add_argument("--fp", required=True, help="point feature .npy (dim d_point)")
    fuse.add_argument("--fi", help="image feature .npy (dim d_image)")
    fuse.add_argument("--zero-image", action="store_true",
                      help="replace the image feature with zeros (or --style-vector)")
    fuse.add_argument("--style-vector", help="substitute image feature .npy for --zero-image")
    fuse.add_argument("--weights", help="weights manifest .json (default: seeded init)")
    fuse.add_argument("--seed", type=int, help="seed for generated weights")
    fuse.add_argument("--export-weights", help="also write the active weights to this prefix")
    fuse.add_argument("--out", help="output prefix (writes <prefix>_final.npy, <prefix>_alpha.npy)")
    fuse.set_defaults(func=cmd_fuse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    except (MeshError, OSError) as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 3
    except GeometryError as exc:
        print(f"error [geometry]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
