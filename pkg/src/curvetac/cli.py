"""curvetac command line: bake fields, synthesise depth fixtures, render
tactile frames, compare datasets, and export field visualisations.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure. Binary outputs are written atomically (temp file + rename), so a
non-zero exit never leaves a partial artifact behind.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baker import (DEFAULT_SNAP_DISTANCE, BakeJob, bake, load_light_field,
                    save_light_field)
from .config import METHODS, load_sensor_config
from .depth import DepthMap, SpherePrimitive, read_depth, synth_depth, write_depth
from .errors import ConfigError, CurvetacError, FormatError, MeshError, \
    NumericalError
from .metrics import dataset_compare
from .ply import write_direction_ply
from .render import read_png, render_frame, write_png

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_jobs() -> int:
    env = os.environ.get("CURVETAC_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _say(msg: str):
    print(msg, file=sys.stderr)


def _atomic_bytes(path: Path, payload: bytes):
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_png(path: Path, image: np.ndarray):
    import io

    buf = io.BytesIO()
    from PIL import Image

    Image.fromarray(image, mode="RGB").save(buf, format="PNG", optimize=False,
                                            compress_level=6)
    _atomic_bytes(path, buf.getvalue())


def build_parser() -> _Parser:
    parser = _Parser(prog="curvetac",
                     description="camera-based tactile sensor simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bake", help="bake per-pixel light-direction fields")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--ref-depth", required=True,
                   help="no-contact reference depth map (PFM + sidecar)")
    p.add_argument("--out", required=True, help="output TLFB light-map")
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--snap-distance", type=float, default=DEFAULT_SNAP_DISTANCE,
                   help="max point-to-mesh distance in metres (default 0.002)")

    p = sub.add_parser("render", help="render tactile frames from depth maps")
    p.add_argument("--config", required=True)
    p.add_argument("--fields", required=True, help="baked TLFB light-map")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--depth", help="single depth map (PFM)")
    g.add_argument("--depth-dir", help="directory of depth maps (PFM)")
    p.add_argument("--out", required=True, help="output PNG (or directory)")
    p.add_argument("--ambient", default="none",
                   help="none | solid:#rrggbb | background")
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--force", action="store_true",
                   help="proceed on mesh-hash mismatch")

    p = sub.add_parser("synth-depth", help="ray-cast a synthetic depth fixture")
    p.add_argument("--config", required=True)
    p.add_argument("--primitive", choices=["sphere"])
    p.add_argument("--radius", type=float)
    p.add_argument("--pos", help="sphere centre as X,Y,Z (metres, camera frame)")
    p.add_argument("--none", action="store_true", dest="no_primitive",
                   help="membrane only (reference capture)")
    p.add_argument("--out", required=True, help="output PFM (+ JSON sidecar)")

    p = sub.add_parser("compare", help="score real vs simulated image datasets")
    p.add_argument("--real", required=True)
    p.add_argument("--sim", required=True)
    p.add_argument("--out", required=True, help="output JSON report")

    p = sub.add_parser("field-viz", help="export a light field as a PLY point cloud")
    p.add_argument("--fields", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output PLY")
    p.add_argument("--light", type=int, default=0, help="light index to export")
    return parser


def cmd_bake(args, parser) -> int:
    sensor = load_sensor_config(args.config)
    depth, sidecar = read_depth(args.ref_depth)
    cam = sensor.camera
    if (depth.height, depth.width) != (cam.height, cam.width):
        _say(f"error: reference depth is {depth.width}x{depth.height}, camera is "
             f"{cam.width}x{cam.height}")
        return EXIT_DATA
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    job = BakeJob(sensor=sensor, method=args.method, ref_depth=depth,
                  jobs=args.jobs, snap_distance=args.snap_distance)
    fld = bake(job)
    save_light_field(fld, args.out)
    _say(fld.report.summary())
    _say(f"wrote {args.out}")
    return EXIT_OK


def _parse_ambient(spec_str: str, sensor):
    if spec_str == "none":
        return None
    if spec_str.startswith("solid:"):
        raw = spec_str[len("solid:"):].lstrip("#")
        if len(raw) != 6:
            raise ConfigError(f"--ambient solid colour must be #rrggbb, got {spec_str!r}")
        try:
            rgb = [int(raw[i:i + 2], 16) / 255.0 for i in (0, 2, 4)]
        except ValueError:
            raise ConfigError(f"--ambient: bad hex colour {spec_str!r}") from None
        return np.array(rgb)
    if spec_str == "background":
        if sensor.background is None:
            raise ConfigError("--ambient background requires a 'background' "
                              "image in the sensor config")
        img = read_png(sensor.background)
        cam = sensor.camera
        if img.shape[:2] != (cam.height, cam.width):
            raise ConfigError(f"background image is {img.shape[1]}x{img.shape[0]}, "
                              f"camera is {cam.width}x{cam.height}")
        return img
    raise ConfigError(f"--ambient must be none, solid:#rrggbb or background, "
                      f"got {spec_str!r}")


_RENDER_CTX: dict = {}


def _render_one(name: str):
    sensor = _RENDER_CTX["sensor"]
    depth, _ = read_depth(Path(_RENDER_CTX["depth_dir"]) / name)
    img = render_frame(depth, sensor, _RENDER_CTX["fields"],
                       ambient=_RENDER_CTX["ambient"], d_ref=_RENDER_CTX["d_ref"])
    out = Path(_RENDER_CTX["out_dir"]) / (Path(name).stem + ".png")
    _atomic_png(out, img)
    return name


def cmd_render(args, parser) -> int:
    sensor = load_sensor_config(args.config)
    fields = load_light_field(args.fields)
    cam = sensor.camera
    if (fields.height, fields.width) != (cam.height, cam.width):
        _say(f"error: fields are {fields.width}x{fields.height}, camera is "
             f"{cam.width}x{cam.height}")
        return EXIT_DATA
    mesh_hash = sensor.aligned_mesh().content_hash()
    if fields.mesh_hash and fields.mesh_hash != mesh_hash:
        if args.force:
            _say("warning: light-map mesh hash does not match the config mesh "
                 "(continuing because of --force)")
        else:
            _say("error: light-map mesh hash does not match the config mesh; "
                 "re-bake or pass --force")
            return EXIT_DATA
    ambient = _parse_ambient(args.ambient, sensor)
    d_ref = sensor.reference_depth()

    if args.depth:
        depth, _ = read_depth(args.depth)
        if (depth.height, depth.width) != (cam.height, cam.width):
            _say(f"error: depth map is {depth.width}x{depth.height}, camera is "
                 f"{cam.width}x{cam.height}")
            return EXIT_DATA
        img = render_frame(depth, sensor, fields, ambient=ambient, d_ref=d_ref)
        _atomic_png(Path(args.out), img)
        _say(f"wrote {args.out}")
        return EXIT_OK

    src_dir = Path(args.depth_dir)
    names = sorted(p.name for p in src_dir.glob("*.pfm"))
    if not names:
        _say(f"error: no .pfm files in {src_dir}")
        return EXIT_DATA
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _RENDER_CTX.clear()
    _RENDER_CTX.update(sensor=sensor, fields=fields, ambient=ambient,
                       d_ref=d_ref, depth_dir=str(src_dir), out_dir=str(out_dir))
    if args.jobs <= 1 or len(names) == 1:
        for name in names:
            _render_one(name)
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=args.jobs, mp_context=ctx) as pool:
            list(pool.map(_render_one, names))
    _RENDER_CTX.clear()
    _say(f"rendered {len(names)} frames into {out_dir}")
    return EXIT_OK


def cmd_synth_depth(args, parser) -> int:
    sensor = load_sensor_config(args.config)
    if args.no_primitive:
        primitive = None
    else:
        if args.primitive != "sphere":
            parser.error("choose --primitive sphere (with --radius/--pos) or --none")
        if args.radius is None or args.pos is None:
            parser.error("--primitive sphere requires --radius and --pos")
        if args.radius <= 0:
            parser.error("--radius must be positive")
        try:
            centre = [float(x) for x in args.pos.split(",")]
            if len(centre) != 3:
                raise ValueError
        except ValueError:
            parser.error("--pos must be X,Y,Z")
        primitive = SpherePrimitive(center=np.array(centre), radius=args.radius)
    depth = synth_depth(sensor.camera, membrane=sensor.aligned_mesh(),
                        primitive=primitive)
    out = Path(args.out)
    tmp = out.with_name(out.name + ".tmp")
    write_depth(tmp, depth, sensor.camera.z_near, sensor.camera.z_far)
    os.replace(str(tmp) + ".json", str(out) + ".json")
    os.replace(tmp, out)
    _say(f"wrote {out} (+ sidecar)")
    return EXIT_OK


def cmd_compare(args, parser) -> int:
    report = dataset_compare(args.real, args.sim)
    _atomic_bytes(Path(args.out), report.to_json().encode("utf-8"))
    agg = report.aggregate()
    _say(f"{agg['pair_count']} pairs: MAE {agg['mae_percent']}%  SSIM {agg['ssim']}"
         f"  PSNR {agg['psnr_db'] if agg['psnr_db'] is not None else 'inf'} dB")
    if report.unmatched_real or report.unmatched_sim:
        _say(f"unmatched: {len(report.unmatched_real)} real, "
             f"{len(report.unmatched_sim)} sim (listed in the report)")
    _say(f"wrote {args.out}")
    return EXIT_OK


def cmd_field_viz(args, parser) -> int:
    sensor = load_sensor_config(args.config)
    fields = load_light_field(args.fields)
    cam = sensor.camera
    if (fields.height, fields.width) != (cam.height, cam.width):
        _say(f"error: fields are {fields.width}x{fields.height}, camera is "
             f"{cam.width}x{cam.height}")
        return EXIT_DATA
    if not 0 <= args.light < fields.num_lights:
        _say(f"error: --light must be in [0, {fields.num_lights})")
        return EXIT_DATA
    mesh_hash = sensor.aligned_mesh().content_hash()
    if fields.mesh_hash and fields.mesh_hash != mesh_hash:
        _say("warning: light-map mesh hash does not match the config mesh")
    from .depth import inverse_project
    from .mesh import closest_surface_points

    ref = sensor.reference_depth()
    cloud = inverse_project(ref, cam)
    dirs = fields.data[args.light].reshape(-1, 3).astype(np.float64)
    valid = np.linalg.norm(dirs, axis=1) > 0.5
    pts = cloud.points.reshape(-1, 3)[valid]
    _, _, pos, _ = closest_surface_points(sensor.aligned_mesh(), pts)
    out = Path(args.out)
    tmp = out.with_name(out.name + ".tmp")
    write_direction_ply(tmp, pos, dirs[valid])
    os.replace(tmp, out)
    _say(f"wrote {out}: {int(valid.sum())} points (light {args.light}, "
         f"{fields.method})")
    return EXIT_OK


_COMMANDS = {
    "bake": cmd_bake,
    "render": cmd_render,
    "synth-depth": cmd_synth_depth,
    "compare": cmd_compare,
    "field-viz": cmd_field_viz,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, parser)
    except NumericalError as exc:
        _say(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (ConfigError, MeshError, FormatError) as exc:
        _say(f"error: {exc}")
        return EXIT_DATA
    except ValueError as exc:
        _say(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
