"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .data import DatasetError, SyntheticSceneSpec, generate_scene, load_dataset, preset, save_dataset
from .gradcheck import run_gradcheck
from .metrics import psnr, ssim
from .model import SceneModel
from .rasterizer import export_f32
from .restoration import acs_white_balance, restore_view
from .scene import Camera, save_png
from .training import TrainConfig, TrainingDivergedError, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def read_kv_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _spec_from_args(args) -> SyntheticSceneSpec:
    overrides = {}
    if args.config:
        fields = {f.name: f for f in dataclasses.fields(SyntheticSceneSpec)}
        for key, raw in read_kv_file(args.config).items():
            if key not in fields:
                raise UsageError(f"unknown scene key {key!r}")
            default = getattr(SyntheticSceneSpec(), key)
            if isinstance(default, tuple):
                overrides[key] = tuple(float(v) for v in raw.replace(",", " ").split())
            elif isinstance(default, str):
                overrides[key] = raw
            elif isinstance(default, int):
                overrides[key] = int(raw)
            elif default is None or isinstance(default, float):
                overrides[key] = float(raw)
    for key, attr in (("n_gaussians", "gaussians"), ("n_cameras", "cameras"), ("kind", "kind")):
        if getattr(args, attr) is not None:
            overrides[key] = getattr(args, attr)
    if args.size is not None:
        overrides["width"] = overrides["height"] = args.size
    overrides["seed"] = args.seed
    return preset(args.preset, **overrides)


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    ds, _ = generate_scene(spec)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} views ({spec.width}x{spec.height}, {spec.n_gaussians} Gaussians) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    updates = {"seed": args.seed}
    if args.iters is not None:
        updates["iterations"] = args.iters
    if args.no_medium:
        updates["use_medium"] = False
    config = dataclasses.replace(config, **updates)
    result = train(ds, config, out_dir=args.out)
    final = result.metrics[-1] if result.metrics else None
    if final:
        print(f"iterations={final['iteration']} loss={final['loss_total']:.6f} "
              f"heldout_psnr={final['psnr_heldout']:.2f} gaussians={final['num_gaussians']}")
    print(f"checkpoint: {Path(args.out) / 'checkpoint.bin'}")
    return EXIT_OK


def _camera(spec: str, data: str | None) -> Camera:
    if Path(spec).is_file():
        return Camera.from_dict(json.loads(Path(spec).read_text()))
    try:
        idx = int(spec)
    except ValueError as exc:
        raise UsageError(f"--camera must be a view index or a JSON file, got {spec!r}") from exc
    if data is None:
        raise UsageError("--camera given as an index needs --data")
    records = json.loads((Path(data) / "cameras.json").read_text())
    if not 0 <= idx < len(records):
        raise UsageError(f"camera index {idx} out of range (0..{len(records) - 1})")
    return Camera.from_dict(records[idx])


def cmd_render(args) -> int:
    model = load_checkpoint(args.checkpoint)
    state = model.render_image(_camera(args.camera, args.data))
    save_png(args.out, state.image)
    if args.f32:
        export_f32(args.f32, state.render)
    return EXIT_OK


def cmd_restore(args) -> int:
    model = load_checkpoint(args.checkpoint)
    restored = restore_view(model, _camera(args.camera, args.data))
    save_png(args.out, restored if args.no_acs else acs_white_balance(restored))
    return EXIT_OK


def evaluate(model: SceneModel, ds) -> list[dict]:
    rows = []
    for i, cam in enumerate(ds.cameras):
        state = model.render_image(cam)
        row = {
            "view_id": i,
            "psnr_render": psnr(state.image, ds.images[i]),
            "ssim_render": ssim(state.image, ds.images[i]),
            "psnr_restored": "",
            "ssim_restored": "",
        }
        if ds.clean_images is not None:
            restored = acs_white_balance(state.object_color)
            row["psnr_restored"] = psnr(restored, ds.clean_images[i])
            row["ssim_restored"] = ssim(restored, ds.clean_images[i])
        rows.append(row)
    return rows


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    rows = evaluate(model, load_dataset(args.data))
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    print(f"mean psnr_render={np.mean([r['psnr_render'] for r in rows]):.2f} dB")
    return EXIT_OK


def medium_report(model: SceneModel, ds, bins: int = 16) -> list[dict]:
    """Per-view fitted veiling light and depth-binned transmission curves."""
    if not model.use_medium:
        raise ValueError("checkpoint was trained without the medium module")
    rows = []
    for i, cam in enumerate(ds.cameras):
        state = model.render_image(cam)
        med = state.medium
        z = med.z.reshape(-1)
        att = med.attenuation.reshape(-1, 3)
        bsc = med.backscatter.reshape(-1, 3)
        b_inf = med.params.B_inf.reshape(-1, 3).mean(axis=0)
        edges = np.linspace(z.min(), z.max(), bins + 1)
        which = np.clip(np.searchsorted(edges, z, side="right") - 1, 0, bins - 1)
        for b in range(bins):
            sel = which == b
            if not sel.any():
                continue
            rows.append(
                {
                    "view_id": i,
                    "z": float(z[sel].mean()),
                    **{f"attenuation_{c}": float(att[sel, k].mean()) for k, c in enumerate("rgb")},
                    **{f"backscatter_{c}": float(bsc[sel, k].mean()) for k, c in enumerate("rgb")},
                    **{f"B_inf_{c}": float(b_inf[k]) for k, c in enumerate("rgb")},
                }
            )
    return rows


def cmd_medium_report(args) -> int:
    rows = medium_report(load_checkpoint(args.checkpoint), load_dataset(args.data), args.bins)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(args.seed, args.scenes)
    for line in report.lines():
        print(line)
    print(f"{report.scenes} scenes in {report.seconds:.1f}s: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aquasplat", description="Underwater Gaussian splatting toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic underwater dataset")
    p.add_argument("--preset", default="paper")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--kind", choices=["plane", "spheres", "room"])
    p.add_argument("--gaussians", type=int)
    p.add_argument("--cameras", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--config", help="key = value file of scene settings")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a model to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="run")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="key = value file of training settings")
    p.add_argument("--no-medium", action="store_true", help="identity medium ablation")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render the underwater image of a view")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--camera", required=True, help="view index (with --data) or camera JSON")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--f32", help="also write color, depth and alpha as float32")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("restore", help="render the water-free scene")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--camera", required=True, help="view index (with --data) or camera JSON")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--no-acs", action="store_true", help="skip white balancing")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("eval", help="per-view quality metrics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="metrics.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("medium-report", help="dump fitted medium curves as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="medium.csv")
    p.add_argument("--bins", type=int, default=16)
    p.set_defaults(func=cmd_medium_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, TrainingDivergedError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
