"""Command-line interface: phantom generation, training, inference, evaluation,
and the HTTP service."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

DATA_ROOT_ENV = "TAGS_DATA_ROOT"


def _data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


def _parse_point(text: str):
    """Parse 'z,y,x:fg' / 'z,y,x:bg' into a PointPrompt."""
    from .points import PointPrompt

    try:
        coords, label = text.split(":")
        z, y, x = (int(v) for v in coords.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad point {text!r} (want z,y,x:fg|bg): {e}")
    if label not in ("fg", "bg"):
        raise argparse.ArgumentTypeError(f"bad point label {label!r} (want fg|bg)")
    return PointPrompt((z, y, x), "foreground" if label == "fg" else "background")


def cmd_phantom(args) -> int:
    from .io import CaseRecord, save_manifest, save_volume
    from .phantom import PhantomSpec, synth_phantom

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = ".nii.gz" if args.format == "nii" else ".svol"
    cases = []
    for i in range(args.count):
        rng = np.random.default_rng(args.seed + i)
        size = args.size
        tumor_r = args.tumor_radius + (i % 3)  # vary lesion size across cases
        spec = PhantomSpec(
            shape=(size, size, size),
            organ_radii=(0.34 * size, 0.31 * size, 0.29 * size),
            tumor_radii=(tumor_r, tumor_r, tumor_r),
        )
        image, organ, tumor = synth_phantom(spec, rng)
        name = f"phantom_{i:03d}"
        save_volume(out / f"{name}_image{ext}", image)
        save_volume(out / f"{name}_organ{ext}", organ)
        save_volume(out / f"{name}_tumor{ext}", tumor)
        cases.append(
            CaseRecord(
                image=f"{name}_image{ext}",
                organ=f"{name}_organ{ext}",
                tumor=f"{name}_tumor{ext}",
                organ_name=args.organ_name,
            )
        )
    save_manifest(out / "manifest.json", cases)
    print(f"wrote {args.count} phantom case(s) and manifest.json to {out}")
    return 0


def _load_train_config(path):
    from .pipeline import config_from_dict

    data = yaml.safe_load(Path(path).read_text()) or {}
    return config_from_dict(data)


def cmd_train(args) -> int:
    from .pipeline import load_cases, save_checkpoint, train

    cfg = _load_train_config(args.config)
    manifest = Path(args.manifest) if args.manifest else _data_root() / "manifest.json"
    cases = load_cases(manifest, cfg)
    log_path = args.log or (Path(args.out).with_suffix(".log.jsonl"))
    net, records = train(cfg, cases, log_path=log_path)
    save_checkpoint(args.out, net, cfg, step=len(records))
    print(f"trained {len(records)} steps on {len(cases)} case(s); checkpoint: {args.out}")
    print(f"final loss {records[-1]['total']:.4f} (alignment {records[-1]['alignment']:.4f})")
    return 0


def cmd_infer(args) -> int:
    from .io import load_volume, save_volume
    from .pipeline import infer, load_checkpoint
    from .points import SelectionStrategy

    net, cfg, _ = load_checkpoint(args.ckpt)
    image = load_volume(args.volume)
    organ = load_volume(args.organ, mask=True)
    if args.points:
        result = infer(image, organ, net, cfg, points=args.points)
    else:
        if not args.tumor:
            print("error: strategy-based inference needs --tumor (ground truth)", file=sys.stderr)
            return 2
        tumor = load_volume(args.tumor, mask=True)
        result = infer(
            image, organ, net, cfg,
            strategy=SelectionStrategy(args.strategy, args.n_points),
            tumor=tumor,
            rng=np.random.default_rng(args.seed),
        )
    save_volume(args.out, result.mask)
    print(f"mask: {args.out}  voxels={int(result.mask.data.sum())} "
          f"crop_offset={result.crop_offset} "
          f"points={[p.as_record() for p in result.points]}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import TABLE7_STRATEGIES, evaluate
    from .pipeline import load_cases, load_checkpoint
    from .points import SelectionStrategy
    from .report import render_table, write_report

    net, cfg, _ = load_checkpoint(args.ckpt)
    cases = load_cases(args.manifest, cfg)
    if args.strategy == "all":
        strategies = TABLE7_STRATEGIES
    else:
        strategies = [SelectionStrategy(args.strategy, args.points)]
    report = evaluate(
        cases, net, cfg, strategies=strategies, seed=args.seed,
        nsd_tolerance_mm=args.nsd_tolerance,
    )
    print(render_table(report))
    if args.out:
        paths = write_report(args.out, report)
        print(f"report written to {args.out} "
              f"({', '.join(p.name for p in [paths['records'], paths['summary']] + paths['figures'])})")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_path=args.ckpt)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tags", description="Promptable 3D tumor segmentation toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate synthetic phantom cases")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--tumor-radius", type=float, default=7.0)
    p.add_argument("--organ-name", default="kidney")
    p.add_argument("--format", choices=["nii", "svol"], default="nii")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("train", help="train from a config file and manifest")
    p.add_argument("--config", required=True, help="YAML training configuration")
    p.add_argument("--manifest", help=f"dataset manifest (default: ${DATA_ROOT_ENV}/manifest.json)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="JSONL step log path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment one volume")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--organ", required=True)
    p.add_argument("--points", type=_parse_point, nargs="*", default=[],
                   help="explicit prompts, e.g. 12,30,28:fg 4,8,8:bg")
    p.add_argument("--tumor", help="ground-truth tumor mask (strategy selection only)")
    p.add_argument("--strategy", choices=["random", "edge", "central"], default="central")
    p.add_argument("--n-points", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="strategy comparison over a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", choices=["random", "edge", "central", "all"], default="all")
    p.add_argument("--points", type=int, choices=[1, 3], default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nsd-tolerance", type=float, default=2.0, help="NSD tolerance in mm")
    p.add_argument("--out", help="directory for CSV records, table and figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the segmentation HTTP service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
