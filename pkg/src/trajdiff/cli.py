"""Command-line interface: train, evaluate, sweep-guidance, plot, gen-synthetic."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import torch

from .config import ConfigError, RunConfig
from .diffusion import SAMPLERS
from .evaluation import VariantMismatch

logger = logging.getLogger("trajdiff")


def _setup(args, cfg: RunConfig | None = None) -> Path:
    threads = args.threads if args.threads is not None else (cfg.threads if cfg else 1)
    torch.set_num_threads(max(1, threads))
    if args.out:
        out = Path(args.out)
    elif cfg is not None:
        out = cfg.output_dir
    else:
        raise ConfigError("no output directory: pass --out or set output_dir", "output_dir")
    out.mkdir(parents=True, exist_ok=True)
    if cfg is not None:
        # archive the config verbatim plus the command-line overrides
        (out / "config.yaml").write_text(cfg.text, encoding="utf-8")
        overrides = {k: v for k, v in vars(args).items() if k not in ("func",) and v is not None}
        (out / f"{args.command}.args.json").write_text(json.dumps(overrides, indent=2, default=str), encoding="utf-8")
    return out


def _seed(args, cfg: RunConfig) -> int:
    return args.seed if args.seed is not None else cfg.seed


def _schedule(args, cfg: RunConfig):
    sched = cfg.schedule()
    changes = {k: getattr(args, k) for k in ("sampler", "eta", "steps") if getattr(args, k, None) is not None}
    return replace(sched, **changes) if changes else sched


def _checkpoint(args, cfg: RunConfig, out: Path) -> Path:
    path = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.pt"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return path


def cmd_train(args) -> Path:
    from .training import train
    cfg = RunConfig.load(args.config)
    out = _setup(args, cfg)
    train_cfg = cfg.train_config()
    if args.threads is not None:
        train_cfg = replace(train_cfg, threads=args.threads)
    data = cfg.load_dataset()
    val = cfg.load_dataset("val_path") if "val_path" in cfg.raw["dataset"] else None
    ck = train(data, cfg.model_config(), train_cfg, _seed(args, cfg), cfg.schedule(), val_dataset=val)
    path = ck.save(out / "checkpoint.pt")
    with (out / "loss_curve.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows(enumerate(ck.meta["loss_curve"]))
    print(f"checkpoint: {path}")
    print(f"final loss: {ck.meta['loss_curve'][-1]:.6f}" if ck.meta["loss_curve"] else "final loss: n/a")
    return path


def _run_eval(args, weights) -> list:
    from .evaluation import evaluate, format_report, write_table
    from .training import Checkpoint
    cfg = RunConfig.load(args.config)
    out = _setup(args, cfg)
    ev = cfg.evaluation()
    variant = args.variant or ev["variant"]
    model = Checkpoint.load(_checkpoint(args, cfg, out)).build_model()
    data = cfg.load_dataset("val_path" if "val_path" in cfg.raw["dataset"] else "path")
    schedule = _schedule(args, cfg)
    records = [evaluate(model, data, schedule, w, ev["n_samples"], _seed(args, cfg), variant, cfg.pursuit())
               for w in weights]
    report = format_report(records)
    name = "sweep" if args.command == "sweep-guidance" else "metrics"
    write_table(records, out / f"{name}.csv")
    (out / f"{name}.txt").write_text(report + "\n", encoding="utf-8")
    print(report)
    return records


def cmd_evaluate(args):
    cfg_w = RunConfig.load(args.config).evaluation()["w"]
    return _run_eval(args, args.w or [cfg_w])


def cmd_sweep(args):
    return _run_eval(args, args.w or RunConfig.load(args.config).evaluation()["weights"])


def cmd_plot(args) -> list:
    from .evaluation import predict
    from .plotting import plot_guidance_panels
    from .training import Checkpoint
    cfg = RunConfig.load(args.config)
    out = _setup(args, cfg)
    model = Checkpoint.load(_checkpoint(args, cfg, out)).build_model()
    data = cfg.load_dataset("val_path" if "val_path" in cfg.raw["dataset"] else "path")
    by_id = {s.meta.get("scene_id"): s for s in data}
    for s in data:  # a bare file stem selects its first window
        by_id.setdefault(str(s.meta.get("scene_id")).split("@")[0], s)
    ids = args.scene or [data[0].meta.get("scene_id")]
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise LookupError(f"unknown scene id(s): {', '.join(missing)}")
    weights = args.w or [cfg.evaluation()["w"]]
    n_samples = args.samples or cfg.evaluation()["n_samples"]
    schedule = _schedule(args, cfg)
    paths = []
    for sid in ids:
        scene = [by_id[sid]]
        draws = {w: predict(model, scene, schedule, w, n_samples, _seed(args, cfg))[0] for w in weights}
        safe = str(sid).replace("/", "_")
        paths.append(plot_guidance_panels(scene[0], draws, out / "plots" / f"{safe}.svg"))
        print(paths[-1])
    return paths


def cmd_gen_synthetic(args) -> Path:
    from .scene import save_polylines, write_scene_csv
    from .scene.synthetic import generate_synthetic_tracks
    from .scene.types import SAMPLE_DT
    cfg = RunConfig.load(args.config) if args.config else None
    out = _setup(args, cfg)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    for tr in generate_synthetic_tracks(args.kind, args.n, seed):
        stem = tr.meta["scene_id"]
        write_scene_csv(out / f"{stem}.csv", tr.agent_ids, tr.classes, tr.kin, tr.present, 1.0 / SAMPLE_DT)
        save_polylines(out / f"{stem}.lanes.json", tr.polylines)
    print(f"wrote {args.n} {args.kind} scenes to {out}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajdiff", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration (YAML)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="torch intra-op threads (default 1)")
        p.add_argument("--out", help="output directory (overrides the config)")

    def sampling(p):
        p.add_argument("--checkpoint", help="defaults to <out>/checkpoint.pt")
        p.add_argument("--w", type=float, nargs="+", help="guidance weight(s) in [0, 1]")
        p.add_argument("--sampler", choices=SAMPLERS)
        p.add_argument("--eta", type=float)
        p.add_argument("--steps", type=int, help="reverse diffusion steps T")

    p = sub.add_parser("train", help="train a denoiser")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="ADE/FDE/MR of a checkpoint")
    common(p)
    sampling(p)
    p.add_argument("--variant", choices=("full", "no_motion_model", "refined"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-guidance", help="evaluate over several guidance weights")
    common(p)
    sampling(p)
    p.add_argument("--variant", choices=("full", "no_motion_model", "refined"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="SVG figures of sampled predictions")
    common(p)
    sampling(p)
    p.add_argument("--scene", nargs="+", help="scene id(s); default: the first scene")
    p.add_argument("--samples", type=int, help="samples per figure")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("gen-synthetic", help="write synthetic scene CSVs")
    common(p, config_required=False)
    p.add_argument("--kind", choices=("straight_lane_change", "circular_roundabout"), default="straight_lane_change")
    p.add_argument("--n", type=int, default=64)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        _fail("config", str(exc), exc.field_path)
        return 2
    except VariantMismatch as exc:
        _fail("config", str(exc), "evaluation.variant")
        return 2
    except (LookupError, FileNotFoundError, ValueError, FloatingPointError) as exc:
        _fail(type(exc).__name__, str(exc))
        return 1
    return 0


def _fail(kind: str, message: str, field_path: str = "") -> None:
    err = {"error": kind, "message": message}
    if field_path:
        err["path"] = field_path
    print(json.dumps(err), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
