"""Command-line entry point: ``lpwtnet {gen,degrade,train,eval,flops,plot}``.

Every option can also come from a flat JSON config file (``--config``) or a
``--set key=value`` override. Precedence is command line > --set > file >
defaults, and the effective configuration is written to ``config.json`` in
the output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import channel, complexity, degradation, evaluation, plotting, scf, training
from .network import ModelConfig, build_model

log = logging.getLogger("lpwtnet")

TASK_CHOICES = ("nonuniform", "region", "uniform", "all")

# option name -> default; the flat key space shared by flags and config files
DEFAULTS = {
    "seed": 0,
    "out": None,
    "data": None,
    "checkpoint": None,
    # data generation
    "samples": 10,
    "sigma": 32,
    "area": 32.0,
    "ny": 8,
    "nz": 8,
    "slots": 64,
    "clusters": 4,
    # degradation
    "task": "region",
    "pm": 0.2,
    "region_size": 4,
    "stride": 2,
    "channel_shared": False,
    "indices": None,
    # model
    "levels_lp": 3,
    "levels_wt": 2,
    "kernel": 3,
    "n1": 5,
    "n2": 3,
    "channels": None,
    "width": 128,
    "block": "dswt",
    # training
    "iters": 150_000,
    "batch": 64,
    "lr": 1e-3,
    "full_schedule": False,
    "checkpoint_every": 0,
    # evaluation
    "zero_shot": False,
    "denormalized_metrics": False,
    "per_sample_nmse": False,
    # flops / plot
    "example": None,
    "index": 0,
    "channel_slices": "0,16,32,48",
    "loss": None,
}


class CLIError(Exception):
    pass


def _add(p, *flags, **kw):
    # defaults stay None so file values can fill in what the user did not pass
    kw.setdefault("default", None)
    p.add_argument(*flags, **kw)


def _flag(p, name, help):
    p.add_argument(name, action="store_const", const=True, default=None, help=help)


def _common(p):
    _add(p, "--config", help="flat JSON config file")
    _add(p, "--set", action="append", metavar="KEY=VALUE", help="override a config key")
    _add(p, "--seed", type=int)
    _add(p, "--out", help="output directory")


def _data_opts(p):
    _add(p, "--data", help="dataset directory")


def _task_opts(p):
    _add(p, "--task", choices=TASK_CHOICES)
    _add(p, "--pm", type=float, help="non-uniform missing probability")
    _add(p, "--region-size", dest="region_size", type=int)
    _add(p, "--stride", type=int)
    _flag(p, "--channel-shared", "share the non-uniform mask across channels")


def _model_opts(p):
    _add(p, "--levels-lp", dest="levels_lp", type=int)
    _add(p, "--levels-wt", dest="levels_wt", type=int)
    _add(p, "--kernel", type=int)
    _add(p, "--n1", type=int)
    _add(p, "--n2", type=int)
    _add(p, "--width", type=int, help="hidden width of both branches")
    _add(p, "--block", choices=("dswt", "conv", "conv_sa"))


def _gen_opts(p):
    _add(p, "--samples", type=int)
    _add(p, "--sigma", type=int)
    _add(p, "--area", type=float, help="side of the square area in meters")
    _add(p, "--ny", type=int)
    _add(p, "--nz", type=int)
    _add(p, "--slots", type=int, help="time slots per cell; 0 gives the exact CPAS")
    _add(p, "--clusters", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpwtnet", description=__doc__.splitlines()[0])
    _add(parser, "-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a ground-truth sCF dataset")
    _common(p)
    _gen_opts(p)

    p = sub.add_parser("degrade", help="write degraded samples and masks for inspection")
    _common(p)
    _data_opts(p)
    _task_opts(p)
    _add(p, "--indices", help="comma-separated sample indices (default: test split)")

    p = sub.add_parser("train", help="train LPWTNet on one task (or each task with --task all)")
    _common(p)
    _data_opts(p)
    _task_opts(p)
    _model_opts(p)
    _add(p, "--iters", type=int)
    _add(p, "--batch", type=int)
    _add(p, "--lr", type=float, help="peak learning rate")
    _flag(p, "--full-schedule", "use the unscaled 5k warm-up / 50k decay schedule")
    _add(p, "--checkpoint-every", dest="checkpoint_every", type=int)

    p = sub.add_parser("eval", help="NMSE/MSE against the degraded-input baseline")
    _common(p)
    _data_opts(p)
    _task_opts(p)
    _model_opts(p)
    _add(p, "--checkpoint", help="checkpoint directory (default: untrained model)")
    _flag(p, "--zero-shot", "evaluate only on tasks other than the training task")
    _flag(p, "--denormalized-metrics", "report metrics in raw sCF units")
    _flag(p, "--per-sample-nmse", "average per-sample NMSE instead of the ratio of sums")

    p = sub.add_parser("flops", help="analytic complexity table")
    _common(p)
    _model_opts(p)
    _add(p, "--sigma", type=int)
    _add(p, "--ny", type=int)
    _add(p, "--nz", type=int)
    _add(p, "--example", choices=("paper",), help="print the 256x256 single-channel worked example")

    p = sub.add_parser("plot", help="render sCF channel slices and/or loss curves")
    _common(p)
    _data_opts(p)
    _task_opts(p)
    _add(p, "--checkpoint")
    _add(p, "--index", type=int, help="sample index to plot")
    _add(p, "--channel-slices", dest="channel_slices", help="comma-separated channel indices")
    _add(p, "--loss", action="append", help="loss.csv to plot (repeatable)")
    return parser


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, --set overrides and explicit flags."""
    cfg = dict(DEFAULTS)
    layers = []
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
            raise CLIError("config file must be a flat JSON object")
        layers.append(("config file", data))
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CLIError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip().replace("-", "_")] = _parse_value(value)
    layers.append(("--set", overrides))
    for source, layer in layers:
        unknown = sorted(set(layer) - set(DEFAULTS))
        if unknown:
            raise CLIError(f"unknown config key(s) in {source}: {', '.join(unknown)}")
        cfg.update(layer)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["task"] not in TASK_CHOICES:
        raise CLIError(f"task must be one of {TASK_CHOICES}")
    return cfg


def _out_dir(cfg, default: str) -> Path:
    return Path(cfg["out"] or default)


def _write_snapshot(out: Path, command: str, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps({"command": command, **cfg}, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")


def _specs(cfg) -> list:
    tasks = ["nonuniform", "region", "uniform"] if cfg["task"] == "all" else [cfg["task"]]
    return [degradation.DegradationSpec(degradation.TASKS_BY_NAME[t], p_m=cfg["pm"], region_size=cfg["region_size"],
                                        stride=cfg["stride"], channel_shared=bool(cfg["channel_shared"]),
                                        seed=cfg["seed"])
            for t in tasks]


def _model_config(cfg, n_channels: int) -> ModelConfig:
    return ModelConfig(channels=n_channels, pyramid_levels=cfg["levels_lp"], wt_levels=cfg["levels_wt"],
                       kernel_size=cfg["kernel"], n1=cfg["n1"], n2=cfg["n2"], low_width=cfg["width"],
                       mask_width=cfg["width"], block=cfg["block"])


def _dataset(cfg) -> scf.Dataset:
    if not cfg["data"]:
        raise CLIError("--data is required")
    path = Path(cfg["data"])
    if not (path / "manifest.json").exists():
        raise CLIError(f"no dataset at {path}")
    return scf.Dataset(path)


def cmd_gen(cfg) -> int:
    out = _out_dir(cfg, "dataset")
    gen = scf.GeneratorConfig(
        grid=scf.GridSpec(area_size=cfg["area"], resolution=cfg["sigma"]),
        array=channel.ArrayGeometry(n_y=cfg["ny"], n_z=cfg["nz"]),
        clusters=channel.ClusterConfig(num_clusters=cfg["clusters"]),
        slots=cfg["slots"] or None)
    ds = scf.generate_dataset(out, gen, cfg["samples"], cfg["seed"])
    _write_snapshot(out, "gen", cfg)
    m = ds.manifest
    print(f"wrote {m.sample_count} samples of shape {m.sample_shape} to {out} "
          f"({len(m.train_indices)} train / {len(m.test_indices)} test)")
    return 0


def cmd_degrade(cfg) -> int:
    ds = _dataset(cfg)
    out = _out_dir(cfg, "degraded")
    if cfg["indices"]:
        ids = np.array([int(i) for i in str(cfg["indices"]).split(",")], dtype=np.int64)
        if ids.min() < 0 or ids.max() >= len(ds):
            raise CLIError(f"indices must lie in [0, {len(ds)})")
    else:
        ids = np.asarray(ds.manifest.test_indices, dtype=np.int64)
    clean = ds.normalized(ids)
    tmp = out.with_name(out.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    np.save(tmp / "indices.npy", ids)
    for spec in _specs(cfg):
        masks = np.stack([degradation.make_mask(spec.for_sample(int(i)), clean.shape[1:]) for i in ids])
        np.save(tmp / f"{spec.name}_observed.npy", clean * masks)
        np.save(tmp / f"{spec.name}_mask.npy", masks)
        print(f"{spec.name}: {len(ids)} samples, kept fraction {masks.mean():.4f}")
    _write_snapshot(tmp, "degrade", cfg)
    if out.exists():
        shutil.rmtree(out)
    tmp.replace(out)
    return 0


def _train_config(cfg, spec) -> training.TrainConfig:
    kw = dict(batch_size=cfg["batch"], base_lr=cfg["lr"], seed=cfg["seed"], task=spec,
              checkpoint_every=cfg["checkpoint_every"])
    if cfg["full_schedule"]:
        return training.TrainConfig(iterations=cfg["iters"], **kw)
    return training.TrainConfig.scaled(cfg["iters"], **kw)


def cmd_train(cfg) -> int:
    ds = _dataset(cfg)
    out = _out_dir(cfg, "run")
    _write_snapshot(out, "train", cfg)
    model_cfg = _model_config(cfg, ds.manifest.n_channels)
    specs = _specs(cfg)
    for spec in specs:
        run_dir = out / spec.name if len(specs) > 1 else out
        tc = _train_config(cfg, spec)
        trainer = training.Trainer(ds, model_cfg, tc)
        log.info("training on %s for %d iterations", spec.name, tc.iterations)
        history = trainer.run(run_dir)
        first = np.mean([r.loss for r in history[:100]])
        last = np.mean([r.loss for r in history[-100:]])
        print(f"{spec.name}: {tc.iterations} iterations, loss {first:.4g} -> {last:.4g}; "
              f"checkpoint {run_dir / 'checkpoint'}")
    return 0


def cmd_eval(cfg) -> int:
    ds = _dataset(cfg)
    out = _out_dir(cfg, "eval")
    if cfg["checkpoint"]:
        model, meta, _ = training.load_checkpoint(cfg["checkpoint"])
        trained = meta["train_config"]["task"]["task"] if meta.get("train_config") else None
    else:
        model = build_model(_model_config(cfg, ds.manifest.n_channels), seed=cfg["seed"])
        trained = None
    if cfg["zero_shot"] and trained is None:
        raise CLIError("--zero-shot needs a trained --checkpoint")
    specs = _specs(cfg)
    if cfg["zero_shot"] and cfg["task"] != "all":
        specs = _specs(dict(cfg, task="all"))
    report = evaluation.evaluate(model, ds, specs, zero_shot=bool(cfg["zero_shot"]), trained_task=trained,
                                 denormalized=bool(cfg["denormalized_metrics"]),
                                 per_sample=bool(cfg["per_sample_nmse"]))
    _write_snapshot(out, "eval", cfg)
    evaluation.write_report(report, out)
    print(report.table())
    return 0


def cmd_flops(cfg) -> int:
    if cfg["example"] == "paper":
        for name, value in complexity.kernel_comparison_example().items():
            print(f"{name:<40}{value:>14,}  ({value / 1e6:.1f} M)")
        return 0
    model_cfg = _model_config(cfg, cfg["ny"] * cfg["nz"] if cfg["channels"] is None else cfg["channels"])
    model_cfg.check_input((1, model_cfg.channels, cfg["sigma"], cfg["sigma"]))
    flops = complexity.analytic_flops(model_cfg, cfg["sigma"], cfg["sigma"])
    params = complexity.analytic_params(model_cfg)
    print(f"{'component':<14}{'MACs':>16}{'params':>12}")
    for name in flops:
        print(f"{name:<14}{flops[name]:>16,}{params[name]:>12,}")
    print(f"{'total':<14}{sum(flops.values()):>16,}{sum(params.values()):>12,}")
    print(f"WTConv receptive field: {complexity.receptive_field(cfg['kernel'], cfg['levels_wt'])} pixels per side")
    if cfg["out"]:
        out = Path(cfg["out"])
        _write_snapshot(out, "flops", cfg)
        (out / "flops.json").write_text(json.dumps({"flops": flops, "params": params}, indent=2) + "\n",
                                        encoding="utf-8")
    return 0


def cmd_plot(cfg) -> int:
    out = _out_dir(cfg, "plots")
    made = []
    if cfg["loss"]:
        paths = cfg["loss"] if isinstance(cfg["loss"], list) else [cfg["loss"]]
        traces = {Path(p).parent.name or p: training.read_loss_trace(p) for p in paths}
        made.append(plotting.plot_loss(traces, out / "loss.png"))
    if cfg["data"]:
        ds = _dataset(cfg)
        idx = cfg["index"]
        if not 0 <= idx < len(ds):
            raise CLIError(f"index must lie in [0, {len(ds)})")
        channels = [int(c) for c in str(cfg["channel_slices"]).split(",")]
        if max(channels) >= ds.manifest.n_channels or min(channels) < 0:
            raise CLIError(f"channel indices must lie in [0, {ds.manifest.n_channels})")
        clean = ds.normalized([idx])
        model = training.load_checkpoint(cfg["checkpoint"])[0] if cfg["checkpoint"] else None
        for spec in _specs(cfg):
            observed = training.degraded_batch(clean, [idx], spec)
            rows = {"ground truth": clean[0], f"{spec.name} input": observed[0]}
            if model is not None:
                rows["restored"] = evaluation.predict(model, observed)[0]
            made.append(plotting.plot_slices(rows, channels, out / f"slices_{idx}_{spec.name}.png"))
    if not made:
        raise CLIError("nothing to plot: pass --data and/or --loss")
    _write_snapshot(out, "plot", cfg)
    for path in made:
        print(f"wrote {path}")
    return 0


COMMANDS = {"gen": cmd_gen, "degrade": cmd_degrade, "train": cmd_train, "eval": cmd_eval,
            "flops": cmd_flops, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (CLIError, ValueError, FloatingPointError, OSError, KeyError) as exc:
        print(f"lpwtnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
