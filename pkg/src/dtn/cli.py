"""Command-line front end.

Settings resolve in increasing precedence: built-in defaults, the stored
config of ``--checkpoint`` (eval / export-embeddings only), the
``--config`` file, ``--set key=value`` pairs, then dedicated flags.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .config import RunConfig, int_list, load_config_file
from .data import gen_synthetic, load_checkpoint, save_checkpoint, write_embeddings
from .episodes import sample_episode
from .errors import (CheckpointError, ConfigError, DataError, SamplingError, TrainingAbort)
from .experiments import (arm_statistics, build_dataset, episode_config, eval_seed, h_sweep, new_run,
                          resume_run, run_checkpoint, strategy_sweep, synthetic_spec)
from .extractor import extract
from .generator import generate_batch
from .schedule import run_lengths
from .trainer import evaluate, make_streams

log = logging.getLogger("dtn")

METRIC_COLUMNS = ("epoch_index", "kind", "mean_loss", "val_accuracy", "val_ci95")
CHECKPOINT_NAME = "checkpoint.dtnc"

# flag -> RunConfig key
FLAGS = {
    "--seed": ("seed", int), "--schedule": ("schedule", str), "--n-way": ("n_way", int),
    "--k-shot": ("k_shot", int), "--queries": ("queries", int), "--h-gen": ("h_gen", int),
    "--episodes": ("episodes", int), "--out": ("out", str), "--data": ("data", str),
    "--epochs": ("epochs", int), "--checkpoint": ("checkpoint", str), "--resume": ("resume", str),
    "--stop-after": ("stop_after", int), "--ablation": ("ablation", str), "--seeds": ("seeds", int),
    "--phase": ("phase", str), "--workers": ("workers", int),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtn", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "run a training schedule; writes metrics.csv, checkpoint.dtnc, schedule.txt",
        "eval": "evaluate a checkpoint over --episodes test episodes",
        "ablate": "strategy sweep (naive/two-stage/at/oat x seeds) or H sweep",
        "gen-data": "write the synthetic dataset as an embedding file",
        "export-embeddings": "dump real/support/generated features of one episode as CSV",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        for flag, (key, typ) in FLAGS.items():
            kwargs = {"dest": key, "type": typ, "default": argparse.SUPPRESS}
            if flag == "--schedule":
                kwargs["choices"] = ("oat", "at", "naive", "two-stage", "two_stage")
            if flag == "--ablation":
                kwargs["choices"] = ("strategy", "h")
            p.add_argument(flag, **kwargs)
    return parser


def resolve_config(args: argparse.Namespace, base: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if base:
        cfg = cfg.updated({k: v for k, v in base.items() if k in RunConfig.DATA_KEYS or k in _MODEL_KEYS})
    if getattr(args, "config", None):
        cfg = cfg.updated(load_config_file(args.config))
    pairs = {}
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k] = v
    cfg = cfg.updated(pairs)
    flags = {key: getattr(args, key) for key, _ in FLAGS.values() if hasattr(args, key)}
    return cfg.updated(flags)


_MODEL_KEYS = ("feature_dim", "hidden", "latent_dim", "dropout", "leaky_slope", "init_temperature",
               "normalize_aux_rows")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _attach_log(out: Path) -> logging.Handler:
    handler = logging.FileHandler(out / "run.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger("dtn").addHandler(handler)
    logging.getLogger("dtn").setLevel(logging.INFO)
    return handler


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_metrics(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in records:
            d = r.to_dict()
            w.writerow([_fmt(d[c]) for c in METRIC_COLUMNS])


def cmd_train(cfg: RunConfig) -> int:
    if cfg.resume:
        run, stored = resume_run(load_checkpoint(cfg.resume))
        cfg = stored.updated({"out": cfg.out, "stop_after": cfg.stop_after, "resume": cfg.resume})
    else:
        run = new_run(cfg)
    out = _out_dir(cfg)
    handler = _attach_log(out)
    try:
        log.info("schedule %s (%s)", run.schedule_string, run_lengths(run.schedule))
        run.run(stop_after=cfg.stop_after if cfg.stop_after >= 0 else None)
        (out / "schedule.txt").write_text(run.schedule_string + "\n")
        write_metrics(out / "metrics.csv", run.records)
        save_checkpoint(run_checkpoint(run, cfg), out / CHECKPOINT_NAME)
        log.info("wrote %d epoch records to %s", len(run.records), out)
    finally:
        logging.getLogger("dtn").removeHandler(handler)
        handler.close()
    return 0


def _checkpoint_path(cfg: RunConfig) -> Path:
    path = Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.out) / CHECKPOINT_NAME
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    return path


def cmd_eval(cfg: RunConfig, ckpt) -> int:
    ds = build_dataset(cfg)
    report = evaluate(ckpt.state, ds, episode_config(cfg), cfg.episodes, eval_seed(cfg.seed),
                      phase=cfg.phase, workers=cfg.workers)
    out = _out_dir(cfg)
    with open(out / "eval_episodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode_index", "accuracy"))
        for i, a in enumerate(report.per_episode_accuracies):
            w.writerow((i, repr(a)))
    print(report.format())
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    handler = _attach_log(out)
    seeds = [cfg.seed + i for i in range(cfg.seeds)]

    def progress(res):
        log.info("%s seed=%d acc=%.4f ci95=%.4f schedule=%s", res.arm, res.seed,
                 res.report.mean_accuracy, res.report.ci95, run_lengths(res.schedule) or "-")

    try:
        if cfg.ablation == "strategy":
            results = strategy_sweep(cfg, seeds, progress)
        else:
            results = h_sweep(cfg, int_list(cfg.h_values, "h_values"), seeds, progress)
    finally:
        logging.getLogger("dtn").removeHandler(handler)
        handler.close()
    with open(out / "ablation_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("arm", "seed", "accuracy", "ci95"))
        for r in results:
            w.writerow((r.arm, r.seed, repr(r.report.mean_accuracy), _fmt(r.report.ci95)))
    stats = arm_statistics(results)
    with open(out / "ablation_arms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("arm", "mean_accuracy", "std_accuracy", "runs"))
        for arm, (mean, std, n) in stats.items():
            w.writerow((arm, repr(mean), _fmt(std), n))
    for arm, (mean, std, n) in stats.items():
        print(f"{arm:>10}  mean={mean:.4f}  std={'n/a' if math.isnan(std) else f'{std:.4f}'}  runs={n}")
    return 0


def cmd_gen_data(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    path = out / "embeddings.txt"
    write_embeddings(gen_synthetic(synthetic_spec(cfg)), path)
    print(path)
    return 0


def cmd_export_embeddings(cfg: RunConfig, ckpt) -> int:
    ds = build_dataset(cfg)
    ep_cfg = episode_config(cfg)
    ep = sample_episode(ds, ep_cfg, cfg.phase, make_streams(cfg.seed)["episodes"])
    state = ckpt.state
    real_idx = np.concatenate([ds.class_index[c] for c in ep.episode_classes])
    with dc.no_grad():
        z_real = extract(state.extractor, ds.x[real_idx]).data
        z_s = extract(state.extractor, ep.support_x).data
        refs = (extract(state.extractor, ep.ref1_x).data, extract(state.extractor, ep.ref2_x).data)
        z_gen = generate_batch(state.generator, z_s, refs).data
    support_classes = [ep.episode_classes[i] for i in ep.support_y]
    out = _out_dir(cfg)
    path = out / "embeddings_export.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["role", "class"] + [f"f{i}" for i in range(z_s.shape[1])])
        for c, row in zip(ds.labels[real_idx].tolist(), z_real):
            w.writerow(["real", c] + [repr(float(v)) for v in row])
        for c, row in zip(support_classes, z_s):
            w.writerow(["support", c] + [repr(float(v)) for v in row])
        h = ep.ref1_x.shape[0]
        for i, row in enumerate(z_gen):
            w.writerow(["generated", support_classes[i // h]] + [repr(float(v)) for v in row])
    print(path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("eval", "export-embeddings"):
            pre = resolve_config(args)
            ckpt = load_checkpoint(_checkpoint_path(pre))
            cfg = resolve_config(args, base=ckpt.config)
            return cmd_eval(cfg, ckpt) if args.command == "eval" else cmd_export_embeddings(cfg, ckpt)
        cfg = resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        return cmd_gen_data(cfg)
    except (ConfigError, DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingAbort, SamplingError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
