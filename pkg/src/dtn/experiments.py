"""Glue between RunConfig and the library: datasets, runs, sweeps."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, int_list
from .data import Checkpoint, SyntheticSpec, gen_synthetic, load_embeddings
from .episodes import Dataset, EpisodeConfig, split_by_counts
from .errors import ConfigError
from .model import ModelConfig, init_model
from .schedule import ScheduleSpec, build_schedule, parse_schedule
from .trainer import (EpochRecord, EvalReport, OptimizerState, TrainConfig, TrainingRun, evaluate,
                      make_streams)

STRATEGY_ARMS = ("naive", "two_stage", "at", "oat")
# where a run writes and how it was invoked; not part of what the run computes
LOCATION_KEYS = ("out", "checkpoint", "resume", "stop_after")


def synthetic_spec(cfg: RunConfig) -> SyntheticSpec:
    return SyntheticSpec(cfg.classes, cfg.dim, cfg.samples_per_class, cfg.variation_dims,
                         cfg.variation_scale, cfg.noise_scale, cfg.data_seed)


def build_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data == "synthetic":
        raw = gen_synthetic(synthetic_spec(cfg))
    else:
        if not Path(cfg.data).is_file():
            raise ConfigError(f"dataset file not found: {cfg.data}")
        raw = load_embeddings(cfg.data)
    return split_by_counts(raw, cfg.split_counts(), merge_val=cfg.merge_val)


def episode_config(cfg: RunConfig) -> EpisodeConfig:
    return EpisodeConfig(cfg.n_way, cfg.k_shot, cfg.queries, cfg.h_gen)


def schedule_spec(cfg: RunConfig, seed: int | None = None) -> ScheduleSpec:
    seed = cfg.seed if seed is None else seed
    return ScheduleSpec(kind=cfg.schedule_kind, T=cfg.T, gamma=tuple(int_list(cfg.gamma, "gamma")),
                        at_decay=cfg.at_decay, total_epochs=cfg.epochs, aux_epochs=cfg.aux_epochs,
                        meta_epochs=cfg.meta_epochs,
                        seed=int(make_streams(seed)["schedule"].integers(2**63)))


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(aux_lr=cfg.aux_lr, meta_lr=cfg.meta_lr, momentum=cfg.momentum,
                       batch_size=cfg.batch_size, aux_steps=cfg.aux_steps,
                       episodes_per_epoch=cfg.episodes_per_epoch, eval_every=cfg.eval_every,
                       eval_episodes=cfg.eval_episodes)


def model_config(cfg: RunConfig, ds: Dataset) -> ModelConfig:
    return ModelConfig(input_dim=ds.dim, n_aux_classes=len(ds.classes_in("train")),
                       feature_dim=cfg.feature_dim, hidden=tuple(int_list(cfg.hidden, "hidden")),
                       latent_dim=cfg.latent_dim, dropout_rate=cfg.dropout, leaky_slope=cfg.leaky_slope,
                       init_temperature=cfg.init_temperature, normalize_aux_rows=cfg.normalize_aux_rows)


def new_run(cfg: RunConfig, ds: Dataset | None = None) -> TrainingRun:
    """Fresh model and optimizer; every random stream derives from ``cfg.seed``."""
    ds = build_dataset(cfg) if ds is None else ds
    streams = make_streams(cfg.seed)
    state = init_model(model_config(cfg, ds), streams["init"])
    opt = OptimizerState(cfg.aux_lr, cfg.momentum)
    return TrainingRun(state, opt, streams, build_schedule(schedule_spec(cfg)), ds,
                       episode_config(cfg), train_config(cfg))


def run_checkpoint(run: TrainingRun, cfg: RunConfig) -> Checkpoint:
    progress = {"next_epoch": run.next_epoch, "records": [r.to_dict() for r in run.records]}
    return Checkpoint(state=run.state, schedule=run.schedule_string, config={k: v for k, v in cfg.to_dict().items() if k not in LOCATION_KEYS},
                      rng_states=run.rng_states(), progress=progress, velocity=dict(run.opt.velocity))


def resume_run(ckpt: Checkpoint, ds: Dataset | None = None) -> tuple[TrainingRun, RunConfig]:
    cfg = RunConfig().updated(ckpt.config)
    ds = build_dataset(cfg) if ds is None else ds
    streams = make_streams(cfg.seed)
    opt = OptimizerState(cfg.aux_lr, cfg.momentum, {k: v.copy() for k, v in ckpt.velocity.items()})
    run = TrainingRun(ckpt.state, opt, streams, parse_schedule(ckpt.schedule), ds,
                      episode_config(cfg), train_config(cfg))
    run.restore_rng_states(ckpt.rng_states)
    run.next_epoch = int(ckpt.progress.get("next_epoch", 0))
    run.records = [EpochRecord(**r) for r in ckpt.progress.get("records", [])]
    return run, cfg


def eval_seed(seed: int) -> int:
    return int(make_streams(seed)["eval"].integers(2**63))


@dataclass
class ArmResult:
    arm: str
    seed: int
    report: EvalReport
    schedule: str


def train_and_evaluate(cfg: RunConfig, ds: Dataset | None = None, episodes: int | None = None) -> ArmResult:
    ds = build_dataset(cfg) if ds is None else ds
    run = new_run(cfg, ds)
    run.run()
    report = evaluate(run.state, ds, run.episode_cfg, cfg.episodes if episodes is None else episodes,
                      eval_seed(cfg.seed), phase="test", workers=cfg.workers)
    return ArmResult("", cfg.seed, report, run.schedule_string)


def strategy_arm(cfg: RunConfig, arm: str) -> RunConfig:
    if arm not in STRATEGY_ARMS:
        raise ConfigError(f"unknown strategy arm {arm!r}")
    return dataclasses.replace(cfg, schedule=arm)


def sweep(cfg: RunConfig, arms: dict[str, RunConfig], seeds, progress=None) -> list[ArmResult]:
    ds = build_dataset(cfg)
    results = []
    for name, arm_cfg in arms.items():
        for seed in seeds:
            res = train_and_evaluate(dataclasses.replace(arm_cfg, seed=seed), ds)
            res.arm = name
            results.append(res)
            if progress:
                progress(res)
    return results


def strategy_sweep(cfg: RunConfig, seeds, progress=None) -> list[ArmResult]:
    return sweep(cfg, {a: strategy_arm(cfg, a) for a in STRATEGY_ARMS}, seeds, progress)


def h_sweep(cfg: RunConfig, h_values, seeds, progress=None) -> list[ArmResult]:
    return sweep(cfg, {f"H={h}": dataclasses.replace(cfg, h_gen=h) for h in h_values}, seeds, progress)


def arm_statistics(results: list[ArmResult]) -> dict[str, tuple[float, float, int]]:
    """arm -> (mean accuracy, cross-seed sample std, runs)."""
    by_arm: dict[str, list[float]] = {}
    for r in results:
        by_arm.setdefault(r.arm, []).append(r.report.mean_accuracy)
    return {arm: (float(np.mean(a)), float(np.std(a, ddof=1)) if len(a) > 1 else float("nan"), len(a))
            for arm, a in by_arm.items()}

