"""Auxiliary and meta epochs, schedule execution and episodic evaluation."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .episodes import Dataset, Episode, EpisodeConfig, sample_aux_batch, sample_episode
from .errors import DegenerateInputError, TrainingAbort
from .extractor import extract
from .generator import generate_batch
from .metaclassifier import auxiliary_loss, build_proxies, meta_loss, score_query
from .model import AUX_GROUPS, META_GROUPS, ModelState
from .schedule import EpochKind, ScheduleSpec, build_schedule, to_string

log = logging.getLogger(__name__)

STREAMS = ("data", "init", "episodes", "aux", "dropout", "schedule", "eval")


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one root seed."""
    return {name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            for i, name in enumerate(STREAMS)}


@dataclass
class TrainConfig:
    aux_lr: float = 0.05
    meta_lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    aux_steps: int = 200
    episodes_per_epoch: int = 200
    # lr halves at these fractions of the run (units 4 and 5 of the 6-unit OAT run)
    lr_milestones: tuple[float, ...] = (0.5, 2 / 3)
    eval_every: int = 0
    eval_episodes: int = 100
    max_skip_fraction: float = 0.01


@dataclass
class OptimizerState:
    """SGD with momentum; one velocity buffer per parameter name."""
    learning_rate: float = 0.05
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, dc.Tensor], lr: float | None = None) -> None:
        lr = self.learning_rate if lr is None else lr
        for name, p in params.items():
            v = self.velocity.get(name)
            v = p.grad.copy() if v is None else self.momentum * v + p.grad
            self.velocity[name] = v
            p.data = p.data - lr * v


def lr_scale(epoch_index: int, total_epochs: int, milestones) -> float:
    passed = sum(1 for m in milestones if epoch_index >= round(m * total_epochs))
    return 0.5 ** passed


def _check_finite(loss: dc.Tensor, params: dict[str, dc.Tensor], step: int, lr: float, what: str):
    if not np.isfinite(loss.data):
        raise TrainingAbort(f"{what}: non-finite loss at step {step} (lr={lr})")
    bad = [n for n, p in params.items() if not np.all(np.isfinite(p.data))]
    if bad:
        raise TrainingAbort(f"{what}: non-finite parameters {bad} after step {step} (lr={lr})")


def run_auxiliary_epoch(state: ModelState, ds: Dataset, batch_size: int, steps: int,
                        opt: OptimizerState, rng: np.random.Generator, lr: float | None = None):
    """Conventional classification over all train classes; updates extractor + aux head."""
    lr = opt.learning_rate if lr is None else lr
    params = state.named_parameters(AUX_GROUPS)
    losses = []
    for step in range(steps):
        dc.zero_grad(params.values())
        x, y = sample_aux_batch(ds, batch_size, rng)
        loss = auxiliary_loss(extract(state.extractor, x, training=True), state.aux_head, y)
        dc.backward(loss)
        opt.step(params, lr)
        state.step_count += 1
        _check_finite(loss, params, step, lr, "auxiliary epoch")
        losses.append(float(loss.data))
    dc.zero_grad(params.values())
    return state, (float(np.mean(losses)) if losses else math.nan)


def episode_loss(state: ModelState, ep: Episode, training: bool,
                 dropout_rng: np.random.Generator | None = None) -> dc.Tensor:
    """Meta loss of one episode: extract -> generate -> proxies -> cosine scores."""
    n_s, n_q, h = len(ep.support_y), len(ep.query_y), ep.ref1_x.shape[0]
    z = extract(state.extractor, np.concatenate([ep.support_x, ep.query_x, ep.ref1_x, ep.ref2_x]),
                training=training)
    z_s = dc.take_rows(z, np.arange(n_s))
    z_q = dc.take_rows(z, np.arange(n_s, n_s + n_q))
    z_gen = generate_batch(state.generator, z_s,
                           (dc.take_rows(z, np.arange(n_s + n_q, n_s + n_q + h)),
                            dc.take_rows(z, np.arange(n_s + n_q + h, n_s + n_q + 2 * h))),
                           training=training, rng=dropout_rng)
    proxies = build_proxies(z_s, z_gen, ep.support_y, ep.n_way, ep.episode_classes)
    return meta_loss(score_query(z_q, proxies), state.meta_alpha, ep.query_y)


def run_meta_epoch(state: ModelState, ds: Dataset, cfg: EpisodeConfig, episodes: int,
                   opt: OptimizerState, rng: np.random.Generator, lr: float | None = None,
                   dropout_rng: np.random.Generator | None = None, max_skip_fraction: float = 0.01):
    """Episodic training; updates extractor + generator + meta temperature."""
    lr = opt.learning_rate if lr is None else lr
    dropout_rng = rng if dropout_rng is None else dropout_rng
    params = state.named_parameters(META_GROUPS)
    losses, skipped = [], 0
    for i in range(episodes):
        dc.zero_grad(params.values())
        ep = sample_episode(ds, cfg, "train", rng)
        try:
            loss = episode_loss(state, ep, training=True, dropout_rng=dropout_rng)
        except DegenerateInputError as exc:
            # zero-norm feature or proxy, e.g. dropout cleared a whole generated row
            skipped += 1
            log.warning("skipping episode %d: %s", i, exc)
            if skipped > max_skip_fraction * episodes:
                raise TrainingAbort(f"{skipped} of {episodes} episodes had degenerate features or proxies") from exc
            continue
        dc.backward(loss)
        opt.step(params, lr)
        state.step_count += 1
        _check_finite(loss, params, i, lr, "meta epoch")
        losses.append(float(loss.data))
    dc.zero_grad(params.values())
    return state, (float(np.mean(losses)) if losses else math.nan)


# -- evaluation ----------------------------------------------------------------------


@dataclass
class EvalReport:
    mean_accuracy: float
    ci95: float
    episode_count: int
    per_episode_accuracies: list[float]

    @classmethod
    def from_accuracies(cls, accs) -> "EvalReport":
        accs = [float(a) for a in accs]
        n = len(accs)
        mean = float(np.mean(accs)) if n else math.nan
        ci = 1.96 * float(np.std(accs, ddof=1)) / math.sqrt(n) if n > 1 else math.nan
        return cls(mean, ci, n, accs)

    def format(self) -> str:
        ci = "n/a" if math.isnan(self.ci95) else f"{self.ci95:.4f}"
        return f"{self.mean_accuracy:.4f} ± {ci}"


def episode_accuracy(state: ModelState, ep: Episode) -> float:
    with dc.no_grad():
        n_s, n_q, h = len(ep.support_y), len(ep.query_y), ep.ref1_x.shape[0]
        z = extract(state.extractor, np.concatenate([ep.support_x, ep.query_x, ep.ref1_x, ep.ref2_x]))
        z_gen = generate_batch(state.generator, z.data[:n_s],
                               (z.data[n_s + n_q:n_s + n_q + h], z.data[n_s + n_q + h:]))
        proxies = build_proxies(z.data[:n_s], z_gen, ep.support_y, ep.n_way)
        scores = score_query(z.data[n_s:n_s + n_q], proxies).data
    return float(np.mean(scores.argmax(axis=1) == ep.query_y))


def evaluate(state: ModelState, ds: Dataset, cfg: EpisodeConfig, episode_count: int,
             seed: int | np.random.Generator = 0, phase: str = "test", workers: int = 1) -> EvalReport:
    """Mean accuracy with a 95% interval over seeded test episodes.

    Episode ``i`` draws from its own child seed, so the report does not
    depend on ``workers``.
    """
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    children = np.random.SeedSequence(seed).spawn(episode_count)

    def one(child):
        return episode_accuracy(state, sample_episode(ds, cfg, phase, np.random.default_rng(child)))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            accs = list(pool.map(one, children))
    else:
        accs = [one(c) for c in children]
    return EvalReport.from_accuracies(accs)


# -- schedule driver -----------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch_index: int
    kind: str
    mean_loss: float
    val_accuracy: float | None = None
    val_ci95: float | None = None

    def to_dict(self) -> dict:
        return {"epoch_index": self.epoch_index, "kind": self.kind, "mean_loss": self.mean_loss,
                "val_accuracy": self.val_accuracy, "val_ci95": self.val_ci95}


@dataclass
class TrainingRun:
    """Everything needed to continue a schedule exactly where it stopped."""
    state: ModelState
    opt: OptimizerState
    streams: dict[str, np.random.Generator]
    schedule: list[EpochKind]
    ds: Dataset
    episode_cfg: EpisodeConfig
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    next_epoch: int = 0
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.next_epoch >= len(self.schedule)

    def run_epoch(self) -> EpochRecord:
        e = self.next_epoch
        kind = self.schedule[e]
        tc = self.train_cfg
        scale = lr_scale(e, len(self.schedule), tc.lr_milestones)
        if kind is EpochKind.AUX:
            _, loss = run_auxiliary_epoch(self.state, self.ds, tc.batch_size, tc.aux_steps, self.opt,
                                          self.streams["aux"], lr=tc.aux_lr * scale)
        else:
            _, loss = run_meta_epoch(self.state, self.ds, self.episode_cfg, tc.episodes_per_epoch,
                                     self.opt, self.streams["episodes"], lr=tc.meta_lr * scale,
                                     dropout_rng=self.streams["dropout"],
                                     max_skip_fraction=tc.max_skip_fraction)
        rec = EpochRecord(e, kind.value, loss)
        if tc.eval_every and (e + 1) % tc.eval_every == 0 and self.ds.classes_in("val"):
            report = evaluate(self.state, self.ds, self.episode_cfg, tc.eval_episodes,
                              self.streams["eval"], phase="val")
            rec.val_accuracy, rec.val_ci95 = report.mean_accuracy, report.ci95
        log.info("epoch %d %s loss=%.4f", e, kind.value, loss)
        self.records.append(rec)
        self.next_epoch += 1
        return rec

    def run(self, stop_after: int | None = None) -> list[EpochRecord]:
        """Run remaining epochs, or only up to epoch index ``stop_after`` (exclusive)."""
        end = len(self.schedule) if stop_after is None else min(stop_after, len(self.schedule))
        while self.next_epoch < end:
            self.run_epoch()
        return self.records

    @property
    def schedule_string(self) -> str:
        return to_string(self.schedule)

    def rng_states(self) -> dict:
        return {name: g.bit_generator.state for name, g in self.streams.items()}

    def restore_rng_states(self, states: dict) -> None:
        for name, st in states.items():
            self.streams[name].bit_generator.state = st


def run_schedule(state: ModelState, spec, ds: Dataset, cfg: EpisodeConfig, opt: OptimizerState,
                 streams: dict[str, np.random.Generator] | int,
                 train_cfg: TrainConfig | None = None) -> tuple[ModelState, list[EpochRecord]]:
    """Dispatch each epoch kind of ``spec`` (a ScheduleSpec or an epoch-kind list) in order."""
    schedule = build_schedule(spec) if isinstance(spec, ScheduleSpec) else list(spec)
    if isinstance(streams, int):
        streams = make_streams(streams)
    run = TrainingRun(state, opt, streams, schedule, ds, cfg, train_cfg or TrainConfig())
    run.run()
    return state, run.records
