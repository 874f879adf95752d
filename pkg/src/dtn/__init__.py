"""Diversity-transfer few-shot learning on a small numpy autodiff core."""

from .diffcore import Tensor, backward, no_grad, tensor
from .episodes import Dataset, Episode, EpisodeConfig, sample_episode, split_dataset
from .model import ModelConfig, ModelState, init_model
from .schedule import EpochKind, ScheduleSpec, build_schedule
from .trainer import EvalReport, OptimizerState, TrainConfig, evaluate, run_schedule

__version__ = "0.1.0"
