"""
Training loop

Clips are sampled per epoch with a growing clip length, batched, and
accumulated over ``accumulate`` batches per optimizer step. Each step clips
the global gradient norm and runs AdamW at the cosine-decayed learning rate.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch

from src.algorithms.model import build_model
from src.algorithms.utils import batch_loss, sequence_targets
from src.operators.augment import augment_clip
from src.problem.checkpoint import checkpoint_save
from src.problem.split import clip_count, clip_to_raw_sequence, sample_clips
from src.utils import LOGGER
from src.utils.errors import DataError, NumericError


@dataclass
class TrainConfig:
    batch_size: int = 4
    epochs: int = 7
    clip_lengths: tuple[int, ...] = (4, 8, 16, 32, 64, 128)
    max_clip_length: int = 128
    lr: float = 2e-4
    min_lr: float = 1e-6
    warmup_steps: int = 0
    weight_decay: float = 5e-4
    grad_clip: float = 1.0
    accumulate: int = 32
    min_interval: int = 1
    max_interval: int = 10
    clips_per_sequence: int = 0
    flip_prob: float = 0.5
    appearance_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.epochs, self.accumulate, self.max_clip_length) < 1:
            raise ValueError(f"batch_size, epochs, accumulate and max_clip_length must be >= 1: {self}")
        if not self.clip_lengths or min(self.clip_lengths) < 1:
            raise ValueError(f"clip_lengths must be non-empty and positive, got {self.clip_lengths}")
        if not (1 <= self.min_interval <= self.max_interval):
            raise ValueError(f"need 1 <= min_interval <= max_interval, got {self.min_interval}, {self.max_interval}")
        if not (0.0 <= self.min_lr <= self.lr):
            raise ValueError(f"need 0 <= min_lr <= lr, got {self.min_lr}, {self.lr}")
        if self.weight_decay < 0 or self.appearance_jitter < 0 or not (0.0 <= self.flip_prob <= 1.0):
            raise ValueError(f"invalid regularization settings: {self}")

    def clip_length(self, epoch):
        """Clip length of a 1-based epoch; epochs past the schedule keep its last entry."""
        length = self.clip_lengths[min(epoch, len(self.clip_lengths)) - 1]
        return min(length, self.max_clip_length)


def lr_cosine_schedule(t, alpha_max, alpha_min, warmup_steps, cosine_steps):
    """
    Cosine learning rate with optional linear warmup

    Args:
        t: step number, 0-based
        warmup_steps: steps of linear warmup from 0 to alpha_max
        cosine_steps: step at which the rate reaches alpha_min

    Returns:
        learning rate at step t
    """
    if warmup_steps > 0 and t < warmup_steps:
        return (t / warmup_steps) * alpha_max
    if t >= cosine_steps:
        return alpha_min if cosine_steps > warmup_steps else alpha_max
    frac = (t - warmup_steps) / (cosine_steps - warmup_steps)
    return alpha_min + 0.5 * (1.0 + math.cos(math.pi * frac)) * (alpha_max - alpha_min)


def make_optimizer(model, config):
    return torch.optim.AdamW(model.parameters(), lr=config.lr, betas=(0.9, 0.999), eps=1e-8,
                             weight_decay=config.weight_decay)


@dataclass
class TrainResult:
    model: object
    epoch_losses: list = field(default_factory=list)
    log: pd.DataFrame = None


class Trainer:
    """
    Args:
        sequences: list of Sequence with identities and appearance vectors in ``gt``
        model_config: ModelConfig
        config: TrainConfig
        checkpoint_path: where the final (or last good) checkpoint goes
        log_path: CSV log of (step, epoch, lr, loss)
    """

    def __init__(self, sequences, model_config, config=None, checkpoint_path=None, log_path=None):
        if not sequences:
            raise DataError("training needs at least one sequence")
        self.sequences = list(sequences)
        self.model_config = model_config
        self.config = config or TrainConfig()
        self.checkpoint_path = checkpoint_path
        self.log_path = log_path
        longest = max(self.config.clip_length(e) for e in range(1, self.config.epochs + 1))
        if longest > model_config.max_window:
            raise ValueError(f"clip length {longest} exceeds the model's max_window={model_config.max_window}")

    def steps_per_epoch(self, epoch):
        length = self.config.clip_length(epoch)
        n_clips = sum(clip_count(s, length, self.config.clips_per_sequence) for s in self.sequences)
        n_batches = math.ceil(n_clips / self.config.batch_size)
        return math.ceil(n_batches / self.config.accumulate)

    def total_steps(self):
        return sum(self.steps_per_epoch(e) for e in range(1, self.config.epochs + 1))

    def sample_epoch(self, epoch, rng):
        cfg = self.config
        length = cfg.clip_length(epoch)
        clips = []
        for seq in self.sequences:
            n = clip_count(seq, length, cfg.clips_per_sequence)
            clips.extend(sample_clips(seq, length, n, rng, cfg.min_interval, cfg.max_interval))
        order = rng.permutation(len(clips))
        return [clips[i] for i in order]

    def prepare(self, clips, rng):
        cfg = self.config
        raws = []
        for clip in clips:
            clip, vectors = augment_clip(clip, rng, cfg.flip_prob, cfg.appearance_jitter)
            raws.append(clip_to_raw_sequence(clip, vectors))
        return raws, [sequence_targets(r) for r in raws]

    def run(self):
        cfg = self.config
        torch.manual_seed(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        self.model = build_model(self.model_config, seed=cfg.seed).train()
        self.optimizer = make_optimizer(self.model, cfg)
        self.last_good = self.model.numpy_state()
        self.records = []
        total = self.total_steps()
        LOGGER.info(f"Training on {len(self.sequences)} sequences - {cfg.epochs} epochs - {total} optimizer steps")

        step = 0
        epoch_losses = []
        try:
            for epoch in range(1, cfg.epochs + 1):
                clips = self.sample_epoch(epoch, rng)
                batches = [clips[i:i + cfg.batch_size] for i in range(0, len(clips), cfg.batch_size)]
                self.optimizer.zero_grad(set_to_none=True)
                losses, pending = [], []
                for b, batch_clips in enumerate(batches):
                    raws, targets = self.prepare(batch_clips, rng)
                    loss = batch_loss(self.model, raws, targets)
                    if not torch.isfinite(loss):
                        raise NumericError(f"non-finite loss in epoch {epoch}, batch {b + 1}")
                    if loss.requires_grad:
                        (loss / cfg.accumulate).backward()
                    losses.append(loss.item())
                    pending.append(loss.item())
                    if (b + 1) % cfg.accumulate == 0 or b == len(batches) - 1:
                        self.optimizer_step(step, total, epoch, float(np.mean(pending)))
                        step += 1
                        pending = []

                mean_loss = float(np.mean(losses)) if losses else 0.0
                epoch_losses.append(mean_loss)
                LOGGER.info(f"Epoch {epoch}/{cfg.epochs} - clip length {cfg.clip_length(epoch)} - mean loss {mean_loss:.4f}")
        except NumericError as e:
            LOGGER.error(f"Training diverged at step {step}: {e}")
            if self.checkpoint_path is not None:
                checkpoint_save(self.checkpoint_path, self.last_good, self.model_config)
                LOGGER.error(f"Last good parameters written to {self.checkpoint_path}")
            self.write_log()
            raise

        self.model.eval()
        if self.checkpoint_path is not None:
            checkpoint_save(self.checkpoint_path, self.model.numpy_state(), self.model_config)
        log = self.write_log()
        return TrainResult(self.model, epoch_losses, log)

    def optimizer_step(self, step, total, epoch, loss):
        cfg = self.config
        lr = lr_cosine_schedule(step, cfg.lr, cfg.min_lr, cfg.warmup_steps, total - 1)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        if cfg.grad_clip > 0:
            norm = torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg.grad_clip)
            if not torch.isfinite(norm):
                raise NumericError(f"non-finite gradient norm at step {step}")
        self.optimizer.step()
        self.optimizer.zero_grad(set_to_none=True)
        self.model.assert_finite()
        self.last_good = self.model.numpy_state()
        self.records.append({"step": step, "epoch": epoch, "lr": lr, "loss": loss})

    def write_log(self):
        log = pd.DataFrame(self.records, columns=["step", "epoch", "lr", "loss"])
        if self.log_path is not None:
            log.to_csv(self.log_path, index=False)
        return log


def train(sequences, model_config, config=None, checkpoint_path=None, log_path=None):
    return Trainer(sequences, model_config, config, checkpoint_path, log_path).run()
