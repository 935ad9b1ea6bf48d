"""MSE loss, Adam, the stepped learning-rate schedule, and the training loop.

An iteration processes one batch; an epoch is a fixed number of iterations.
Each epoch draws its data through a generator seeded by (seed, epoch), so a
run resumed from a checkpoint at an epoch boundary retraces the exact
sample stream of an uninterrupted run.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointIOError, ConfigError, ShapeError
from .lightfield import LightField, stack_views
from .model import Model, forward, net_backward, net_forward
from .tensor import Tensor

Sampler = Callable[[np.random.Generator, int], list[LightField]]

DEFAULT_LR_SCHEDULE = ((0, 0.001), (30, 0.0005), (60, 0.0002), (90, 0.0001))


@dataclass
class TrainConfig:
    batch_size: int = 4
    iterations_per_epoch: int = 30
    lr_schedule: tuple[tuple[int, float], ...] = DEFAULT_LR_SCHEDULE
    total_epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 10

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations_per_epoch < 1:
            raise ConfigError(f"iterations_per_epoch must be >= 1, got {self.iterations_per_epoch}")
        if self.total_epochs < 0:
            raise ConfigError(f"total_epochs must be >= 0, got {self.total_epochs}")
        sched = tuple((int(e), float(lr)) for e, lr in self.lr_schedule)
        if not sched:
            raise ConfigError("lr_schedule must not be empty")
        if sched[0][0] != 0:
            raise ConfigError(f"lr_schedule must start at epoch 0, got {sched[0][0]}")
        epochs = [e for e, _ in sched]
        lrs = [lr for _, lr in sched]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError(f"lr_schedule epochs must be strictly increasing: {epochs}")
        if any(b >= a for a, b in zip(lrs, lrs[1:])):
            raise ConfigError(f"lr_schedule rates must be strictly decreasing: {lrs}")
        self.lr_schedule = sched


@dataclass
class AdamState:
    """First/second-moment accumulators keyed like Model.named_parameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init_for(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_mse: float
    test_mse: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def save_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "lr", "train_mse", "test_mse"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.lr), repr(r.train_mse),
                                 "" if r.test_mse is None else repr(r.test_mse)])

    @classmethod
    def load_csv(cls, path: Path | str) -> "TrainHistory":
        records = []
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                records.append(EpochRecord(
                    epoch=int(row["epoch"]), lr=float(row["lr"]),
                    train_mse=float(row["train_mse"]),
                    test_mse=float(row["test_mse"]) if row["test_mse"] else None))
        return cls(records)


def mse_loss(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    grad = diff * np.asarray(2.0 / diff.size, dtype=diff.dtype)
    return loss, grad


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, *, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> None:
    """One bias-corrected Adam update, applied to the parameters in place."""
    if set(params) != set(state.m):
        raise ConfigError("adam state does not match the parameter set")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, expected {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= (lr * m_hat / (np.sqrt(v_hat) + epsilon)).astype(p.dtype)


def lr_for_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Rate of the latest schedule entry whose start epoch is <= epoch."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    current = cfg.lr_schedule[0][1]
    for start, lr in cfg.lr_schedule:
        if start <= epoch:
            current = lr
    return current


def stack_batch(batch: Sequence[LightField]) -> Tensor:
    return np.concatenate([stack_views(lf) for lf in batch], axis=0)


def train_iteration(model: Model, batch: Sequence[LightField], state: AdamState,
                    lr: float, *, beta1: float = 0.9, beta2: float = 0.999,
                    epsilon: float = 1e-8) -> float:
    """Forward, MSE against the input, full backward, one Adam step."""
    if not model.training:
        raise ConfigError("train_iteration requires the model in train mode")
    x = stack_batch(batch)
    y, cache = net_forward(model, x, want_cache=True)
    loss, grad = mse_loss(y, x)
    grads = net_backward(model, cache, grad)
    adam_step(model.named_parameters(), grads, state, lr,
              beta1=beta1, beta2=beta2, epsilon=epsilon)
    return loss


def _test_mse(model: Model, fields: Sequence[LightField]) -> float:
    model.eval()
    try:
        total = 0.0
        for lf in fields:
            rec = forward(model, lf)
            total += float(np.mean(np.square(rec.views.astype(np.float64) -
                                             lf.views.astype(np.float64))))
        return total / len(fields)
    finally:
        model.train()


def train(model: Model, sampler: Sampler, cfg: TrainConfig, *,
          test_fields: Sequence[LightField] | None = None,
          checkpoint_dir: Path | str | None = None,
          state: AdamState | None = None,
          start_epoch: int = 0,
          log: Callable[[EpochRecord], None] | None = None) -> TrainHistory:
    """Run the epoch/iteration loop and return the per-epoch history.

    With ``checkpoint_dir`` set, a checkpoint lands every
    ``cfg.checkpoint_every`` epochs.  Resuming: load the checkpoint, pass
    its optimizer state and ``start_epoch``; the per-epoch generator
    seeding makes the continuation bit-identical to a straight run.
    """
    from .codec_io import write_checkpoint  # deferred: codec_io imports model

    model.train()
    if state is None:
        state = AdamState.init_for(model.named_parameters())
    history = TrainHistory()
    for epoch in range(start_epoch, cfg.total_epochs):
        lr = lr_for_epoch(cfg, epoch)
        rng = np.random.default_rng([cfg.seed, epoch])
        losses = []
        for _ in range(cfg.iterations_per_epoch):
            batch = sampler(rng, cfg.batch_size)
            losses.append(train_iteration(model, batch, state, lr,
                                          beta1=cfg.beta1, beta2=cfg.beta2,
                                          epsilon=cfg.epsilon))
        record = EpochRecord(epoch=epoch, lr=lr, train_mse=float(np.mean(losses)))
        if test_fields:
            record.test_mse = _test_mse(model, test_fields)
        history.records.append(record)
        if log is not None:
            log(record)
        if checkpoint_dir is not None and cfg.checkpoint_every > 0 \
                and (epoch + 1) % cfg.checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"checkpoint_epoch{epoch + 1:04d}.lfck"
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                write_checkpoint(model, state, path)
            except OSError as e:
                raise CheckpointIOError(f"cannot write checkpoint {path}: {e}") from e
    return history
