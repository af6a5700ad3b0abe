"""Step learning-rate schedules with an optional constant warmup."""

from __future__ import annotations

from dataclasses import dataclass

from gazeconv.errors import ConfigurationError

_REL_TOL = 1e-9


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant learning rate.

    Epochs are 1-based. Epochs ``1..warmup_epochs`` use ``warmup_lr``; after
    that the rate is ``base_lr * decay_factor ** ((epoch - 1) // decay_every)``.
    Training stops after the last epoch whose rate is still >= ``stop_lr``.
    """

    base_lr: float
    decay_factor: float = 0.1
    decay_every: int = 500
    stop_lr: float = 1e-6
    warmup_lr: float | None = None
    warmup_epochs: int = 0

    def __post_init__(self):
        if self.base_lr <= 0 or self.stop_lr <= 0:
            raise ConfigurationError("learning rates must be positive")
        if not 0 < self.decay_factor < 1:
            raise ConfigurationError("decay_factor must lie in (0, 1)")
        if self.decay_every < 1:
            raise ConfigurationError("decay_every must be >= 1")
        if self.stop_lr > self.base_lr * (1 + _REL_TOL):
            raise ConfigurationError("stop_lr must not exceed base_lr")
        if self.warmup_epochs and (self.warmup_lr is None or self.warmup_lr <= 0):
            raise ConfigurationError("warmup_lr must be positive when warmup_epochs > 0")
        if self.warmup_epochs >= self.decay_every:
            raise ConfigurationError("warmup must end inside the first decay segment")

    def segment(self, epoch: int) -> int:
        return (epoch - 1) // self.decay_every

    def lr_at(self, epoch: int) -> float:
        if epoch < 1:
            raise ValueError("epochs are 1-based")
        if epoch <= self.warmup_epochs:
            return self.warmup_lr
        return self.base_lr * self.decay_factor ** self.segment(epoch)

    @property
    def num_segments(self) -> int:
        n = 0
        while self.base_lr * self.decay_factor**n >= self.stop_lr * (1 - _REL_TOL):
            n += 1
        return n

    @property
    def total_epochs(self) -> int:
        return self.num_segments * self.decay_every

    def __iter__(self):
        for epoch in range(1, self.total_epochs + 1):
            yield epoch, self.lr_at(epoch)
