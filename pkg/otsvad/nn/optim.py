import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any

import torch
from torch import Tensor, nn

from otsvad.utils import ConfigError, DataError


class MissingGradientError(DataError):
    pass


@dataclass
class LrSchedule:
    max_lr: float = 1e-4
    warmup_steps: int = 2000
    total_steps: int = 100_000

    def __post_init__(self) -> None:
        if self.max_lr <= 0:
            msg = f"max_lr must be positive, got {self.max_lr}"
            raise ConfigError(msg)
        if not 0 <= self.warmup_steps <= self.total_steps:
            msg = f"warmup_steps ({self.warmup_steps}) must lie in [0, total_steps={self.total_steps}]"
            raise ConfigError(msg)


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear warmup from 0, then cosine annealing to 0 at ``total_steps``."""
    if step < 0:
        msg = f"step must be non-negative, got {step}"
        raise ValueError(msg)
    if step >= schedule.total_steps:
        return 0.0
    if step < schedule.warmup_steps:
        return schedule.max_lr * step / schedule.warmup_steps
    decay_steps = schedule.total_steps - schedule.warmup_steps
    progress = (step - schedule.warmup_steps) / decay_steps
    return 0.5 * schedule.max_lr * (1.0 + math.cos(math.pi * progress))


class ParameterStore:
    """Named trainable tensors with their Adam moments."""

    def __init__(
        self,
        parameters: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]],
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ) -> None:
        items = list(parameters.items()) if isinstance(parameters, Mapping) else list(parameters)
        self.parameters: dict[str, Tensor] = {}
        for name, tensor in items:
            if name in self.parameters:
                msg = f"Duplicated parameter name: {name}"
                raise ValueError(msg)
            self.parameters[name] = tensor
        self.trainable = [name for name, p in self.parameters.items() if p.requires_grad]
        self.steps = 0
        self.optimizer = torch.optim.Adam(
            [self.parameters[name] for name in self.trainable] or [torch.zeros(0, requires_grad=True)],
            lr=0.0,
            betas=betas,
            eps=eps,
            weight_decay=weight_decay,
            foreach=False,
        )

    @classmethod
    def from_module(cls, module: nn.Module, **kwargs: Any) -> "ParameterStore":
        return cls(module.named_parameters(), **kwargs)

    def moments(self, name: str) -> tuple[Tensor, Tensor] | None:
        state = self.optimizer.state.get(self.parameters[name])
        if not state:
            return None
        return state["exp_avg"], state["exp_avg_sq"]

    def state_dict(self) -> dict[str, Any]:
        return {"steps": self.steps, "optimizer": self.optimizer.state_dict()}

    def load_state_dict(self, state: Mapping[str, Any]) -> None:
        self.steps = int(state["steps"])
        self.optimizer.load_state_dict(state["optimizer"])


def adam_step(store: ParameterStore, grads: Mapping[str, Tensor | None], lr: float) -> ParameterStore:
    missing = [name for name in store.trainable if grads.get(name) is None]
    if missing:
        msg = f"Missing gradient for trainable parameters: {', '.join(missing)}"
        raise MissingGradientError(msg)
    for name in store.trainable:
        grad = grads[name]
        parameter = store.parameters[name]
        if grad is None or grad.shape != parameter.shape:
            msg = f"Gradient for {name} does not match parameter shape {tuple(parameter.shape)}"
            raise MissingGradientError(msg)
        parameter.grad = grad.detach().to(parameter.dtype)
    for group in store.optimizer.param_groups:
        group["lr"] = lr
    store.optimizer.step()
    store.steps += 1
    return store
