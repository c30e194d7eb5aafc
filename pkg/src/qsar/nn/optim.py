"""Adam with bias correction and the cosine-annealed learning rate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .registry import ParamRegistry


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    eta_min: float = 1e-6
    epochs: int = 40
    batch_size: int = 16
    dropout_p: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    class_weighted: bool = False

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.eta_min > self.learning_rate:
            raise ValueError("eta_min must not exceed learning_rate")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def cosine_lr(t: float, T_total: float, lr: float, eta_min: float) -> float:
    """eta_min + (lr - eta_min)(1 + cos(pi t / T)) / 2, clamped to t in [0, T]."""
    if T_total <= 0:
        return lr
    t = min(max(t, 0.0), T_total)
    return eta_min + 0.5 * (lr - eta_min) * (1.0 + math.cos(math.pi * t / T_total))


class Adam:
    def __init__(self, betas=(0.9, 0.999), eps: float = 1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, registry: ParamRegistry, grads: dict[str, np.ndarray], lr: float) -> None:
        """One in-place update of every registry entry that has a gradient."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, g in grads.items():
            w = registry[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(w)
                self.v[name] = np.zeros_like(w)
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            w -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_entries(self) -> list[tuple[str, np.ndarray, str]]:
        out = [("adam.t", np.array([float(self.t)]), "state")]
        for name in self.m:
            out.append((f"adam.m.{name}", self.m[name], "state"))
            out.append((f"adam.v.{name}", self.v[name], "state"))
        return out

    def load_state(self, entries: dict[str, np.ndarray]) -> None:
        self.t = int(entries.get("adam.t", np.array([0.0]))[0])
        self.m, self.v = {}, {}
        for key, arr in entries.items():
            if key.startswith("adam.m."):
                self.m[key[len("adam.m."):]] = arr.copy()
            elif key.startswith("adam.v."):
                self.v[key[len("adam.v."):]] = arr.copy()


def adam_step(registry: ParamRegistry, grads: dict[str, np.ndarray], t: int,
              state: Optional[Adam] = None, lr: float = 1e-4) -> ParamRegistry:
    """Functional wrapper: advance ``state`` to step ``t`` and update ``registry``."""
    state = state or Adam()
    state.t = t - 1
    state.step(registry, grads, lr)
    return registry
