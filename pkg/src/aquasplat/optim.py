"""Adam over a dict of named numpy arrays, updated in place."""

from __future__ import annotations

from typing import Callable

import numpy as np


class Adam:
    """Bias-corrected Adam with per-parameter learning rates.

    ``lr`` maps a parameter name to either a float or a callable of the step
    count; names absent from the map use ``default_lr``. Arrays listed in
    ``unit_rows`` are renormalized row-wise after each update (quaternions).
    """

    def __init__(
        self,
        lr: dict[str, float | Callable[[int], float]] | None = None,
        default_lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        unit_rows: tuple[str, ...] = (),
    ):
        self.lr = dict(lr or {})
        self.default_lr = default_lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.unit_rows = set(unit_rows)
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def learning_rate(self, name: str) -> float:
        lr = self.lr.get(name, self.default_lr)
        return float(lr(self.step_count)) if callable(lr) else float(lr)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name in sorted(grads):
            g = grads[name]
            p = params[name]
            if name not in self.m or self.m[name].shape != p.shape:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate(name) * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if name in self.unit_rows:
                p /= np.linalg.norm(p, axis=-1, keepdims=True)

    def remap_rows(self, names: list[str], source: np.ndarray) -> None:
        """Re-index per-row moments after the row set changed.

        ``source[i]`` is the old row feeding new row ``i``, or ``-1`` for a
        fresh row that starts with zero moments.
        """
        source = np.asarray(source)
        fresh = source < 0
        for name in names:
            for store in (self.m, self.v):
                if name not in store:
                    continue
                old = store[name]
                new = old[np.where(fresh, 0, source)]
                new[fresh] = 0.0
                store[name] = new

    def state_dict(self) -> dict:
        return {"m": self.m, "v": self.v, "step": self.step_count}


def exponential_decay(lr_init: float, lr_final: float, max_steps: int) -> Callable[[int], float]:
    """Log-linear interpolation from ``lr_init`` to ``lr_final``."""

    def schedule(step: int) -> float:
        t = np.clip(step / max(max_steps, 1), 0.0, 1.0)
        return float(np.exp(np.log(lr_init) * (1 - t) + np.log(lr_final) * t))

    return schedule
