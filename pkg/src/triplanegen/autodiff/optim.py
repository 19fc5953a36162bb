"""Adam optimizer with per-group learning rates.

Keeps first/second moment state keyed by parameter name so it can be
embedded in checkpoints and restored for bit-exact resume.
"""

from __future__ import annotations

import numpy as np

from .module import Parameter


class Adam:
    def __init__(self, param_groups, betas=(0.9, 0.999), eps: float = 1e-8):
        """param_groups: list of {"params": [Parameter...], "lr": float}."""
        self.groups = []
        seen: set[str] = set()
        for g in param_groups:
            params = list(g["params"])
            for p in params:
                if p.name is None:
                    raise ValueError("parameters must be named (call named_parameters first)")
                if p.name in seen:
                    raise ValueError(f"parameter {p.name!r} appears in two groups")
                seen.add(p.name)
            self.groups.append({"params": params, "lr": float(g["lr"])})
        self.b1, self.b2 = betas
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.b1**t
        bc2 = 1.0 - self.b2**t
        for group in self.groups:
            lr = group["lr"]
            for p in group["params"]:
                g = grads.get(p.name)
                if g is None:
                    continue
                m = self.m.get(p.name)
                if m is None:
                    m = np.zeros_like(p.data)
                    self.m[p.name] = m
                    self.v[p.name] = np.zeros_like(p.data)
                v = self.v[p.name]
                m *= self.b1
                m += (1.0 - self.b1) * g
                v *= self.b2
                v += (1.0 - self.b2) * (g * g)
                mhat = m / bc1
                vhat = v / bc2
                p.data = p.data - lr * mhat / (np.sqrt(vhat) + self.eps)

    def set_lr(self, lr: float, group_index: int | None = None) -> None:
        if group_index is None:
            for g in self.groups:
                g["lr"] = float(lr)
        else:
            self.groups[group_index]["lr"] = float(lr)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"step_count": np.array([self.step_count], dtype=np.float64)}
        for name, arr in self.m.items():
            out[f"m.{name}"] = arr.copy()
        for name, arr in self.v.items():
            out[f"v.{name}"] = arr.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(state["step_count"][0])
        self.m = {k[2:]: np.array(v) for k, v in state.items() if k.startswith("m.")}
        self.v = {k[2:]: np.array(v) for k, v in state.items() if k.startswith("v.")}
