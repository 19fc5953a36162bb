"""Parameter containers and a small Module tree.

Modules auto-register child modules and Parameters on attribute
assignment. `named_parameters` assigns stable dotted-path identifiers
on first traversal; the same Parameter object reached through two
paths is an error (aliasing would make checkpoint keys ambiguous).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor that is trained and checkpointed under a stable name."""

    __slots__ = ("name",)

    def __init__(self, data, dtype=np.float64):
        super().__init__(np.array(data, dtype=dtype), requires_grad=True)
        self.name: str | None = None


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._modules[f"{key}.{i}"] = v
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for key, p in self._params.items():
            name = f"{prefix}{key}"
            if p.name is None:
                p.name = name
            elif p.name != name:
                raise ValueError(
                    f"parameter aliased under two names: {p.name!r} and {name!r}"
                )
            out[name] = p
        for key, m in self._modules.items():
            out.update(m.named_parameters(prefix=f"{prefix}{key}."))
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing[:4]} extra={extra[:4]}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=p.dtype)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        self._modules[str(len(self._items))] = m
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]
