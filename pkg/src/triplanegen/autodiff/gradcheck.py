"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .module import Parameter
from .tensor import backward


def gradcheck(loss_fn, params: list[Parameter], eps: float = 1e-5,
              max_checks_per_param: int | None = None, seed: int = 0):
    """Compare analytic gradients of `loss_fn()` against central differences.

    loss_fn must rebuild the graph from the current parameter values on
    every call. Returns (max_rel_err, report) where report maps each
    parameter name to its worst relative error. Relative error uses a
    symmetric denominator with a floor so zero gradients compare cleanly.
    """
    for p in params:
        if p.name is None:
            raise ValueError("gradcheck needs named parameters")
        if p.dtype != np.float64:
            raise ValueError(f"gradcheck requires float64 params, {p.name} is {p.dtype}")

    analytic = backward(loss_fn(), params=params)
    rng = np.random.Generator(np.random.PCG64(seed))

    report: dict[str, float] = {}
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_checks_per_param is not None and n > max_checks_per_param:
            idxs = rng.choice(n, size=max_checks_per_param, replace=False)
        else:
            idxs = np.arange(n)
        ga = analytic[p.name].reshape(-1)
        worst = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn().data)
            flat[i] = orig - eps
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            # denominator floor absorbs f64 cancellation noise in `numeric`
            # (scale ~ ulp(loss)/eps) at entries whose true gradient is zero
            denom = max(abs(numeric) + abs(ga[i]), 1e-3)
            rel = abs(numeric - ga[i]) / denom
            worst = max(worst, rel)
        report[p.name] = worst
    max_err = max(report.values()) if report else 0.0
    return max_err, report
