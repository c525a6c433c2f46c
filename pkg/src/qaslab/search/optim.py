"""First-order optimizers operating on flat angle vectors."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import NumericalError

OPTIMIZERS = ("gd", "adam", "diag-natural-gd")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
# Regularizer added to the diagonal metric before inversion.
NATURAL_EPS = 0.05


def optimizer_step(
    kind: str,
    params: np.ndarray,
    gradient: np.ndarray,
    state: Optional[dict] = None,
    lr: float = 0.05,
    metric: Optional[np.ndarray] = None,
):
    """One update. Returns ``(new_params, new_state)``; inputs are not modified.

    ``state`` is the optimizer's own bookkeeping (Adam moments); pass back
    whatever the previous call returned.  ``diag-natural-gd`` needs ``metric``,
    the diagonal of the Fubini-Study tensor for the same parameters.
    """
    params = np.asarray(params, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    if params.shape != gradient.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, gradient {gradient.shape}")
    if not np.all(np.isfinite(gradient)):
        raise NumericalError("non-finite gradient")
    if lr <= 0:
        raise ValueError("learning rate must be positive")

    if kind == "gd":
        return params - lr * gradient, state
    if kind == "adam":
        if state is None:
            state = {"m": np.zeros_like(params), "v": np.zeros_like(params), "t": 0}
        t = state["t"] + 1
        m = ADAM_BETA1 * state["m"] + (1 - ADAM_BETA1) * gradient
        v = ADAM_BETA2 * state["v"] + (1 - ADAM_BETA2) * gradient**2
        m_hat = m / (1 - ADAM_BETA1**t)
        v_hat = v / (1 - ADAM_BETA2**t)
        new = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        return new, {"m": m, "v": v, "t": t}
    if kind == "diag-natural-gd":
        if metric is None:
            raise ValueError("diag-natural-gd needs the metric diagonal")
        metric = np.asarray(metric, dtype=float)
        if metric.shape != params.shape:
            raise ValueError("metric shape does not match params")
        return params - lr * gradient / (metric + NATURAL_EPS), state
    raise ValueError(f"unknown optimizer {kind!r}; choose from {OPTIMIZERS}")
