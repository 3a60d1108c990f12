"""
Adam with global-norm gradient clipping
"""

import logging
from typing import Dict, Tuple

import numpy as np

from backend.app.core.exceptions import NonFiniteError
from backend.app.modules.model.parameters import ModelParameters
from backend.app.modules.training.schemas import AdamState

logger = logging.getLogger(__name__)


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Rescale gradients so their global L2 norm is at most max_norm.

    Args:
        grads: Gradient per parameter name
        max_norm: Norm bound; 0 disables clipping

    Returns:
        (possibly rescaled gradients, norm before clipping)
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm <= 0 or norm <= max_norm:
        return grads, norm
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}, norm


def adam_step(params: ModelParameters, grads: Dict[str, np.ndarray], state: AdamState) -> ModelParameters:
    """
    One bias-corrected Adam update, theta - lr * m_hat / (sqrt(v_hat) + eps).

    Args:
        params: Current parameters (left untouched)
        grads: Gradient per parameter name
        state: Optimizer state, updated in place

    Returns:
        Updated parameters

    Raises:
        NonFiniteError: A gradient contains NaN or infinity; nothing is updated
    """
    bad = [name for name, g in grads.items() if not np.isfinite(g).all()]
    if bad:
        raise NonFiniteError("non-finite gradients, batch aborted", details={"parameters": sorted(bad)})

    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    updated: Dict[str, np.ndarray] = {}
    for name, g in grads.items():
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name], state.v[name] = m, v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = params[name] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.replace(updated)
