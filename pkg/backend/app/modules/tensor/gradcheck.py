"""
Finite-difference gradient checking

Compares Tape.backward against central differences.
"""

import logging
from typing import Callable, Dict, Optional

import numpy as np

from backend.app.core.exceptions import NonFiniteError, SNMTError
from backend.app.modules.tensor.engine import Tape, Tensor

logger = logging.getLogger(__name__)

LossClosure = Callable[[Tape, Dict[str, Tensor]], Tensor]


def _evaluate(f: LossClosure, params: Dict[str, np.ndarray], record: bool):
    tape = Tape(record=record)
    nodes = {name: tape.parameter(name, value) for name, value in params.items()}
    loss = f(tape, nodes)
    value = loss.item()
    if not np.isfinite(value):
        raise NonFiniteError("loss closure returned a non-finite value", details={"value": value})
    return tape, loss, value


def check_gradients(
    f: LossClosure,
    params: Dict[str, np.ndarray],
    h: float = 1e-5,
    floor: float = 1e-8,
    max_elements: Optional[int] = None,
    seed: int = 0
) -> float:
    """
    Maximum relative error between analytic and central-difference gradients.

    Args:
        f: Deterministic closure building a scalar loss on the given tape
        params: Parameter arrays by name
        h: Finite-difference step, in (0, 1e-3]
        floor: Denominator floor of the relative error
        max_elements: Check at most this many elements per parameter array
            (chosen with a seeded generator); None checks all of them
        seed: Seed for element sampling

    Returns:
        max |analytic - numeric| / max(|analytic|, |numeric|, floor)
    """
    if not 0.0 < h <= 1e-3:
        raise SNMTError("finite-difference step must lie in (0, 1e-3]", details={"h": h})

    params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    tape, loss, _ = _evaluate(f, params, record=True)
    analytic = tape.backward(loss).named()

    rng = np.random.default_rng(seed)
    worst, worst_name = 0.0, None
    for name, value in params.items():
        flat_count = value.size
        if max_elements is not None and flat_count > max_elements:
            indices = np.sort(rng.choice(flat_count, size=max_elements, replace=False))
        else:
            indices = np.arange(flat_count)

        for flat in indices:
            index = np.unravel_index(flat, value.shape)
            original = value[index]
            value[index] = original + h
            _, _, plus = _evaluate(f, params, record=False)
            value[index] = original - h
            _, _, minus = _evaluate(f, params, record=False)
            value[index] = original

            numeric = (plus - minus) / (2.0 * h)
            exact = analytic[name][index]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            if error > worst:
                worst, worst_name = error, name

    logger.debug(f"Gradient check: max relative error {worst:.3e} ({worst_name})")
    return worst
