"""
Backtracking stepsize search with growth factor gamma and slack delta
"""

import logging
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import BacktrackingError, ParameterError

logger = logging.getLogger(__name__)

THETA_FLOOR = 1e-300


class BacktrackResult(NamedTuple):
    theta: float
    trials: int
    x_plus: np.ndarray


def backtrack(theta: float, loss, x: np.ndarray, direction: np.ndarray,
              gamma: float = 1.0, delta: float = 1.0) -> BacktrackResult:
    """
    Start from gamma * theta and halve until

        f(x+) <= f(x) + <grad f(x), x+ - x> + delta / (2 theta+) ||x+ - x||^2

    with x+ = x + theta+ * direction. Ties accept.
    """
    if theta <= 0:
        raise ParameterError(f"Stepsize must be positive, got {theta}")
    if gamma < 1:
        raise ParameterError(f"Growth factor must be >= 1, got {gamma}")
    if not 0 < delta <= 1:
        raise ParameterError(f"delta must lie in (0, 1], got {delta}")

    fx = loss.value(x)
    grad = loss.gradient(x)

    theta_plus = gamma * theta
    x_plus = x + theta_plus * direction
    trials = 1
    while True:
        step = x_plus - x
        bound = fx + grad @ step + delta / (2.0 * theta_plus) * (step @ step)
        if not loss.value(x_plus) > bound:
            break
        theta_plus *= 0.5
        if theta_plus < THETA_FLOOR:
            logger.error(f"Backtracking underflow after {trials} trials")
            raise BacktrackingError(
                f"Trial stepsize fell below {THETA_FLOOR:g} after {trials} trials; "
                "the loss is not smooth along this direction"
            )
        x_plus = x + theta_plus * direction
        trials += 1

    return BacktrackResult(theta=theta_plus, trials=trials, x_plus=x_plus)


def decrease_count(thetas: Sequence[float]) -> int:
    """Number of k with theta^{k+1} < theta^k."""
    thetas = np.asarray(thetas, dtype=float)
    return int(np.count_nonzero(thetas[1:] < thetas[:-1]))
