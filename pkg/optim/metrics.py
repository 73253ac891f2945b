"""
Fixed points, merit functions, ergodic averages and rate diagnostics
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConvergenceError, DimensionError, ParameterError
from .graph_topology import GossipMatrix
from .losses import LossFamily, centralized_solve

logger = logging.getLogger(__name__)

MIN_FIT_ROWS = 10


@dataclass(frozen=True)
class FixedPoint:
    x_star: np.ndarray
    X_star: np.ndarray
    Y_star: np.ndarray
    f_star: float
    family: Optional[LossFamily] = None

    @property
    def m(self) -> int:
        return self.X_star.shape[0]


def fixed_point(family: LossFamily, gm: Optional[GossipMatrix] = None, tol: float = 1e-8,
                max_iter: int = 10000) -> FixedPoint:
    """(X*, Y*) = (1 x*^T, -grad F(1 x*^T)) around the centralized minimizer x*."""
    if gm is not None and gm.w.shape[0] != family.m:
        raise DimensionError(f"Gossip matrix has {gm.w.shape[0]} agents, loss family has {family.m}")

    x_star = centralized_solve(family, tol=tol, max_iter=max_iter)
    X_star = np.tile(x_star, (family.m, 1))
    Y_star = -family.stacked_gradient(X_star)

    drift = float(np.linalg.norm(Y_star.sum(axis=0)))
    if drift > family.m * tol:
        logger.warning(f"Fixed point dual sums to {drift:.3e}, above {family.m * tol:.1e}")
    return FixedPoint(
        x_star=x_star,
        X_star=X_star,
        Y_star=Y_star,
        f_star=family.total_value(x_star),
        family=family,
    )


def _project_out_consensus(Z: np.ndarray) -> np.ndarray:
    return Z - Z.mean(axis=0, keepdims=True)


def merit_sc(X: np.ndarray, Y: np.ndarray, theta_min_prev: float, fp: FixedPoint, M: np.ndarray) -> float:
    """
    V = ||X - X*||^2 + theta_min_prev^2 ||Y - Y*||_M^2

    The dual difference is projected onto the complement of the all-ones
    direction first, where M is negative.
    """
    dX = X - fp.X_star
    dY = _project_out_consensus(Y - fp.Y_star)
    dual = float(np.sum(dY * (M @ dY)))
    return float(np.sum(dX * dX)) + theta_min_prev ** 2 * max(dual, 0.0)


def merit_cvx(X: np.ndarray, fp: FixedPoint, gm: GossipMatrix, delta: float = 1.0) -> float:
    """max(delta <(I - W) X, X>, F(X) - F(X*) + <Y*, X>) with unscaled F."""
    if fp.family is None:
        raise ParameterError("merit_cvx needs a fixed point that carries its loss family")
    disagreement = float(np.sum(X * (X - gm.w @ X)))
    gap = fp.family.stacked_value(X) - fp.f_star + float(np.sum(fp.Y_star * X))
    return max(delta * disagreement, gap)


def ergodic_average(running_sum: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise ParameterError(f"Ergodic average needs k >= 1, got {k}")
    return running_sum / k


class ErgodicAverage:
    """Running mean of X^1, ..., X^k."""

    def __init__(self):
        self.total = None
        self.k = 0

    def push(self, X: np.ndarray):
        if self.total is None:
            self.total = np.array(X, dtype=float)
        else:
            self.total += X
        self.k += 1

    @property
    def value(self) -> np.ndarray:
        if self.total is None:
            raise ParameterError("Ergodic average of an empty sequence")
        return ergodic_average(self.total, self.k)


def linear_rate_fit(ks: Sequence[float], values: Sequence[float]) -> float:
    """
    Least-squares slope of log V against k over the last half of the trace.

    Rows with non-positive or non-finite V are skipped. A negative slope
    means geometric decay at rate exp(slope).
    """
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    if ks.shape != values.shape:
        raise DimensionError(f"{ks.shape[0]} iteration indices but {values.shape[0]} values")

    half = ks.shape[0] // 2
    ks, values = ks[half:], values[half:]
    usable = np.isfinite(values) & (values > 0)
    if np.count_nonzero(usable) < MIN_FIT_ROWS:
        raise ConvergenceError(
            f"Rate fit needs {MIN_FIT_ROWS} positive values in the window, got {int(np.count_nonzero(usable))}"
        )

    slope, _ = np.polyfit(ks[usable], np.log(values[usable]), 1)
    return float(slope)
