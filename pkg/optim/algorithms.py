"""
Decentralized primal-dual methods over a gossip matrix

- adaptive_step: neighbor-only adaptive method with separate dual stepsizes
  and online estimation of the effective diameter
- baseline_adaptive_step: adaptive method with one stepsize per agent,
  synchronized by global or local min-consensus
- extra_step: EXTRA with a fixed stepsize
"""

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .backtracking import backtrack
from .exceptions import DivergenceError, ParameterError
from .exchange import NeighborExchange, local_max_consensus, local_min_consensus
from .graph_topology import GossipMatrix, communication_graph
from .losses import LossFamily

logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12
MODES = ('global', 'local')

__all__ = [
    'local_min_consensus', 'local_max_consensus', 'gamma_schedule', 'GammaSchedule',
    'AdaptiveState', 'BaselineState', 'ExtraState', 'init_adaptive_state',
    'init_baseline_state', 'init_extra_state', 'safeguard_update', 'adaptive_step',
    'baseline_adaptive_step', 'extra_step', 'AdaptiveSolver', 'BaselineSolver', 'ExtraSolver',
]


def gamma_schedule(k: int, beta1: float = 2.0, beta2: float = 1.0) -> float:
    """gamma^k = ((k + beta1) / (k + 1)) ** beta2"""
    if beta1 < 1 or beta2 <= 0:
        raise ParameterError(f"Need beta1 >= 1 and beta2 > 0, got beta1={beta1} beta2={beta2}")
    if k < 0:
        raise ParameterError(f"Iteration index must be >= 0, got {k}")
    return ((k + beta1) / (k + 1)) ** beta2


@dataclass(frozen=True)
class GammaSchedule:
    beta1: float = 2.0
    beta2: float = 1.0
    freeze_after: Optional[int] = None
    constant: Optional[float] = None

    def __post_init__(self):
        if self.constant is not None:
            if self.constant < 1:
                raise ParameterError(f"Constant growth factor must be >= 1, got {self.constant}")
        else:
            # validates beta1/beta2
            gamma_schedule(0, self.beta1, self.beta2)
        if self.freeze_after is not None and self.freeze_after < 0:
            raise ParameterError(f"freeze_after must be >= 0, got {self.freeze_after}")

    def at(self, k: int) -> float:
        """gamma^k; gamma^{-1} is 1 so the first search starts without growth."""
        if k < 0:
            return 1.0
        if self.freeze_after is not None and k >= self.freeze_after:
            return 1.0
        if self.constant is not None:
            return float(self.constant)
        return gamma_schedule(k, self.beta1, self.beta2)


def _check_finite(X: np.ndarray, k: int, algorithm: str):
    norm = np.linalg.norm(X)
    if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
        logger.warning(f"{algorithm} diverged at iteration {k}: ||X|| = {norm:.3e}")
        raise DivergenceError(f"{algorithm} diverged at iteration {k} (||X|| = {norm:.3e})", iteration=k)


def _local_backtracking(theta_prev, family, X_half, Y_half, growth, delta):
    """theta_bar_i from a backtracking search along -y_i at x_i."""
    m = family.m
    theta_bar = np.empty(m)
    trials = 0
    for i in range(m):
        result = backtrack(theta_prev[i], family[i], X_half[i], -Y_half[i], growth[i], delta)
        theta_bar[i] = result.theta
        trials += result.trials
    return theta_bar, trials


@dataclass(frozen=True)
class AdaptiveState:
    X: np.ndarray
    Y: np.ndarray
    theta: np.ndarray
    theta_tilde: np.ndarray
    pi: np.ndarray
    d: np.ndarray
    k: int = 0
    h: Optional[np.ndarray] = None
    X0: Optional[np.ndarray] = None
    Y0: Optional[np.ndarray] = None
    trials: int = 0
    # per-agent count of diameter doublings
    doublings: Optional[np.ndarray] = None


def init_adaptive_state(X0: np.ndarray, theta0: float = 1.0, d0: int = 1,
                        safeguard: bool = False) -> AdaptiveState:
    """Y^0 = 0; theta, theta_tilde and pi all start at theta0."""
    if theta0 <= 0:
        raise ParameterError(f"Initial stepsize must be positive, got {theta0}")
    if d0 < 1:
        raise ParameterError(f"Initial diameter estimate must be >= 1, got {d0}")
    X0 = np.array(X0, dtype=float)
    m = X0.shape[0]
    Y0 = np.zeros_like(X0)
    return AdaptiveState(
        X=X0,
        Y=Y0,
        theta=np.full(m, float(theta0)),
        theta_tilde=np.full(m, float(theta0)),
        pi=np.full(m, float(theta0)),
        d=np.full(m, int(d0), dtype=int),
        h=np.ones(m, dtype=int) if safeguard else None,
        X0=X0.copy(),
        Y0=Y0.copy(),
        doublings=np.zeros(m, dtype=int),
    )


class SafeguardUpdate(NamedTuple):
    h: np.ndarray
    growth: np.ndarray


def safeguard_update(state: AdaptiveState, radius: float, gamma: float,
                     exchange: NeighborExchange) -> SafeguardUpdate:
    """
    h_i = 0 once agent i leaves the ball of radius R~ around its start,
    otherwise the neighborhood min of the previous bits. The growth factor
    of this iteration reads the previous bit: agents whose bit was already
    0 backtrack from growth factor 1 instead of gamma.
    """
    if radius <= 0:
        raise ParameterError(f"Safeguard radius must be positive, got {radius}")
    h_prev = state.h if state.h is not None else np.ones(state.X.shape[0], dtype=int)

    primal = np.linalg.norm(state.X - state.X0, axis=1)
    dual = state.theta * np.linalg.norm(state.Y - state.Y0, axis=1)
    spread = exchange.min_consensus(h_prev, label='safeguard')
    h = np.where(np.maximum(primal, dual) >= radius, 0, spread).astype(int)

    if h.sum() < h_prev.sum():
        logger.debug(f"Safeguard tripped at iteration {state.k}: {int((h == 0).sum())} agents frozen")
    # 1 + h (gamma - 1) for binary h, without rounding gamma
    growth = np.where(h_prev == 1, gamma, 1.0)
    return SafeguardUpdate(h=h, growth=growth)


def adaptive_step(state: AdaptiveState, gm: GossipMatrix, family: LossFamily,
                  schedule: GammaSchedule, delta: float = 1.0,
                  exchange: Optional[NeighborExchange] = None, *,
                  safeguard_radius: Optional[float] = None,
                  horizon: Optional[int] = None,
                  force_uniform: bool = False) -> AdaptiveState:
    """
    One iteration of the fully decentralized adaptive method.

    horizon replaces the diameter estimates by a fixed value (no doubling).
    force_uniform sets every primal and dual stepsize to the network-wide
    min of the backtracking results.
    """
    if exchange is None:
        exchange = NeighborExchange(communication_graph(gm))
    W = gm.w
    k = state.k
    gamma_prev = schedule.at(k - 1)
    gamma_k = schedule.at(k)
    m = state.X.shape[0]

    # S.0
    h = state.h
    growth = np.full(m, gamma_prev)
    if safeguard_radius is not None:
        h, growth = safeguard_update(state, safeguard_radius, gamma_prev, exchange)

    # S.1
    X_half = exchange.gossip(W, state.X, label='primal')
    grad_half = family.stacked_gradient(X_half)
    Y_half = exchange.gossip(W, state.Y + grad_half, label='dual')

    # S.2
    theta_bar, trials = _local_backtracking(state.theta, family, X_half, Y_half, growth, delta)

    if force_uniform:
        theta = exchange.flood_min(theta_bar)
        theta_tilde = theta.copy()
        pi = theta.copy()
        d_next = state.d
        doublings = 0
    else:
        theta = exchange.min_consensus(theta_bar, label='primal-stepsize')

        # S.3
        d = state.d if horizon is None else np.full(m, int(horizon), dtype=int)
        restart = (k - 1) % d == 0
        dual_reset = k % d == 0
        with exchange.scalar_round('auxiliary', size=2):
            restarted = exchange.min_consensus(theta)
            chained = exchange.min_consensus(gamma_k * state.theta_tilde)
        theta_tilde = np.where(restart, restarted, chained)
        pi = np.where(dual_reset, theta_tilde, gamma_k * state.pi)

        # S.4
        if horizon is None:
            with exchange.scalar_round('diameter', size=2):
                tilde_min = exchange.min_consensus(theta_tilde)
                d_max = exchange.max_consensus(d)
            failed = dual_reset & (theta_tilde != tilde_min)
            # only the failing agent's own estimate doubles before the max
            d_next = np.where(failed, np.maximum(2 * d, d_max), d_max)
            doublings = failed.astype(int)
            if failed.any():
                logger.debug(f"Iteration {k}: {int(failed.sum())} agents doubled their diameter estimate")
        else:
            d_next = d
            doublings = 0

    # S.5
    X_next = X_half - theta[:, None] * Y_half
    X_pi = state.X / pi[:, None]
    X_pi_half = exchange.gossip(W, X_pi, label='dual-correction')
    Y_next = (Y_half - grad_half) + (X_pi - X_pi_half)
    _check_finite(X_next, k, 'adaptive')

    return replace(
        state,
        X=X_next,
        Y=Y_next,
        theta=theta,
        theta_tilde=theta_tilde,
        pi=pi,
        d=d_next,
        k=k + 1,
        h=h,
        trials=trials,
        doublings=doublings if state.doublings is None else state.doublings + doublings,
    )


@dataclass(frozen=True)
class BaselineState:
    X: np.ndarray
    Y: np.ndarray
    theta: np.ndarray
    mode: str = 'global'
    k: int = 0
    trials: int = 0


def init_baseline_state(X0: np.ndarray, theta0: float = 1.0, mode: str = 'global') -> BaselineState:
    if mode not in MODES:
        raise ParameterError(f"Consensus mode must be one of {MODES}, got {mode}")
    if theta0 <= 0:
        raise ParameterError(f"Initial stepsize must be positive, got {theta0}")
    X0 = np.array(X0, dtype=float)
    return BaselineState(
        X=X0,
        Y=np.zeros_like(X0),
        theta=np.full(X0.shape[0], float(theta0)),
        mode=mode,
    )


def baseline_adaptive_step(state: BaselineState, gm: GossipMatrix, family: LossFamily,
                           schedule: GammaSchedule, delta: float = 1.0,
                           exchange: Optional[NeighborExchange] = None) -> BaselineState:
    """One iteration of the single-stepsize adaptive method in state.mode."""
    if exchange is None:
        exchange = NeighborExchange(communication_graph(gm))
    W = gm.w
    k = state.k
    growth = np.full(state.X.shape[0], schedule.at(k - 1))

    X_half = exchange.gossip(W, state.X, label='primal')
    grad_half = family.stacked_gradient(X_half)
    Y_half = exchange.gossip(W, state.Y + grad_half, label='dual')

    theta_bar, trials = _local_backtracking(state.theta, family, X_half, Y_half, growth, delta)
    if state.mode == 'global':
        theta = exchange.flood_min(theta_bar)
    else:
        theta = exchange.min_consensus(theta_bar, label='primal-stepsize')

    X_next = X_half - theta[:, None] * Y_half
    # (I - W) Theta^-1 X costs a third gossip round
    X_scaled = state.X / theta[:, None]
    X_scaled_half = exchange.gossip(W, X_scaled, label='dual-correction')
    Y_next = (Y_half - grad_half) + (X_scaled - X_scaled_half)
    _check_finite(X_next, k, f'nips_{state.mode}')

    return replace(state, X=X_next, Y=Y_next, theta=theta, k=k + 1, trials=trials)


@dataclass(frozen=True)
class ExtraState:
    X: np.ndarray
    alpha: float
    k: int = 0
    X_prev: Optional[np.ndarray] = None
    WX_prev: Optional[np.ndarray] = None
    grad_prev: Optional[np.ndarray] = None


def init_extra_state(X0: np.ndarray, alpha: float) -> ExtraState:
    if alpha <= 0:
        raise ParameterError(f"EXTRA stepsize must be positive, got {alpha}")
    return ExtraState(X=np.array(X0, dtype=float), alpha=float(alpha))


def extra_step(state: ExtraState, gm: GossipMatrix, family: LossFamily,
               exchange: Optional[NeighborExchange] = None) -> ExtraState:
    """
    X^1 = W X^0 - alpha grad F(X^0), then
    X^{k+2} = (I + W) X^{k+1} - (I + W)/2 X^k - alpha (grad F(X^{k+1}) - grad F(X^k)).

    W X^k is cached from the previous iteration, so each step costs one gossip round.
    """
    if exchange is None:
        exchange = NeighborExchange(communication_graph(gm))
    alpha = state.alpha
    WX = exchange.gossip(gm.w, state.X, label='extra')
    grad = family.stacked_gradient(state.X)

    if state.k == 0:
        X_next = WX - alpha * grad
    else:
        X_next = (state.X + WX
                  - 0.5 * (state.X_prev + state.WX_prev)
                  - alpha * (grad - state.grad_prev))
    _check_finite(X_next, state.k, 'extra')

    return replace(state, X=X_next, k=state.k + 1, X_prev=state.X, WX_prev=WX, grad_prev=grad)


class AdaptiveSolver:
    """Iterates adaptive_step on one exchange ledger."""

    name = 'adaptive'
    vector_rounds_per_iteration = 3

    def __init__(self, gm: GossipMatrix, family: LossFamily, X0: np.ndarray, exchange: NeighborExchange,
                 schedule: GammaSchedule, delta: float = 1.0, theta0: float = 1.0, d0: int = 1,
                 safeguard_radius: Optional[float] = None, horizon: Optional[int] = None):
        self.gm = gm
        self.family = family
        self.exchange = exchange
        self.schedule = schedule
        self.delta = delta
        self.safeguard_radius = safeguard_radius
        self.horizon = horizon
        self.state = init_adaptive_state(X0, theta0, d0, safeguard=safeguard_radius is not None)

    def step(self):
        self.state = adaptive_step(
            self.state, self.gm, self.family, self.schedule, self.delta, self.exchange,
            safeguard_radius=self.safeguard_radius, horizon=self.horizon,
        )

    @property
    def X(self) -> np.ndarray:
        return self.state.X

    @property
    def Y(self) -> np.ndarray:
        return self.state.Y

    @property
    def theta_min_prev(self) -> float:
        return float(self.state.theta.min())

    def stats(self):
        s = self.state
        d_max = s.d.max() if self.horizon is None else self.horizon
        return (float(s.theta.min()), float(s.theta.max()),
                float(s.pi.min()), float(s.pi.max()), float(d_max))


class BaselineSolver:
    """Iterates baseline_adaptive_step in global or local min-consensus mode."""

    vector_rounds_per_iteration = 3

    def __init__(self, gm: GossipMatrix, family: LossFamily, X0: np.ndarray, exchange: NeighborExchange,
                 schedule: GammaSchedule, delta: float = 1.0, theta0: float = 1.0, mode: str = 'global'):
        self.name = f'nips_{mode}'
        self.gm = gm
        self.family = family
        self.exchange = exchange
        self.schedule = schedule
        self.delta = delta
        self.state = init_baseline_state(X0, theta0, mode)

    def step(self):
        self.state = baseline_adaptive_step(
            self.state, self.gm, self.family, self.schedule, self.delta, self.exchange
        )

    @property
    def X(self) -> np.ndarray:
        return self.state.X

    @property
    def Y(self) -> np.ndarray:
        return self.state.Y

    @property
    def theta_min_prev(self) -> float:
        return float(self.state.theta.min())

    def stats(self):
        theta = self.state.theta
        lo, hi = float(theta.min()), float(theta.max())
        return lo, hi, lo, hi, float('nan')


class ExtraSolver:
    name = 'extra'
    vector_rounds_per_iteration = 1

    def __init__(self, gm: GossipMatrix, family: LossFamily, X0: np.ndarray, exchange: NeighborExchange,
                 alpha: float):
        self.gm = gm
        self.family = family
        self.exchange = exchange
        self.state = init_extra_state(X0, alpha)

    def step(self):
        self.state = extra_step(self.state, self.gm, self.family, self.exchange)

    @property
    def X(self) -> np.ndarray:
        return self.state.X

    # no dual variable, so no V
    Y = None
    theta_min_prev = float('nan')

    def stats(self):
        alpha = self.state.alpha
        nan = float('nan')
        return alpha, alpha, nan, nan, nan
