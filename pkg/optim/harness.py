"""
Experiment harness: builds problems from a RunConfig, drives one solver to a
stopping rule, and writes the CSV trace.
"""

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from .algorithms import AdaptiveSolver, BaselineSolver, ExtraSolver, GammaSchedule
from .exceptions import (
    BacktrackingError, ConfigError, DivergenceError, LocalityError, TuningError,
)
from .exchange import NeighborExchange
from .graph_topology import Graph, GossipMatrix, build_graph, diameter, metropolis_gossip, spectral_data
from .losses import LossFamily, generate_quadratic, parse_libsvm, partition_logistic
from .metrics import ErgodicAverage, FixedPoint, fixed_point, merit_cvx, merit_sc

logger = logging.getLogger(__name__)

CSV_HEADER = (
    'k', 'vector_rounds', 'scalar_rounds', 'err_rel', 'V', 'M_erg',
    'theta_min', 'theta_max', 'pi_min', 'pi_max', 'd_max', 'status',
)
ALGORITHMS = ('adaptive', 'nips_global', 'nips_local', 'extra')
STATUSES = ('converged', 'budget_exhausted', 'diverged')
DEFAULT_ALPHA_GRID = tuple(np.logspace(-6, 0, 25))


@dataclass(frozen=True)
class GraphSpec:
    kind: str = 'line'
    m: int = 20
    p: Optional[float] = None
    seed: int = 0


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = 'quadratic'
    m: int = 20
    h: int = 110
    n: int = 100
    lam: float = 0.0
    dataset: Optional[str] = None
    seed: int = 0


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str = 'adaptive'
    delta: float = 1.0
    theta0: float = 1.0
    d0: int = 1
    horizon: str = 'adaptive'
    gamma: GammaSchedule = field(default_factory=GammaSchedule)
    safeguard: bool = False
    safeguard_radius: Optional[float] = None
    extra_alpha: Optional[float] = None
    extra_alpha_grid: Tuple[float, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    name: str = 'run'
    seed: int = 0
    graph: GraphSpec = field(default_factory=GraphSpec)
    c: float = 0.5
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    algorithm: AlgorithmSpec = field(default_factory=AlgorithmSpec)
    init_kind: str = 'zeros'
    init_scale: float = 1.0
    criterion: str = 'auto'
    tolerance: float = 1e-5
    max_iterations: int = 50000
    max_vector_rounds: int = 200000
    stride: int = 1
    output: Optional[str] = None

    def with_algorithm(self, **changes) -> 'RunConfig':
        return replace(self, algorithm=replace(self.algorithm, **changes))


@dataclass
class Problem:
    """Everything a run needs that does not depend on the algorithm."""

    graph: Graph
    gm: GossipMatrix
    family: LossFamily
    fp: FixedPoint
    M: np.ndarray

    @classmethod
    def from_family(cls, graph: Graph, family: LossFamily, c: float = 0.5,
                    oracle_tol: Optional[float] = None) -> 'Problem':
        gm = metropolis_gossip(graph, c)
        tol = oracle_tol if oracle_tol is not None else settings.OPTIM['ORACLE_TOL']
        fp = fixed_point(family, gm, tol=tol, max_iter=settings.OPTIM['ORACLE_MAX_ITER'])
        return cls(graph=graph, gm=gm, family=family, fp=fp, M=spectral_data(gm).M)


def build_problem(config: RunConfig) -> Problem:
    spec = config.problem
    if spec.m != config.graph.m:
        raise ConfigError({'problem': [f"problem has m={spec.m} agents, graph has m={config.graph.m}"]})

    graph = build_graph(config.graph.kind, config.graph.m, config.graph.p, config.graph.seed)
    if spec.kind == 'quadratic':
        family = generate_quadratic(spec.m, spec.h, spec.n, spec.lam, spec.seed)
    elif spec.kind == 'logistic':
        family = partition_logistic(parse_libsvm(spec.dataset), spec.m, spec.h, spec.seed)
    else:
        raise ConfigError({'problem': [f"unknown problem kind {spec.kind!r}"]})
    return Problem.from_family(graph, family, config.c)


def initial_iterate(config: RunConfig, problem: Problem) -> np.ndarray:
    shape = (problem.family.m, problem.family.dim)
    if config.init_kind == 'gaussian':
        return config.init_scale * np.random.default_rng(config.seed).standard_normal(shape)
    return np.zeros(shape)


def make_solver(config: RunConfig, problem: Problem, X0: np.ndarray, exchange: NeighborExchange):
    spec = config.algorithm
    if spec.name == 'adaptive':
        radius = spec.safeguard_radius if spec.safeguard else None
        horizon = max(diameter(problem.graph), 1) if spec.horizon == 'known' else None
        return AdaptiveSolver(
            problem.gm, problem.family, X0, exchange, spec.gamma,
            delta=spec.delta, theta0=spec.theta0, d0=spec.d0,
            safeguard_radius=radius, horizon=horizon,
        )
    elif spec.name in ('nips_global', 'nips_local'):
        return BaselineSolver(
            problem.gm, problem.family, X0, exchange, spec.gamma,
            delta=spec.delta, theta0=spec.theta0, mode=spec.name.split('_', 1)[1],
        )
    elif spec.name == 'extra':
        if spec.extra_alpha is None:
            raise ConfigError({'algorithm': ["extra needs extra_alpha (or use tune_extra)"]})
        return ExtraSolver(problem.gm, problem.family, X0, exchange, spec.extra_alpha)
    raise ConfigError({'algorithm': [f"unknown algorithm {spec.name!r}"]})


@dataclass(frozen=True)
class MeritRow:
    k: int
    vector_rounds: int
    scalar_rounds: int
    err_rel: float
    V: float
    M_erg: float
    theta_min: float
    theta_max: float
    pi_min: float
    pi_max: float
    d_max: float
    status: str = 'running'

    def as_csv(self) -> List[str]:
        values = []
        for name in CSV_HEADER:
            value = getattr(self, name)
            if isinstance(value, float):
                values.append(format(value, '.17g'))
            else:
                values.append(str(value))
        return values


@dataclass
class RunTrace:
    name: str
    algorithm: str
    seed: int
    rows: List[MeritRow] = field(default_factory=list)
    status: str = 'budget_exhausted'
    wall_clock: float = 0.0
    alpha: Optional[float] = None

    @property
    def final(self) -> MeritRow:
        return self.rows[-1]

    @property
    def iterations(self) -> int:
        return self.final.k

    @property
    def vector_rounds(self) -> int:
        return self.final.vector_rounds

    def to_csv(self, target: Union[str, Path, io.TextIOBase, None] = None) -> str:
        """Write the trace; returns the CSV text. The wall clock stays out of the file."""
        buffer = io.StringIO()
        buffer.write(f"# seed={self.seed} name={self.name} algorithm={self.algorithm}\n")
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow(row.as_csv())
        text = buffer.getvalue()

        if isinstance(target, (str, Path)):
            path = Path(target)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding='utf-8')
        elif target is not None:
            target.write(text)
        return text


def _criterion(config: RunConfig, problem: Problem) -> str:
    if config.criterion != 'auto':
        return config.criterion
    return 'distance' if problem.family.kind == 'quadratic' else 'merit'


def execute(config: RunConfig, problem: Problem, audit: bool = False) -> RunTrace:
    """
    Run config.algorithm on a prepared problem until the stopping rule,
    the iteration budget or the vector-round budget is hit.

    Divergence is recorded as status 'diverged'; it is never raised.
    """
    exchange = NeighborExchange(problem.graph, keep_history=audit)
    X0 = initial_iterate(config, problem)
    solver = make_solver(config, problem, X0, exchange)
    criterion = _criterion(config, problem)
    fp = problem.fp
    delta = config.algorithm.delta

    initial_gap = float(np.linalg.norm(X0 - fp.X_star))
    scale = initial_gap if initial_gap > 0 else 1.0
    ergodic = ErgodicAverage()

    trace = RunTrace(
        name=config.name,
        algorithm=config.algorithm.name,
        seed=config.seed,
        alpha=config.algorithm.extra_alpha if config.algorithm.name == 'extra' else None,
    )

    def observe(k: int, status: str) -> MeritRow:
        X = solver.X
        err = float(np.linalg.norm(X - fp.X_star)) / scale
        if solver.Y is None:
            V = float('nan')
        else:
            V = merit_sc(X, solver.Y, solver.theta_min_prev, fp, problem.M)
        X_hat = ergodic.value if ergodic.k else X
        M_erg = merit_cvx(X_hat, fp, problem.gm, delta)
        return MeritRow(k, exchange.vector_rounds, exchange.scalar_rounds, err, V, M_erg,
                        *solver.stats(), status=status)

    def reached(k: int) -> bool:
        if criterion == 'distance':
            return float(np.linalg.norm(solver.X - fp.X_star)) / scale <= config.tolerance
        X_hat = ergodic.value if ergodic.k else solver.X
        return merit_cvx(X_hat, fp, problem.gm, delta) <= config.tolerance

    logger.info(
        f"Run '{config.name}': {solver.name} on {config.graph.kind}(m={config.graph.m}), "
        f"criterion={criterion}, tol={config.tolerance:g}"
    )
    started = time.perf_counter()
    k = 0
    status = 'converged' if reached(0) else None
    trace.rows.append(observe(0, status or 'running'))

    while status is None:
        if k >= config.max_iterations or exchange.vector_rounds >= config.max_vector_rounds:
            status = 'budget_exhausted'
            break

        before = exchange.vector_rounds
        try:
            solver.step()
        except (DivergenceError, BacktrackingError) as e:
            logger.error(f"Run '{config.name}' diverged: {e}")
            status = 'diverged'
            break
        k += 1
        spent = exchange.vector_rounds - before
        if spent != solver.vector_rounds_per_iteration:
            raise LocalityError(
                f"{solver.name} used {spent} vector rounds at iteration {k}, "
                f"declared {solver.vector_rounds_per_iteration}"
            )
        ergodic.push(solver.X)

        if reached(k):
            status = 'converged'
            break
        if k % config.stride == 0:
            trace.rows.append(observe(k, 'running'))

    if status == 'diverged':
        # the iterate that blew up is not observed
        nan = float('nan')
        trace.rows.append(MeritRow(k + 1, exchange.vector_rounds, exchange.scalar_rounds,
                                   nan, nan, nan, nan, nan, nan, nan, nan, status=status))
    elif trace.rows[-1].k == k:
        trace.rows[-1] = replace(trace.rows[-1], status=status)
    else:
        trace.rows.append(observe(k, status))

    if audit:
        exchange.audit()

    trace.status = status
    trace.wall_clock = time.perf_counter() - started
    logger.info(
        f"Run '{config.name}' {status} after {k} iterations, "
        f"{exchange.vector_rounds} vector rounds ({trace.wall_clock:.2f}s)"
    )
    return trace


def run(config: RunConfig, problem: Optional[Problem] = None) -> RunTrace:
    """Build the problem, run once, write config.output when set."""
    if problem is None:
        problem = build_problem(config)
    if config.algorithm.name == 'extra' and config.algorithm.extra_alpha is None:
        trace = tune_extra(config, problem=problem).trace
    else:
        trace = execute(config, problem)
    if config.output:
        trace.to_csv(config.output)
    return trace


@dataclass
class TuningResult:
    alpha: float
    trace: RunTrace
    statuses: Dict[float, str]


def tune_extra(config: RunConfig, alpha_grid: Optional[Sequence[float]] = None,
               problem: Optional[Problem] = None) -> TuningResult:
    """
    Grid search for the EXTRA stepsize with the fewest vector rounds to target.

    Candidates run from the largest alpha down; once one converges, later
    candidates get its round count as their budget. Ties go to the smaller alpha.
    """
    if alpha_grid is None:
        alpha_grid = config.algorithm.extra_alpha_grid or DEFAULT_ALPHA_GRID
    grid = sorted({float(a) for a in alpha_grid}, reverse=True)
    if not grid:
        raise ConfigError({'extra_alpha_grid': ["alpha grid is empty"]})
    if any(a <= 0 for a in grid):
        raise ConfigError({'extra_alpha_grid': ["alpha values must be positive"]})
    if problem is None:
        problem = build_problem(config)

    statuses: Dict[float, str] = {}
    best: Optional[RunTrace] = None
    budget = config.max_vector_rounds
    for alpha in grid:
        candidate = replace(config.with_algorithm(name='extra', extra_alpha=alpha), max_vector_rounds=budget)
        trace = execute(candidate, problem)
        statuses[alpha] = trace.status
        if trace.status == 'diverged':
            logger.warning(f"EXTRA alpha={alpha:.3e} diverged")
        if trace.status == 'converged' and (best is None or trace.vector_rounds <= best.vector_rounds):
            best = trace
            budget = trace.vector_rounds

    if best is None:
        logger.error(f"No EXTRA stepsize in a grid of {len(grid)} converged")
        raise TuningError(statuses)

    logger.info(f"EXTRA tuned: alpha={best.alpha:.3e} with {best.vector_rounds} vector rounds")
    return TuningResult(alpha=best.alpha, trace=best, statuses=statuses)
