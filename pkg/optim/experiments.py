"""
Experiment suites: fixed-seed batches of runs with one trace CSV per run
and a summary.csv per suite.
"""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import django
from django.conf import settings

from .algorithms import GammaSchedule
from .exceptions import ConfigError, TuningError
from .graph_topology import diameter, build_line_graph
from .harness import (
    ALGORITHMS, AlgorithmSpec, GraphSpec, ProblemSpec, RunConfig, RunTrace, build_problem, execute,
    tune_extra,
)
from .losses import generate_quadratic, quadratic_condition_number

logger = logging.getLogger(__name__)

SUITES = ('quadratic_graphs', 'condition_sweep', 'diameter_sweep', 'logistic_graphs')

PROBLEM_SEED = 2024
GRAPH_SEED = 7
INIT_SEED = 0

# agent count, graphs and sizes of the strongly convex and logistic suites
M_AGENTS = 20
SUITE_GRAPHS = {
    'line': GraphSpec('line', M_AGENTS, seed=GRAPH_SEED),
    'er0.1': GraphSpec('erdos_renyi', M_AGENTS, 0.1, seed=GRAPH_SEED),
    'er0.5': GraphSpec('erdos_renyi', M_AGENTS, 0.5, seed=GRAPH_SEED),
}
RIDGE_LAMBDAS = (1000.0, 100.0, 10.0, 1.0, 0.0)
LINE_SIZES = (5, 10, 20, 40)
LOGISTIC_SAMPLES = 159
LOGISTIC_TOLERANCE = 1e-3
LOGISTIC_MAX_VECTOR_ROUNDS = 100000
SAFEGUARD_RADIUS = 1e3


@dataclass
class Member:
    """One run of a suite plus the summary columns that identify it."""

    config: RunConfig
    trace_path: Path
    labels: Dict[str, object] = field(default_factory=dict)


@dataclass
class SuiteResult:
    name: str
    traces: List[Path]
    summary: Path
    rows: List[Dict[str, object]]


def _algorithm(name: str, **changes) -> AlgorithmSpec:
    return replace(AlgorithmSpec(name=name, gamma=GammaSchedule()), **changes)


def _base_config(name: str, graph: GraphSpec, problem: ProblemSpec, algorithm: AlgorithmSpec,
                 **changes) -> RunConfig:
    config = RunConfig(
        name=name,
        seed=INIT_SEED,
        graph=graph,
        c=settings.OPTIM['GOSSIP_C'],
        problem=problem,
        algorithm=algorithm,
        tolerance=settings.OPTIM['TOLERANCE'],
        max_iterations=settings.OPTIM['MAX_ITERATIONS'],
        max_vector_rounds=settings.OPTIM['MAX_VECTOR_ROUNDS'],
    )
    return replace(config, **changes)


def quadratic_graphs_members(out_dir: Path) -> List[Member]:
    members = []
    for label, graph in SUITE_GRAPHS.items():
        problem = ProblemSpec('quadratic', M_AGENTS, 110, 100, 0.0, seed=PROBLEM_SEED)
        for algorithm in ALGORITHMS:
            name = f'{label}_{algorithm}'
            config = _base_config(name, graph, problem, _algorithm(algorithm))
            members.append(Member(config, out_dir / f'{name}.csv', {'graph': label, 'algorithm': algorithm}))
    return members


def condition_sweep_members(out_dir: Path) -> List[Member]:
    members = []
    for label, graph in SUITE_GRAPHS.items():
        for lam in RIDGE_LAMBDAS:
            problem = ProblemSpec('quadratic', M_AGENTS, 110, 100, lam, seed=PROBLEM_SEED)
            kappa = quadratic_condition_number(generate_quadratic(M_AGENTS, 110, 100, lam, PROBLEM_SEED))
            for algorithm in ALGORITHMS:
                name = f'{label}_lambda{lam:g}_{algorithm}'
                config = _base_config(name, graph, problem, _algorithm(algorithm))
                members.append(Member(config, out_dir / f'{name}.csv', {
                    'graph': label, 'lambda': lam, 'kappa': kappa, 'algorithm': algorithm,
                }))
    return members


def diameter_sweep_members(out_dir: Path) -> List[Member]:
    members = []
    for m in LINE_SIZES:
        graph = GraphSpec('line', m)
        problem = ProblemSpec('quadratic', m, 1, 100, 0.0, seed=PROBLEM_SEED)
        d_graph = diameter(build_line_graph(m))
        for algorithm in ALGORITHMS:
            name = f'line{m}_{algorithm}'
            config = _base_config(name, graph, problem, _algorithm(algorithm))
            members.append(Member(config, out_dir / f'{name}.csv', {
                'm': m, 'diameter': d_graph, 'algorithm': algorithm,
            }))
    return members


def logistic_graphs_members(out_dir: Path, data_path: str) -> List[Member]:
    if not Path(data_path).is_file():
        raise ConfigError({'data': [f"logistic suite needs the a3a file, {data_path} does not exist"]})
    members = []
    for label, graph in SUITE_GRAPHS.items():
        problem = ProblemSpec('logistic', M_AGENTS, LOGISTIC_SAMPLES, dataset=str(data_path), seed=PROBLEM_SEED)
        for algorithm in ALGORITHMS:
            spec = _algorithm(algorithm)
            if algorithm == 'adaptive':
                spec = replace(spec, safeguard=True, safeguard_radius=SAFEGUARD_RADIUS)
            name = f'{label}_{algorithm}'
            config = _base_config(
                name, graph, problem, spec,
                criterion='merit',
                tolerance=LOGISTIC_TOLERANCE,
                max_vector_rounds=LOGISTIC_MAX_VECTOR_ROUNDS,
            )
            members.append(Member(config, out_dir / f'{name}.csv', {'graph': label, 'algorithm': algorithm}))
    return members


def run_member(member: Member) -> Dict[str, object]:
    """Run one suite member and write its trace. Picklable for worker processes."""
    config = member.config
    problem = build_problem(config)
    row = dict(member.labels)
    try:
        if config.algorithm.name == 'extra' and config.algorithm.extra_alpha is None:
            trace = tune_extra(config, problem=problem).trace
        else:
            trace = execute(config, problem)
    except TuningError as e:
        logger.error(f"Suite member '{config.name}': {e}")
        # header-only trace keeps one file per member
        RunTrace(config.name, 'extra', config.seed, status='untuned').to_csv(member.trace_path)
        row.update(status='untuned', iterations='', vector_rounds='', scalar_rounds='',
                   err_rel='', M_erg='', alpha='', trace=member.trace_path.name)
        return row

    trace.to_csv(member.trace_path)
    final = trace.final
    row.update(
        status=trace.status,
        iterations=final.k,
        vector_rounds=final.vector_rounds,
        scalar_rounds=final.scalar_rounds,
        err_rel=format(final.err_rel, '.17g'),
        M_erg=format(final.M_erg, '.17g'),
        alpha='' if trace.alpha is None else format(trace.alpha, '.17g'),
        trace=member.trace_path.name,
    )
    return row


def _widen(rows: List[Dict[str, object]], keys: List[str]) -> List[Dict[str, object]]:
    """One row per key combination with a rounds_<algorithm> column per algorithm."""
    wide: Dict[tuple, Dict[str, object]] = {}
    for row in rows:
        ident = tuple(row[k] for k in keys)
        entry = wide.setdefault(ident, {k: row[k] for k in keys})
        rounds = row['vector_rounds'] if row['status'] == 'converged' else ''
        entry[f"rounds_{row['algorithm']}"] = rounds
    return list(wide.values())


def _write_summary(path: Path, rows: List[Dict[str, object]], seed_note: str):
    fieldnames = list(rows[0].keys()) if rows else []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(f"# {seed_note}\n")
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator='\n', restval='')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (format(v, '.17g') if isinstance(v, float) else v) for k, v in row.items()})


def experiment_suite(name: str, out_dir, data_path: Optional[str] = None,
                     jobs: Optional[int] = None) -> SuiteResult:
    """
    Run a named suite into out_dir.

    quadratic_graphs and logistic_graphs emit one trace per graph and
    algorithm; condition_sweep and diameter_sweep add a wide summary with
    rounds-to-target per algorithm.
    """
    if name not in SUITES:
        raise ConfigError({'suite': [f"unknown suite {name!r}, choose from {', '.join(SUITES)}"]})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = jobs or settings.OPTIM['SUITE_JOBS']

    if name == 'quadratic_graphs':
        members = quadratic_graphs_members(out_dir)
    elif name == 'condition_sweep':
        members = condition_sweep_members(out_dir)
    elif name == 'diameter_sweep':
        members = diameter_sweep_members(out_dir)
    else:
        members = logistic_graphs_members(out_dir, data_path or settings.OPTIM['A3A_PATH'])

    logger.info(f"Suite {name}: {len(members)} runs into {out_dir} with {jobs} worker(s)")
    if jobs > 1:
        # workers started without fork need the app registry too
        with ProcessPoolExecutor(max_workers=jobs, initializer=django.setup) as pool:
            rows = list(pool.map(run_member, members))
    else:
        rows = [run_member(member) for member in members]

    summary_rows = rows
    if name == 'condition_sweep':
        summary_rows = _widen(rows, ['graph', 'lambda', 'kappa'])
    elif name == 'diameter_sweep':
        summary_rows = _widen(rows, ['m', 'diameter'])

    summary = out_dir / 'summary.csv'
    seed_note = f"suite={name} problem_seed={PROBLEM_SEED} graph_seed={GRAPH_SEED} init_seed={INIT_SEED}"
    _write_summary(summary, summary_rows, seed_note)

    traces = [m.trace_path for m in members if m.trace_path.exists()]
    logger.info(f"Suite {name} finished: {len(traces)} traces, summary at {summary}")
    return SuiteResult(name=name, traces=traces, summary=summary, rows=summary_rows)
