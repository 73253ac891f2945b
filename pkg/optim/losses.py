"""
Per-agent losses, synthetic and libsvm data, and the centralized solution oracle
"""

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from scipy import linalg, optimize
from scipy.special import expit
from sklearn.datasets import load_svmlight_file

from .exceptions import (
    ConvergenceError, DimensionError, InsufficientSamplesError,
    LibsvmParseError, ParameterError,
)

logger = logging.getLogger(__name__)

# relative eigenvalue below which the normal equations count as singular
RANK_CUTOFF = 1e-10


class QuadraticLoss:
    """f(x) = ||A x - b||^2 + (lam / 2) ||x||^2"""

    kind = 'quadratic'

    def __init__(self, A: np.ndarray, b: np.ndarray, lam: float = 0.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if lam < 0:
            raise ParameterError(f"Ridge coefficient must be >= 0, got {lam}")
        self.A = A
        self.b = b
        self.lam = float(lam)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"Expected a vector of dimension {self.dim}, got shape {x.shape}")
        return x

    def value(self, x: np.ndarray) -> float:
        x = self._check(x)
        r = self.A @ x - self.b
        return float(r @ r + 0.5 * self.lam * (x @ x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        return 2.0 * self.A.T @ (self.A @ x - self.b) + self.lam * x

    def hessian(self, x: np.ndarray = None) -> np.ndarray:
        return 2.0 * self.A.T @ self.A + self.lam * np.eye(self.dim)

    def curvature(self):
        """(mu, L): extreme eigenvalues of the constant Hessian."""
        evals = linalg.eigvalsh(self.hessian())
        return float(evals[0]), float(evals[-1])


class LogisticLoss:
    """f(x) = (1/h) sum_j log(1 + exp(-b_j <x, a_j>))"""

    kind = 'logistic'

    def __init__(self, features: np.ndarray, labels: np.ndarray):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        labels = np.asarray(labels, dtype=float).reshape(-1)
        if features.shape[0] != labels.shape[0]:
            raise DimensionError(f"{features.shape[0]} samples but {labels.shape[0]} labels")
        if features.shape[0] == 0:
            raise ParameterError("A logistic loss needs at least one sample")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ParameterError("Logistic labels must be -1 or +1")
        self.features = features
        self.labels = labels
        # rows b_j a_j, so the margin is signed_features @ x
        self._signed = features * labels[:, None]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> int:
        return self.features.shape[0]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"Expected a vector of dimension {self.dim}, got shape {x.shape}")
        return x

    def value(self, x: np.ndarray) -> float:
        x = self._check(x)
        margins = self._signed @ x
        return float(np.mean(np.logaddexp(0.0, -margins)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        weights = expit(-(self._signed @ x))
        return -(self._signed.T @ weights) / self.samples

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        s = expit(self._signed @ x)
        curvature = s * (1.0 - s)
        return (self.features.T * curvature) @ self.features / self.samples


Loss = Union[QuadraticLoss, LogisticLoss]


@dataclass
class LossFamily:
    losses: List[Loss]

    def __post_init__(self):
        if not self.losses:
            raise ParameterError("A loss family needs at least one agent")
        dims = {loss.dim for loss in self.losses}
        if len(dims) != 1:
            raise DimensionError(f"All agents must share one variable dimension, got {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.losses)

    def __getitem__(self, i: int) -> Loss:
        return self.losses[i]

    def __iter__(self):
        return iter(self.losses)

    @property
    def m(self) -> int:
        return len(self.losses)

    @property
    def dim(self) -> int:
        return self.losses[0].dim

    @property
    def kind(self) -> str:
        kinds = {loss.kind for loss in self.losses}
        return kinds.pop() if len(kinds) == 1 else 'mixed'

    def stacked_gradient(self, X: np.ndarray) -> np.ndarray:
        """Row i is grad f_i(x_i); no 1/m factor."""
        return np.vstack([loss.gradient(x) for loss, x in zip(self.losses, X)])

    def stacked_value(self, X: np.ndarray) -> float:
        """F(X) = sum_i f_i(x_i), unscaled."""
        return float(sum(loss.value(x) for loss, x in zip(self.losses, X)))

    def total_value(self, x: np.ndarray) -> float:
        return float(sum(loss.value(x) for loss in self.losses))

    def total_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.sum([loss.gradient(x) for loss in self.losses], axis=0)

    def total_hessian(self, x: np.ndarray) -> np.ndarray:
        return np.sum([loss.hessian(x) for loss in self.losses], axis=0)


def generate_quadratic(m: int, h: int, n: int, lam: float = 0.0, seed: int = 0) -> LossFamily:
    if min(m, h, n) < 1:
        raise ParameterError(f"m, h and n must be positive, got m={m} h={h} n={n}")
    if lam < 0:
        raise ParameterError(f"Ridge coefficient must be >= 0, got {lam}")
    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(m):
        A = rng.standard_normal((h, n))
        b = rng.standard_normal(h)
        losses.append(QuadraticLoss(A, b, lam))
    return LossFamily(losses)


def alternating_quadratics(m: int, a: float, d: int = 1) -> LossFamily:
    """
    f(x) = ||x||^2 on even agents and a ||x||^2 on odd agents.

    Equal losses give equal backtracking stepsizes, so one local
    min-consensus round already synchronizes a line graph.
    """
    if a <= 1:
        raise ParameterError(f"Curvature ratio a must exceed 1, got {a}")
    eye = np.eye(d)
    return LossFamily([
        QuadraticLoss(eye if i % 2 == 0 else np.sqrt(a) * eye, np.zeros(d))
        for i in range(m)
    ])


@dataclass
class LibsvmDataset:
    labels: np.ndarray
    features: np.ndarray

    @property
    def samples(self) -> int:
        return self.labels.shape[0]

    @property
    def dims(self) -> int:
        return self.features.shape[1]


def parse_libsvm(path: Union[str, Path]) -> LibsvmDataset:
    """
    Read `<label> <idx>:<val> ...` lines with 1-based indices.

    Positive labels map to +1, everything else (0 included) to -1.
    Rows are densified to the largest index in the file.
    """
    try:
        features, targets = load_svmlight_file(str(path), zero_based=False)
    except ValueError as exc:
        raise _locate_parse_error(path, exc) from exc

    if features.shape[0] == 0:
        raise LibsvmParseError(f"{path} holds no samples")

    logger.info(f"Parsed {features.shape[0]} samples with {features.shape[1]} features from {path}")
    return LibsvmDataset(labels=np.where(targets > 0, 1.0, -1.0), features=features.toarray())


def _locate_parse_error(path, exc: ValueError) -> LibsvmParseError:
    """Re-reads the file one line at a time to name the first line the loader rejects."""
    with open(path, 'rb') as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                load_svmlight_file(io.BytesIO(raw), zero_based=False)
            except ValueError as line_exc:
                logger.error(f"Malformed libsvm line {line_number} in {path}: {line_exc}")
                return LibsvmParseError(str(line_exc), line_number)
    logger.error(f"Could not read {path}: {exc}")
    return LibsvmParseError(str(exc))


def partition_logistic(dataset: LibsvmDataset, m: int, samples_per_agent: int, seed: int = 0) -> LossFamily:
    if m < 1 or samples_per_agent < 1:
        raise ParameterError(f"m and samples_per_agent must be positive, got {m} and {samples_per_agent}")
    needed = m * samples_per_agent
    if needed > dataset.samples:
        raise InsufficientSamplesError(
            f"{m} agents x {samples_per_agent} samples needs {needed}, dataset has {dataset.samples}"
        )

    order = np.random.default_rng(seed).permutation(dataset.samples)
    losses = []
    for i in range(m):
        block = order[i * samples_per_agent:(i + 1) * samples_per_agent]
        losses.append(LogisticLoss(dataset.features[block], dataset.labels[block]))

    discarded = dataset.samples - needed
    if discarded:
        logger.info(f"Partitioned {needed} samples over {m} agents, discarded {discarded}")
    return LossFamily(losses)


def centralized_solve(family: LossFamily, tol: float = 1e-8, max_iter: int = 10000) -> np.ndarray:
    """
    Minimize sum_i f_i on a single machine.

    Quadratics solve the normal equations by Cholesky; singular systems
    fall back to the minimum-norm least-squares solution. Other losses use
    a trust-region Newton method with the exact Hessian.
    """
    if tol <= 0:
        raise ParameterError(f"Oracle tolerance must be positive, got {tol}")

    if family.kind == 'quadratic':
        x_star = _solve_normal_equations(family)
    else:
        result = optimize.minimize(
            family.total_value,
            np.zeros(family.dim),
            jac=family.total_gradient,
            hess=family.total_hessian,
            method='trust-exact',
            options={'gtol': tol, 'maxiter': max_iter},
        )
        x_star = result.x
        logger.debug(f"Centralized oracle: {result.nit} Newton iterations, {result.message}")

    residual = float(np.linalg.norm(family.total_gradient(x_star)))
    if residual > tol:
        logger.error(f"Centralized oracle stopped with gradient norm {residual:.3e} > {tol:.1e}")
        raise ConvergenceError(
            f"Centralized oracle did not reach gradient norm {tol:.1e} (got {residual:.3e})"
        )
    return x_star


def _solve_normal_equations(family: LossFamily) -> np.ndarray:
    n = family.dim
    H = np.zeros((n, n))
    rhs = np.zeros(n)
    for loss in family:
        H += 2.0 * loss.A.T @ loss.A + loss.lam * np.eye(n)
        rhs += 2.0 * loss.A.T @ loss.b

    evals = linalg.eigvalsh(H)
    if evals[0] > RANK_CUTOFF * evals[-1]:
        try:
            factor = linalg.cho_factor(H)
            return linalg.cho_solve(factor, rhs)
        except linalg.LinAlgError:
            pass

    logger.warning("Normal equations are singular; using the minimum-norm solution")
    x_star, *_ = linalg.lstsq(H, rhs, cond=RANK_CUTOFF)
    return x_star


def quadratic_condition_number(family: LossFamily) -> float:
    """max_i L_i / min_i mu_i over the agents' Hessians."""
    if family.kind != 'quadratic':
        raise ParameterError("Condition numbers are reported for quadratic families only")
    curvatures = [loss.curvature() for loss in family]
    mu = min(c[0] for c in curvatures)
    L = max(c[1] for c in curvatures)
    return float('inf') if mu <= 0 else L / mu
