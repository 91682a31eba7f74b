"""
Two-covariance PLDA.

Speaker means are drawn from N(mean, B) and observations from N(speaker mean, W).
The model keeps the simultaneous diagonalization of (B, W): `transform` whitens W and
diagonalizes B, so in transformed space the within-class covariance is I and the
between-class covariance is diag(psi). Every likelihood below is a sum of
per-dimension scalar Gaussian terms and is returned in log domain.

"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import linalg as sla

from mixplda.conf import settings
from mixplda.exceptions import (
    DegenerateEmbeddingError,
    DimensionMismatchError,
    RankDeficientError,
    SingularTransformError,
    TrainingDataError,
)
from mixplda.generics import IntVector, Matrix, Vector
from mixplda.log import log_params, logger
from mixplda.schemas import LabeledEmbeddingSet

__all__ = [
    "PldaModel",
    "length_normalize",
    "train_plda",
    "log_marginal",
    "log_joint_same",
    "log_lr_single",
    "pairwise_log_joint_same",
    "pairwise_log_lr",
]

LOG_2PI = math.log(2.0 * math.pi)
MAX_CONDITION = 1e12
MONOTONICITY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class PldaModel:
    """
    Trained two-covariance PLDA. Immutable, safe for concurrent scoring.

    """

    mean: Vector
    transform: Matrix
    psi: Vector
    loglik_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64).reshape(-1)
        transform = np.ascontiguousarray(self.transform, dtype=np.float64)
        psi = np.ascontiguousarray(self.psi, dtype=np.float64).reshape(-1)
        dim = mean.shape[0]

        if dim < 1 or transform.shape != (dim, dim) or psi.shape != (dim,):
            raise DimensionMismatchError(dim, transform.shape[0] if transform.ndim else 0)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(transform)) and np.all(np.isfinite(psi))):
            raise SingularTransformError(math.inf)
        if np.any(psi < 0.0):
            raise ValueError("PLDA between-class variances must be nonnegative")

        condition = np.linalg.cond(transform)
        if not math.isfinite(condition) or condition > MAX_CONDITION:
            raise SingularTransformError(condition)

        for array in (mean, transform, psi):
            array.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "transform", transform)
        object.__setattr__(self, "psi", psi)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def log_det_transform(self) -> float:
        return float(np.linalg.slogdet(self.transform)[1])

    def check_dim(self, values: np.ndarray) -> None:
        if values.shape[-1] != self.dim:
            raise DimensionMismatchError(self.dim, values.shape[-1])

    def project(self, z, length_norm: bool = False) -> np.ndarray:
        """
        Maps raw embeddings (..., d) to the diagonalized space.
        Length normalization, when enabled, happens before centering.

        """
        z = np.asarray(z, dtype=np.float64)
        self.check_dim(z)
        if length_norm:
            z = length_normalize(z)
        return (z - self.mean) @ self.transform.T

    def log_marginal_raw(self, z, length_norm: bool = False):
        """
        Log density of one raw-space observation, including the transform Jacobian.

        """
        return log_marginal(self, self.project(z, length_norm)) + self.log_det_transform

    def log_joint_same_raw(self, z1, z2, length_norm: bool = False):
        return log_joint_same(self, self.project(z1, length_norm), self.project(z2, length_norm)) + (
            2.0 * self.log_det_transform
        )


def _as_float(value):
    return float(value) if np.ndim(value) == 0 else value


def length_normalize(e):
    """
    Function scales embeddings (..., d) to Euclidean norm sqrt(d).

    """
    e = np.asarray(e, dtype=np.float64)
    norms = np.linalg.norm(e, axis=-1, keepdims=True)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise DegenerateEmbeddingError()
    return e * (math.sqrt(e.shape[-1]) / norms)


def log_marginal(m: PldaModel, u):
    """
    Function returns sum_j log N(u_j; 0, psi_j + 1) over the last axis.

    """
    u = np.asarray(u, dtype=np.float64)
    m.check_dim(u)
    variance = m.psi + 1.0
    return _as_float(-0.5 * np.sum(LOG_2PI + np.log(variance) + u**2 / variance, axis=-1))


def log_joint_same(m: PldaModel, u1, u2):
    """
    Function returns the same-speaker joint log density of two transformed embeddings,
    per dimension a bivariate normal with covariance [[psi+1, psi], [psi, psi+1]].

    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    m.check_dim(u1)
    m.check_dim(u2)
    psi = m.psi
    det = 2.0 * psi + 1.0
    quad = ((psi + 1.0) * (u1**2 + u2**2) - 2.0 * psi * u1 * u2) / det
    return _as_float(np.sum(-LOG_2PI - 0.5 * np.log(det) - 0.5 * quad, axis=-1))


def log_lr_single(m: PldaModel, z1, z2, length_norm: bool = False):
    """
    Function returns the single-model log likelihood ratio of raw embeddings.

    """
    u1 = m.project(z1, length_norm)
    u2 = m.project(z2, length_norm)
    return log_joint_same(m, u1, u2) - log_marginal(m, u1) - log_marginal(m, u2)


def pairwise_log_joint_same(m: PldaModel, u: Matrix) -> Matrix:
    """
    Function returns n x n same-speaker joint log densities of transformed embeddings.

    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    m.check_dim(u)
    det = 2.0 * m.psi + 1.0
    square_weight = (m.psi + 1.0) / (2.0 * det)
    cross_weight = m.psi / det

    const = float(np.sum(-LOG_2PI - 0.5 * np.log(det)))
    squares = (u**2) @ square_weight
    cross = (u * cross_weight) @ u.T
    return const - squares[:, None] - squares[None, :] + cross


def pairwise_log_lr(m: PldaModel, z: Matrix, length_norm: bool = False) -> Matrix:
    u = m.project(np.atleast_2d(z), length_norm)
    marginal = log_marginal(m, u)
    return pairwise_log_joint_same(m, u) - marginal[:, None] - marginal[None, :]


@dataclass
class _Statistics:
    u: Matrix
    first: Matrix
    counts: Vector
    post_mean: Matrix
    post_var: Matrix
    loglik: float


def _diagonalize(mean: Vector, between: Matrix, within: Matrix, epsilon: float) -> PldaModel:
    """
    Function floors W by epsilon * I and solves the generalized problem B v = lambda W v.

    """
    dim = mean.shape[0]
    within = 0.5 * (within + within.T) + epsilon * np.eye(dim)
    between = 0.5 * (between + between.T)

    try:
        eigvals, eigvecs = sla.eigh(between, within)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise RankDeficientError(str(exc)) from exc

    order = np.argsort(eigvals)[::-1]
    psi = np.clip(eigvals[order], 0.0, None)
    return PldaModel(mean=mean, transform=eigvecs[:, order].T, psi=psi)


def _e_step(model: PldaModel, x: Matrix, index: IntVector, counts: Vector) -> _Statistics:
    num_speakers = counts.shape[0]
    u = model.project(x)

    first = np.zeros((num_speakers, model.dim))
    second = np.zeros((num_speakers, model.dim))
    np.add.at(first, index, u)
    np.add.at(second, index, u**2)

    n = counts[:, None]
    precision = 1.0 + n * model.psi
    post_var = model.psi / precision
    post_mean = post_var * first

    loglik = -0.5 * np.sum(n * LOG_2PI + np.log(precision) + second - model.psi * first**2 / precision)
    loglik += x.shape[0] * model.log_det_transform
    return _Statistics(u=u, first=first, counts=counts, post_mean=post_mean, post_var=post_var, loglik=float(loglik))


def _m_step(model: PldaModel, stats: _Statistics, epsilon: float) -> PldaModel:
    num_speakers = stats.counts.shape[0]
    total = stats.counts.sum()
    n = stats.counts[:, None]
    y = stats.post_mean

    mu = y.mean(axis=0)
    between = (y.T @ y + np.diag(stats.post_var.sum(axis=0))) / num_speakers - np.outer(mu, mu)
    within = (
        stats.u.T @ stats.u
        - stats.first.T @ y
        - y.T @ stats.first
        + y.T @ (n * y)
        + np.diag((n * stats.post_var).sum(axis=0))
    ) / total

    inverse = np.linalg.inv(model.transform)
    mean = model.mean + inverse @ mu
    return _diagonalize(mean, inverse @ between @ inverse.T, inverse @ within @ inverse.T, epsilon)


@log_params("plda")
def train_plda(data: LabeledEmbeddingSet, iterations: int | None = None, floor: float | None = None) -> PldaModel:
    """
    Function trains two-covariance PLDA by EM over per-speaker latent means.

    Initialization is closed-form from within/between scatter. The within-class
    covariance is floored by epsilon * I with epsilon = floor * trace(total cov) / d.
    The training log-likelihood of every iteration is kept in `loglik_history`.

    """
    iterations = settings.em_iterations if iterations is None else iterations
    floor = settings.within_floor if floor is None else floor
    if iterations < 1:
        raise TrainingDataError(f"EM needs at least one iteration, got {iterations}")
    data.check_trainable()

    x = data.embeddings
    num, dim = x.shape
    _, index = np.unique(np.asarray(data.speaker_ids), return_inverse=True)
    counts = np.bincount(index).astype(np.float64)

    total_cov = np.atleast_2d(np.cov(x, rowvar=False, bias=True))
    epsilon = floor * float(np.trace(total_cov)) / dim
    if not epsilon > 0.0:
        raise RankDeficientError("training embeddings have no variance")

    sums = np.zeros((counts.shape[0], dim))
    np.add.at(sums, index, x)
    speaker_means = sums / counts[:, None]
    residual = x - speaker_means[index]
    within = residual.T @ residual / num
    between = np.atleast_2d(np.cov(speaker_means, rowvar=False, bias=True))

    model = _diagonalize(x.mean(axis=0), between, within, epsilon)
    history = []
    for iteration in range(iterations):
        stats = _e_step(model, x, index, counts)
        history.append(stats.loglik)
        logger.info(f"EM iteration {iteration + 1}/{iterations}: log-likelihood {stats.loglik:.6f}")
        model = _m_step(model, stats, epsilon)

    history.append(_e_step(model, x, index, counts).loglik)
    for previous, current in zip(history, history[1:]):
        if current < previous - MONOTONICITY_TOLERANCE * abs(previous):
            logger.warning(f"EM log-likelihood decreased from {previous:.6f} to {current:.6f}")

    logger.info(f"Trained PLDA on {num} embeddings of {counts.shape[0]} speakers, d={dim}")
    return replace(model, loglik_history=tuple(history))
