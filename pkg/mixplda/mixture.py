"""
Mixture of speaker-type PLDA models.

Same-speaker hypothesis: both embeddings share one speaker type, so the numerator
is a prior-weighted sum over types of joint densities. Different-speaker hypothesis:
types are independent, so the denominator is a 9-term sum that factorizes into a
product of two per-embedding mixture marginals. Components have their own
transforms, so all densities here are raw-space densities.

"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np
from scipy.special import logsumexp

from mixplda.exceptions import DimensionMismatchError, PriorError, TrainingDataError
from mixplda.generics import Matrix, Vector
from mixplda.log import log_params, logger
from mixplda.plda import PldaModel, log_marginal, pairwise_log_joint_same, train_plda
from mixplda.schemas import SPEAKER_TYPES, LabeledEmbeddingSet, SpeakerType, SpeakerTypePrior

__all__ = [
    "MixturePlda",
    "PAPER_PRIOR",
    "make_prior",
    "parse_prior",
    "log_numerator_mixture",
    "log_denominator_mixture",
    "log_lr_mixture",
    "pairwise_log_lr_mixture",
    "train_mixture",
]

PAPER_PRIOR = {SpeakerType.FEMALE: 0.4, SpeakerType.CHILD: 0.4, SpeakerType.MALE: 0.2}


def _uniform_prior() -> SpeakerTypePrior:
    return SpeakerTypePrior.from_array(np.full(len(SPEAKER_TYPES), 1.0 / len(SPEAKER_TYPES)), normalize=True)


@dataclass(frozen=True)
class MixturePlda:
    """
    Speaker type -> PLDA component map plus default prior. Immutable after construction.

    """

    components: Mapping[SpeakerType, PldaModel]
    default_prior: SpeakerTypePrior = field(default_factory=_uniform_prior)

    def __post_init__(self):
        components = {SpeakerType(key): value for key, value in self.components.items()}
        missing = [speaker_type.value for speaker_type in SPEAKER_TYPES if speaker_type not in components]
        if missing:
            raise TrainingDataError(f"Mixture is missing components: {', '.join(missing)}")

        dims = {component.dim for component in components.values()}
        if len(dims) != 1:
            dims_sorted = sorted(dims)
            raise DimensionMismatchError(dims_sorted[0], dims_sorted[-1])

        object.__setattr__(self, "components", MappingProxyType(components))

    @property
    def dim(self) -> int:
        return self.components[SpeakerType.MALE].dim

    def ordered(self) -> tuple[PldaModel, ...]:
        return tuple(self.components[speaker_type] for speaker_type in SPEAKER_TYPES)


def make_prior(kind: str | Mapping, speaker_type: SpeakerType | str | None = None) -> SpeakerTypePrior:
    """
    Function builds prior of kind uniform, nonuniform-paper, oracle (one-hot on
    `speaker_type`) or from an explicit mapping that must already sum to one.

    """
    if isinstance(kind, Mapping):
        return SpeakerTypePrior(probs=dict(kind))
    if kind == "uniform":
        return _uniform_prior()
    if kind in ("nonuniform-paper", "paper"):
        return SpeakerTypePrior(probs=PAPER_PRIOR)
    if kind == "oracle":
        if speaker_type is None:
            raise PriorError("Oracle prior needs a speaker type")
        return SpeakerTypePrior(probs={SpeakerType(speaker_type): 1.0})
    raise PriorError(f"Unknown prior kind '{kind}'")


def parse_prior(text: str) -> SpeakerTypePrior:
    """
    Function parses `uniform`, `paper`, `oracle:<M|F|C>` or `F=0.4,C=0.4,M=0.2`.

    """
    text = text.strip()
    if text in ("uniform", "paper", "nonuniform-paper"):
        return make_prior(text)
    if text.startswith("oracle:"):
        try:
            return make_prior("oracle", SpeakerType(text.split(":", 1)[1].strip()))
        except ValueError as exc:
            raise PriorError(f"Unknown speaker type in prior '{text}'") from exc

    mapping = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise PriorError(f"Cannot parse prior '{text}'")
        try:
            mapping[SpeakerType(key.strip())] = float(value)
        except ValueError as exc:
            raise PriorError(f"Cannot parse prior item '{item}'") from exc
    return make_prior(mapping)


def _log_weighted_sum(log_values: np.ndarray, weights: np.ndarray) -> np.ndarray | float:
    """
    Function returns log sum_g weights[g] * exp(log_values[g]) over the first axis.
    Components with zero weight everywhere are dropped before summation.

    """
    log_values = np.asarray(log_values, dtype=np.float64)
    weights = np.broadcast_to(np.asarray(weights, dtype=np.float64), log_values.shape)
    active = np.any(weights.reshape(weights.shape[0], -1) > 0.0, axis=1)
    if not np.any(active):
        result = np.full(log_values.shape[1:], -np.inf)
        return float(result) if result.ndim == 0 else result

    log_values = log_values[active]
    weights = weights[active]
    with np.errstate(divide="ignore"):
        if np.all(weights > 0.0):
            result = logsumexp(log_values + np.log(weights), axis=0)
        else:
            result = logsumexp(log_values, axis=0, b=weights)
    return float(result) if np.ndim(result) == 0 else result


def _numerator_weights(prior1: SpeakerTypePrior, prior2: SpeakerTypePrior | None) -> Vector:
    """
    Shared prior (prior2 is None) is used as is. Two segment priors are combined as
    normalize(prior1 * prior2); disjoint priors give zero same-speaker mass.

    """
    if prior2 is None:
        return prior1.as_array()

    product = prior1.as_array() * prior2.as_array()
    total = product.sum()
    return product / total if total > 0.0 else product


def _check_dim(mix: MixturePlda, *embeddings) -> None:
    for embedding in embeddings:
        size = np.shape(embedding)[-1]
        if size != mix.dim:
            raise DimensionMismatchError(mix.dim, size)


def log_numerator_mixture(
    mix: MixturePlda,
    prior1: SpeakerTypePrior,
    prior2: SpeakerTypePrior | None,
    z1,
    z2,
    length_norm: bool = False,
) -> float:
    _check_dim(mix, z1, z2)
    joints = np.array([component.log_joint_same_raw(z1, z2, length_norm) for component in mix.ordered()])
    return _log_weighted_sum(joints, _numerator_weights(prior1, prior2))


def log_denominator_mixture(
    mix: MixturePlda,
    prior1: SpeakerTypePrior,
    prior2: SpeakerTypePrior | None,
    z1,
    z2,
    length_norm: bool = False,
    factored: bool = True,
) -> float:
    """
    Function returns the different-speaker log density, either from the factored
    product-of-sums form or from the explicit 9-term sum.

    """
    _check_dim(mix, z1, z2)
    weights1 = prior1.as_array()
    weights2 = (prior2 or prior1).as_array()
    marginals1 = np.array([component.log_marginal_raw(z1, length_norm) for component in mix.ordered()])
    marginals2 = np.array([component.log_marginal_raw(z2, length_norm) for component in mix.ordered()])

    if factored:
        return _log_weighted_sum(marginals1, weights1) + _log_weighted_sum(marginals2, weights2)

    terms = (marginals1[:, None] + marginals2[None, :]).reshape(-1)
    return _log_weighted_sum(terms, np.outer(weights1, weights2).reshape(-1))


def log_lr_mixture(
    mix: MixturePlda,
    prior1: SpeakerTypePrior,
    prior2: SpeakerTypePrior | None,
    z1,
    z2,
    length_norm: bool = False,
) -> float:
    """
    Function returns the mixture log likelihood ratio, numerator minus denominator.

    """
    numerator = log_numerator_mixture(mix, prior1, prior2, z1, z2, length_norm)
    return numerator - log_denominator_mixture(mix, prior1, prior2, z1, z2, length_norm)


def pairwise_log_lr_mixture(
    mix: MixturePlda,
    z: Matrix,
    priors: SpeakerTypePrior | Sequence[SpeakerTypePrior],
    length_norm: bool = False,
) -> Matrix:
    """
    Function returns n x n mixture log LRs for a shared prior or for per-segment priors.

    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    _check_dim(mix, z)
    n = z.shape[0]

    joints, marginals = [], []
    for component in mix.ordered():
        u = component.project(z, length_norm)
        joints.append(pairwise_log_joint_same(component, u) + 2.0 * component.log_det_transform)
        marginals.append(log_marginal(component, u) + component.log_det_transform)
    joints = np.stack(joints)
    marginals = np.stack(marginals).reshape(len(SPEAKER_TYPES), n)

    if isinstance(priors, SpeakerTypePrior):
        weights = priors.as_array()
        numerator = _log_weighted_sum(joints, weights[:, None, None])
        denominator = _log_weighted_sum(marginals, weights[:, None])
    else:
        if len(priors) != n:
            raise PriorError(f"Got {len(priors)} segment priors for {n} embeddings")
        table = np.stack([prior.as_array() for prior in priors])
        product = table.T[:, :, None] * table.T[:, None, :]
        total = product.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            pair_weights = np.where(total > 0.0, product / total, 0.0)
        numerator = _log_weighted_sum(joints, pair_weights)
        denominator = _log_weighted_sum(marginals, table.T)

    return numerator - denominator[:, None] - denominator[None, :]


@log_params("mixture")
def train_mixture(
    data: LabeledEmbeddingSet,
    iterations: int | None = None,
    prior: SpeakerTypePrior | None = None,
) -> MixturePlda:
    """
    Function trains one PLDA component per speaker type on that type's speakers.

    """
    components = {}
    for speaker_type in SPEAKER_TYPES:
        subset = data.by_type(speaker_type)
        if not subset.speaker_ids:
            raise TrainingDataError(f"No training speakers of type {speaker_type.value}")
        logger.info(f"Training {speaker_type.value} component on {len(subset.speakers())} speakers")
        components[speaker_type] = train_plda(subset, iterations)

    return MixturePlda(components=components, default_prior=prior or _uniform_prior())
