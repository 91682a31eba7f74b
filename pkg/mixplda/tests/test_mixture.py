import math

import numpy as np
import pytest

from mixplda.exceptions import DimensionMismatchError, PriorError, TrainingDataError
from mixplda.mixture import (
    MixturePlda,
    log_denominator_mixture,
    log_lr_mixture,
    log_numerator_mixture,
    make_prior,
    pairwise_log_lr_mixture,
    parse_prior,
    train_mixture,
)
from mixplda.plda import PldaModel, log_lr_single
from mixplda.schemas import SPEAKER_TYPES, SpeakerType, SpeakerTypePrior
from mixplda.tests.fixtures import random_mixture, random_plda, toy_mixture
from mixplda.tests.oracles import nine_term_denominator, summed_numerator


def _random_prior(rng) -> SpeakerTypePrior:
    return SpeakerTypePrior.from_array(rng.dirichlet(np.ones(3)), normalize=True)


def test_make_prior_kinds():
    assert make_prior("uniform").as_array() == pytest.approx([1 / 3, 1 / 3, 1 / 3])
    paper = make_prior("nonuniform-paper")
    probs = paper.probs
    assert (probs[SpeakerType.FEMALE], probs[SpeakerType.CHILD], probs[SpeakerType.MALE]) == (0.4, 0.4, 0.2)
    oracle = make_prior("oracle", SpeakerType.CHILD)
    assert oracle.probs == {SpeakerType.MALE: 0.0, SpeakerType.FEMALE: 0.0, SpeakerType.CHILD: 1.0}
    assert oracle.is_one_hot


def test_make_prior_rejects_unnormalized_map():
    with pytest.raises(PriorError):
        make_prior({SpeakerType.MALE: 0.5, SpeakerType.FEMALE: 0.2})


def test_make_prior_rejects_out_of_range():
    with pytest.raises(PriorError):
        make_prior({SpeakerType.MALE: 1.5, SpeakerType.FEMALE: -0.5})


@pytest.mark.parametrize(
    "text, expected",
    [
        ("uniform", [1 / 3, 1 / 3, 1 / 3]),
        ("paper", [0.2, 0.4, 0.4]),
        ("oracle:F", [0.0, 1.0, 0.0]),
        ("F=0.4,C=0.4,M=0.2", [0.2, 0.4, 0.4]),
    ],
)
def test_parse_prior(text, expected):
    assert parse_prior(text).as_array() == pytest.approx(expected)


@pytest.mark.parametrize("text", ["oracle:X", "F=0.4,C", "gauss"])
def test_parse_prior_errors(text):
    with pytest.raises(PriorError):
        parse_prior(text)


def test_mixture_requires_all_components(rng):
    with pytest.raises(TrainingDataError):
        MixturePlda(components={SpeakerType.MALE: random_plda(rng, 2), SpeakerType.FEMALE: random_plda(rng, 2)})


def test_mixture_requires_equal_dims(rng):
    components = {SpeakerType.MALE: random_plda(rng, 2), SpeakerType.FEMALE: random_plda(rng, 2)}
    components[SpeakerType.CHILD] = random_plda(rng, 3)
    with pytest.raises(DimensionMismatchError):
        MixturePlda(components=components)


def test_numerator_one_hot_female(rng):
    mix = random_mixture(rng, 3)
    z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
    female = make_prior("oracle", SpeakerType.FEMALE)
    expected = mix.components[SpeakerType.FEMALE].log_joint_same_raw(z1, z2)
    assert log_numerator_mixture(mix, female, None, z1, z2) == pytest.approx(expected, abs=1e-12)


def test_numerator_identical_components(rng):
    component = random_plda(rng, 3)
    mix = MixturePlda(components={speaker_type: component for speaker_type in SPEAKER_TYPES})
    z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
    prior = _random_prior(rng)
    expected = component.log_joint_same_raw(z1, z2)
    assert log_numerator_mixture(mix, prior, None, z1, z2) == pytest.approx(expected, abs=1e-10)


def test_numerator_toy_summation():
    mix = toy_mixture()
    uniform = make_prior("uniform")
    z1, z2 = np.array([0.3]), np.array([-0.8])
    expected = summed_numerator(mix, [1 / 3] * 3, z1, z2)
    assert log_numerator_mixture(mix, uniform, None, z1, z2) == pytest.approx(expected, abs=1e-12)


def test_numerator_segment_priors_use_normalized_product(rng):
    mix = random_mixture(rng, 2)
    z1, z2 = rng.standard_normal(2), rng.standard_normal(2)
    p1 = SpeakerTypePrior.from_array([0.5, 0.5, 0.0])
    p2 = SpeakerTypePrior.from_array([0.2, 0.6, 0.2])
    weights = np.array([0.1, 0.3, 0.0]) / 0.4
    expected = summed_numerator(mix, weights, z1, z2)
    assert log_numerator_mixture(mix, p1, p2, z1, z2) == pytest.approx(expected, abs=1e-10)


def test_numerator_disjoint_segment_priors(rng):
    mix = random_mixture(rng, 2)
    male = make_prior("oracle", SpeakerType.MALE)
    child = make_prior("oracle", SpeakerType.CHILD)
    assert log_numerator_mixture(mix, male, child, np.zeros(2), np.ones(2)) == -math.inf


def test_denominator_one_hot_male(rng):
    mix = random_mixture(rng, 3)
    z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
    male = make_prior("oracle", SpeakerType.MALE)
    component = mix.components[SpeakerType.MALE]
    expected = component.log_marginal_raw(z1) + component.log_marginal_raw(z2)
    assert log_denominator_mixture(mix, male, male, z1, z2) == pytest.approx(expected, abs=1e-12)


def test_denominator_factored_equals_nine_terms(rng):
    for _ in range(50):
        mix = random_mixture(rng, 3)
        p1, p2 = _random_prior(rng), _random_prior(rng)
        z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
        factored = log_denominator_mixture(mix, p1, p2, z1, z2)
        expanded = log_denominator_mixture(mix, p1, p2, z1, z2, factored=False)
        assert abs(factored - expanded) <= 1e-10
        assert abs(factored - nine_term_denominator(mix, p1, p2, z1, z2)) <= 1e-10


def test_denominator_identical_components(rng):
    component = random_plda(rng, 3)
    mix = MixturePlda(components={speaker_type: component for speaker_type in SPEAKER_TYPES})
    z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
    expected = component.log_marginal_raw(z1) + component.log_marginal_raw(z2)
    assert log_denominator_mixture(mix, _random_prior(rng), _random_prior(rng), z1, z2) == pytest.approx(
        expected, abs=1e-10
    )


@pytest.mark.parametrize("speaker_type", SPEAKER_TYPES)
def test_lr_one_hot_collapses_to_single(rng, speaker_type):
    mix = random_mixture(rng, 4)
    prior = make_prior("oracle", speaker_type)
    for _ in range(20):
        z1, z2 = rng.standard_normal(4), rng.standard_normal(4)
        single = log_lr_single(mix.components[speaker_type], z1, z2)
        assert abs(log_lr_mixture(mix, prior, None, z1, z2) - single) <= 1e-10
        assert abs(log_lr_mixture(mix, prior, prior, z1, z2) - single) <= 1e-10


def test_lr_identical_components_collapse(rng):
    component = random_plda(rng, 3)
    mix = MixturePlda(components={speaker_type: component for speaker_type in SPEAKER_TYPES})
    z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
    assert log_lr_mixture(mix, _random_prior(rng), None, z1, z2) == pytest.approx(
        log_lr_single(component, z1, z2), abs=1e-10
    )


def test_lr_toy_explicit_summation():
    mix = toy_mixture()
    uniform = make_prior("uniform")
    z1, z2 = np.array([1.2]), np.array([0.4])
    numerator = summed_numerator(mix, [1 / 3] * 3, z1, z2)
    denominator = nine_term_denominator(mix, uniform, uniform, z1, z2)
    assert log_lr_mixture(mix, uniform, None, z1, z2) == pytest.approx(numerator - denominator, abs=1e-12)


def test_lr_symmetric_with_equal_priors(rng):
    mix = random_mixture(rng, 3)
    prior = _random_prior(rng)
    z1, z2 = rng.standard_normal(3), rng.standard_normal(3)
    assert abs(log_lr_mixture(mix, prior, prior, z1, z2) - log_lr_mixture(mix, prior, prior, z2, z1)) <= 1e-10


def test_lr_continuous_in_prior():
    mix = toy_mixture()
    z1, z2 = np.array([0.5]), np.array([-0.2])
    base = SpeakerTypePrior.from_array([0.2, 0.5, 0.3])
    moved = SpeakerTypePrior.from_array([0.2 + 1e-6, 0.5 - 1e-6, 0.3])
    assert abs(log_lr_mixture(mix, base, None, z1, z2) - log_lr_mixture(mix, moved, None, z1, z2)) <= 1e-3


def test_lr_dimension_mismatch(rng):
    mix = random_mixture(rng, 3)
    with pytest.raises(DimensionMismatchError):
        log_lr_mixture(mix, make_prior("uniform"), None, np.zeros(2), np.zeros(2))


def test_pairwise_shared_prior_matches_pair_calls(rng):
    mix = random_mixture(rng, 3)
    prior = _random_prior(rng)
    z = rng.standard_normal((4, 3))
    matrix = pairwise_log_lr_mixture(mix, z, prior)
    for i in range(4):
        for j in range(4):
            assert matrix[i, j] == pytest.approx(log_lr_mixture(mix, prior, None, z[i], z[j]), abs=1e-9)


def test_pairwise_segment_priors_match_pair_calls(rng):
    mix = random_mixture(rng, 3)
    priors = [_random_prior(rng) for _ in range(4)]
    z = rng.standard_normal((4, 3))
    matrix = pairwise_log_lr_mixture(mix, z, priors)
    for i in range(4):
        for j in range(4):
            expected = log_lr_mixture(mix, priors[i], priors[j], z[i], z[j])
            assert matrix[i, j] == pytest.approx(expected, abs=1e-9)


def test_pairwise_segment_priors_count(rng):
    mix = random_mixture(rng, 3)
    with pytest.raises(PriorError):
        pairwise_log_lr_mixture(mix, rng.standard_normal((3, 3)), [make_prior("uniform")] * 2)


def test_train_mixture_per_type(training_corpus, trained_mixture):
    assert set(trained_mixture.components) == set(SPEAKER_TYPES)
    assert trained_mixture.dim == training_corpus.dim
    for component in trained_mixture.components.values():
        assert isinstance(component, PldaModel)
        assert len(component.loglik_history) == 6


def test_train_mixture_needs_every_type(training_corpus):
    subset = training_corpus.subset(training_corpus.speakers_of_type(SpeakerType.MALE))
    with pytest.raises(TrainingDataError):
        train_mixture(subset, iterations=1)
