import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from mixplda.exceptions import (
    DegenerateEmbeddingError,
    DimensionMismatchError,
    RankDeficientError,
    SingularTransformError,
    TrainingDataError,
)
from mixplda.plda import (
    PldaModel,
    length_normalize,
    log_joint_same,
    log_lr_single,
    log_marginal,
    pairwise_log_lr,
    train_plda,
)
from mixplda.schemas import CorpusSpec, LabeledEmbeddingSet, SpeakerType, TypeParams
from mixplda.synth import generate_training_corpus
from mixplda.tests.fixtures import random_plda
from mixplda.tests.oracles import scalar_log_lr


def _model(psi) -> PldaModel:
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    return PldaModel(mean=np.zeros(psi.shape[0]), transform=np.eye(psi.shape[0]), psi=psi)


def _known_corpus(speakers: int, per_speaker: int, between=(4.0, 2.0, 1.0, 0.5), seed: int = 3) -> LabeledEmbeddingSet:
    dim = len(between)
    spec = CorpusSpec(
        dim=dim,
        types={
            SpeakerType.FEMALE: TypeParams(
                offset=[0.0] * dim, between_var=list(between), within_var=[1.0] * dim, speakers=speakers
            )
        },
        embeddings_per_speaker=(per_speaker, per_speaker),
        seed=seed,
    )
    return generate_training_corpus(spec)


def test_length_normalize_examples():
    np.testing.assert_allclose(length_normalize([3.0, 4.0]), [0.6 * math.sqrt(2), 0.8 * math.sqrt(2)])
    np.testing.assert_allclose(length_normalize([1.0, 0.0, 0.0]), [math.sqrt(3), 0.0, 0.0])


def test_length_normalize_random_norm(rng):
    e = length_normalize(rng.standard_normal(512))
    assert abs(np.linalg.norm(e) - math.sqrt(512)) <= 1e-9


def test_length_normalize_zero_vector():
    with pytest.raises(DegenerateEmbeddingError, match="degenerate embedding"):
        length_normalize(np.zeros(4))


def test_log_marginal_examples():
    assert log_marginal(_model(0.0), np.zeros(1)) == pytest.approx(-0.9189385, abs=1e-7)
    assert log_marginal(_model(3.0), np.array([2.0])) == pytest.approx(norm(0.0, 2.0).logpdf(2.0), abs=1e-12)
    assert log_marginal(_model([0.0, 0.0]), np.zeros(2)) == pytest.approx(2 * -0.9189385, abs=1e-7)


def test_log_marginal_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        log_marginal(_model([1.0, 1.0]), np.zeros(3))


def test_log_joint_same_without_speaker_variability(rng):
    model = _model([0.0, 0.0, 0.0])
    u1, u2 = rng.standard_normal(3), rng.standard_normal(3)
    assert log_joint_same(model, u1, u2) == pytest.approx(log_marginal(model, u1) + log_marginal(model, u2), abs=1e-12)


def test_log_joint_same_scalar_closed_form():
    expected = multivariate_normal(mean=[0, 0], cov=[[2, 1], [1, 2]]).logpdf([0, 0])
    assert log_joint_same(_model(1.0), np.zeros(1), np.zeros(1)) == pytest.approx(expected, abs=1e-12)


def test_log_joint_same_symmetric(rng):
    model = _model(rng.uniform(0, 3, size=5))
    u1, u2 = rng.standard_normal(5), rng.standard_normal(5)
    assert abs(log_joint_same(model, u1, u2) - log_joint_same(model, u2, u1)) <= 1e-12


def test_log_lr_single_zero_psi(rng):
    model = random_plda(rng, 4, psi_scale=0.0)
    for _ in range(20):
        assert abs(log_lr_single(model, rng.standard_normal(4), rng.standard_normal(4))) <= 1e-10


def test_log_lr_single_scalar_closed_form(scalar_model):
    expected = (
        multivariate_normal(mean=[0, 0], cov=[[2, 1], [1, 2]]).logpdf([0, 0]) - 2 * norm(0, math.sqrt(2)).logpdf(0)
    )
    assert log_lr_single(scalar_model, np.zeros(1), np.zeros(1)) == pytest.approx(expected, abs=1e-12)
    assert log_lr_single(scalar_model, [0.7], [-1.3]) == pytest.approx(scalar_log_lr(1.0, 0.7, -1.3), abs=1e-10)


def test_log_lr_single_prefers_close_pairs(scalar_model):
    assert log_lr_single(scalar_model, [0.0], [0.0]) >= log_lr_single(scalar_model, [0.0], [5.0])


def test_log_lr_single_symmetric(rng):
    model = random_plda(rng, 6)
    for _ in range(20):
        z1, z2 = rng.standard_normal(6), rng.standard_normal(6)
        assert abs(log_lr_single(model, z1, z2) - log_lr_single(model, z2, z1)) <= 1e-10


@pytest.mark.parametrize("length_norm", [False, True])
def test_pairwise_log_lr_matches_pair_calls(rng, length_norm):
    model = random_plda(rng, 4)
    z = rng.standard_normal((5, 4))
    matrix = pairwise_log_lr(model, z, length_norm)
    for i in range(5):
        for j in range(5):
            assert matrix[i, j] == pytest.approx(log_lr_single(model, z[i], z[j], length_norm), abs=1e-9)


def test_model_rejects_negative_psi():
    with pytest.raises(ValueError):
        _model([1.0, -0.5])


def test_model_rejects_singular_transform():
    with pytest.raises(SingularTransformError):
        PldaModel(mean=np.zeros(2), transform=np.array([[1.0, 2.0], [2.0, 4.0]]), psi=np.ones(2))


def test_model_is_read_only():
    model = _model([1.0, 2.0])
    with pytest.raises(ValueError):
        model.psi[0] = 3.0


def test_train_needs_two_speakers():
    data = LabeledEmbeddingSet(embeddings=np.zeros((3, 2)) + [[1, 2]], speaker_ids=["a", "a", "a"])
    with pytest.raises(TrainingDataError):
        train_plda(data)


def test_train_needs_repeated_speaker():
    data = LabeledEmbeddingSet(embeddings=np.eye(3), speaker_ids=["a", "b", "c"])
    with pytest.raises(TrainingDataError):
        train_plda(data)


def test_train_needs_positive_iterations(training_corpus):
    with pytest.raises(TrainingDataError):
        train_plda(training_corpus, iterations=0)


def test_train_constant_data_is_rank_deficient():
    data = LabeledEmbeddingSet(embeddings=np.ones((4, 2)), speaker_ids=["a", "a", "b", "b"])
    with pytest.raises(RankDeficientError, match="rank-deficient data"):
        train_plda(data)


def test_train_two_scalar_speakers():
    data = LabeledEmbeddingSet(embeddings=[[0.0], [0.0], [10.0], [10.0]], speaker_ids=["a", "a", "b", "b"])
    model = train_plda(data, iterations=5)
    assert abs(model.project([0.0]) - model.project([10.0]))[0] > 0.0
    assert log_lr_single(model, [0.0], [0.0]) > log_lr_single(model, [0.0], [10.0])


def test_train_identical_speaker_embeddings_hits_floor(rng):
    means = rng.standard_normal((50, 2))
    data = LabeledEmbeddingSet(
        embeddings=np.repeat(means, 3, axis=0),
        speaker_ids=[f"s{i}" for i in range(50) for _ in range(3)],
    )
    model = train_plda(data, iterations=3)
    assert np.all(np.isfinite(model.psi))
    assert model.psi.min() > 100.0


def test_train_log_likelihood_is_monotone():
    model = train_plda(_known_corpus(200, 10), iterations=10)
    history = model.loglik_history
    assert len(history) == 11
    for previous, current in zip(history, history[1:]):
        assert current >= previous - 1e-8 * abs(previous)


def test_train_recovers_generating_psi():
    model = train_plda(_known_corpus(2000, 10), iterations=10)
    expected = np.array([4.0, 2.0, 1.0, 0.5])
    np.testing.assert_array_less(np.abs(model.psi - expected) / expected, 0.15)


@pytest.mark.parametrize("seed", [0, 3, 7, 9])
def test_train_recovers_generating_psi_small_corpus(seed):
    model = train_plda(_known_corpus(200, 10, seed=seed), iterations=10)
    expected = np.array([4.0, 2.0, 1.0, 0.5])
    np.testing.assert_array_less(np.abs(model.psi - expected) / expected, 0.15)


def test_train_whitens_within_class_covariance():
    data = _known_corpus(100, 20)
    model = train_plda(data, iterations=10)
    u = model.project(data.embeddings)
    ids = np.asarray(data.speaker_ids)
    centered = np.vstack([u[ids == s] - u[ids == s].mean(axis=0) for s in data.speakers()])
    within = centered.T @ centered / (len(ids) - len(data.speakers()))
    assert np.linalg.norm(within - np.eye(model.dim)) <= 0.1
