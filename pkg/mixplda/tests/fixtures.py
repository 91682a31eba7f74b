import numpy as np
import pytest

from mixplda.mixture import MixturePlda, make_prior, train_mixture
from mixplda.plda import PldaModel
from mixplda.schemas import ConversationSpec, SpeakerType
from mixplda.synth import (
    draw_speakers,
    generate_conversation,
    generate_training_corpus,
    make_rng,
    structured_corpus_spec,
)
from mixplda.tests.client import CliClient


def random_plda(rng: np.random.Generator, dim: int, psi_scale: float = 3.0) -> PldaModel:
    """
    Function returns a well-conditioned random PLDA model.

    """
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    scales = rng.uniform(0.5, 2.0, size=dim)
    return PldaModel(
        mean=rng.standard_normal(dim),
        transform=scales[:, None] * q,
        psi=np.sort(rng.uniform(0.0, psi_scale, size=dim))[::-1],
    )


def random_mixture(rng: np.random.Generator, dim: int) -> MixturePlda:
    return MixturePlda(
        components={
            SpeakerType.MALE: random_plda(rng, dim),
            SpeakerType.FEMALE: random_plda(rng, dim),
            SpeakerType.CHILD: random_plda(rng, dim),
        }
    )


def toy_mixture(psis=(0.0, 1.0, 4.0)) -> MixturePlda:
    """
    Function returns d=1 mixture with identity transforms and the given psi per type.

    """
    return MixturePlda(
        components={
            speaker_type: PldaModel(mean=np.zeros(1), transform=np.eye(1), psi=np.array([psi]))
            for speaker_type, psi in zip((SpeakerType.MALE, SpeakerType.FEMALE, SpeakerType.CHILD), psis)
        }
    )


@pytest.fixture
def rng():
    return make_rng(20240521)


@pytest.fixture
def cli():
    return CliClient()


@pytest.fixture
def scalar_model():
    return PldaModel(mean=np.zeros(1), transform=np.eye(1), psi=np.array([1.0]))


@pytest.fixture(scope="session")
def corpus_spec():
    return structured_corpus_spec(dim=12, speakers=60, seed=11)


@pytest.fixture(scope="session")
def training_corpus(corpus_spec):
    return generate_training_corpus(corpus_spec)


@pytest.fixture(scope="session")
def trained_mixture(training_corpus):
    return train_mixture(training_corpus, iterations=5, prior=make_prior("uniform"))


@pytest.fixture(scope="session")
def conversation():
    spec = structured_corpus_spec(dim=12, speakers=2)
    speakers = draw_speakers(spec, make_rng(99), prefix="t_")
    return generate_conversation(ConversationSpec(recording_id="conv", length=60.0, seed=5), speakers)
