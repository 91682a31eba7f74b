"""
Seeded synthetic experiment suites comparing diarization conditions by DER.

"""

from collections.abc import Callable
from typing import Any

from pydantic import Field, field_validator

from mixplda.exceptions import UnknownSuiteError
from mixplda.log import log_params, logger
from mixplda.metrics import compute_der
from mixplda.mixture import MixturePlda, make_prior, train_mixture
from mixplda.pipeline import (
    DiarizationMode,
    MixtureMode,
    NumSpeakers,
    OneSpeakerMode,
    OracleTypeSplitMode,
    SingleMode,
    StopRule,
    Threshold,
    diarize,
)
from mixplda.plda import PldaModel, train_plda
from mixplda.schemas import (
    ConversationSpec,
    CorpusSpec,
    ExperimentRow,
    ExperimentTable,
    LabeledEmbeddingSet,
    MixPldaModel,
    SpeakerType,
)
from mixplda.synth import (
    Conversation,
    balance_by_type,
    draw_speakers,
    generate_conversation,
    generate_training_corpus,
    make_rng,
    structured_corpus_spec,
)
from mixplda.utils import median, run_parallel

__all__ = ["ExperimentConfig", "SUITES", "run_suite"]

TEST_SEED_OFFSET = 10_000


class ExperimentConfig(MixPldaModel):
    seeds: list[int] = Field(default_factory=lambda: list(range(10)))
    train_seed: int = 0
    dim: int = 12
    separation: float = 2.0
    child_within_scale: float = 1.0
    train_speakers_per_type: int = 200
    pool_speakers: dict[SpeakerType, int] = Field(
        default_factory=lambda: {SpeakerType.MALE: 3000, SpeakerType.FEMALE: 3000, SpeakerType.CHILD: 300}
    )
    balanced_per_type: int = 300
    balanced_within: float = 2.0
    conversation_speakers: dict[SpeakerType, int] = Field(
        default_factory=lambda: {SpeakerType.MALE: 2, SpeakerType.FEMALE: 2, SpeakerType.CHILD: 2}
    )
    imbalanced_conversation_speakers: dict[SpeakerType, int] = Field(
        default_factory=lambda: {SpeakerType.MALE: 1, SpeakerType.FEMALE: 2, SpeakerType.CHILD: 2}
    )
    conversation_length: float = 60.0
    overlap: float = 0.0
    single_threshold: float = -0.2
    oracle_threshold: float = 0.0
    em_iterations: int = 10
    length_norm: bool = False
    jobs: int = 1

    @field_validator("seeds", mode="before")
    @classmethod
    def split_seeds(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(item) for item in value.replace(",", " ").split()]
        return value

    @field_validator("pool_speakers", "conversation_speakers", "imbalanced_conversation_speakers", mode="before")
    @classmethod
    def split_counts(cls, value: Any) -> Any:
        if isinstance(value, str):
            counts = {}
            for item in value.split(","):
                key, _, count = item.partition("=")
                counts[key.strip()] = int(count)
            return counts
        return value


def _corpus_spec(config: ExperimentConfig, speakers, seed: int = 0, within: float | None = None) -> CorpusSpec:
    """
    Function builds the structured corpus spec, `within` overrides the within-speaker
    variance of the speaker-discriminative dimensions.

    """
    overrides = {} if within is None else {"within_discriminative": within}
    return structured_corpus_spec(
        dim=config.dim,
        speakers=speakers,
        separation=config.separation,
        child_within_scale=config.child_within_scale,
        seed=seed,
        **overrides,
    )


def _train_corpus(config: ExperimentConfig, speakers, within: float | None = None) -> LabeledEmbeddingSet:
    return generate_training_corpus(_corpus_spec(config, speakers, config.train_seed, within))


def _conversation(
    config: ExperimentConfig, seed: int, speakers_per_type: dict[SpeakerType, int], within: float | None = None
) -> Conversation:
    """
    Function draws unseen test speakers and simulates one conversation for `seed`.

    """
    spec = _corpus_spec(config, speakers_per_type, within=within)
    speakers = draw_speakers(spec, make_rng(TEST_SEED_OFFSET + seed), prefix=f"s{seed}_")
    conversation_spec = ConversationSpec(
        recording_id=f"conv{seed:03d}",
        length=config.conversation_length,
        overlap=config.overlap,
        seed=seed,
    )
    return generate_conversation(conversation_spec, speakers)


Condition = tuple[str, DiarizationMode, Callable[[Conversation], StopRule]]


def _gold(conversation: Conversation) -> StopRule:
    return NumSpeakers(conversation.num_speakers)


def _evaluate(
    config: ExperimentConfig,
    conditions: list[Condition],
    speakers_per_type: dict[SpeakerType, int],
    suite: str,
    within: float | None = None,
) -> ExperimentTable:
    def run_seed(seed: int) -> list[float]:
        conversation = _conversation(config, seed, speakers_per_type, within)
        ders = []
        for _, mode, stop in conditions:
            hypothesis = diarize(conversation.inputs(), mode, stop(conversation), length_norm=config.length_norm)
            ders.append(compute_der(conversation.turns, hypothesis.turns).der)
        return ders

    per_seed = run_parallel(run_seed, config.seeds, config.jobs)
    rows = []
    for k, (condition, _, _) in enumerate(conditions):
        ders = [values[k] for values in per_seed]
        rows.append(ExperimentRow(condition=condition, ders=ders, median=median(ders)))
        logger.info(f"[{suite}] {condition}: median DER {median(ders):.4f}")
    return ExperimentTable(suite=suite, seeds=list(config.seeds), rows=rows)


def _train_models(config: ExperimentConfig, data: LabeledEmbeddingSet) -> tuple[PldaModel, MixturePlda]:
    return train_plda(data, config.em_iterations), train_mixture(data, config.em_iterations)


def oracle_vs_baseline(config: ExperimentConfig) -> ExperimentTable:
    """
    Single pooled PLDA against oracle speaker-type split, both stopped by threshold.

    """
    data = _train_corpus(config, config.train_speakers_per_type)
    single, mixture = _train_models(config, data)
    conditions: list[Condition] = [
        ("single", SingleMode(single), lambda _: Threshold(config.single_threshold)),
        (
            "oracle-split",
            OracleTypeSplitMode(mixture, default_threshold=config.oracle_threshold),
            lambda _: Threshold(config.oracle_threshold),
        ),
        ("same-speaker", OneSpeakerMode(), _gold),
    ]
    return _evaluate(config, conditions, config.conversation_speakers, "oracle-vs-baseline")


def balanced_vs_unbalanced(config: ExperimentConfig) -> ExperimentTable:
    """
    Mixture trained on an imbalanced pool against the same pool balanced per type.
    Test conversations are type-imbalanced and scored with the gold speaker count.
    Training and test speakers use `balanced_within` as the within-speaker variance of
    the discriminative dimensions.

    """
    pool = _train_corpus(config, config.pool_speakers, config.balanced_within)
    balanced = balance_by_type(pool, config.balanced_per_type, seed=config.train_seed)
    paper = make_prior("nonuniform-paper")
    uniform = make_prior("uniform")

    single = train_plda(pool, config.em_iterations)
    imbalanced_mixture = train_mixture(pool, config.em_iterations, prior=paper)
    balanced_mixture = train_mixture(balanced, config.em_iterations, prior=paper)
    conditions: list[Condition] = [
        ("single", SingleMode(single), _gold),
        ("imbalanced", MixtureMode(imbalanced_mixture, prior=paper), _gold),
        ("balanced", MixtureMode(balanced_mixture, prior=paper), _gold),
        ("balanced-uniform", MixtureMode(balanced_mixture, prior=uniform), _gold),
    ]
    return _evaluate(
        config, conditions, config.imbalanced_conversation_speakers, "balanced-vs-unbalanced", config.balanced_within
    )


def prior_sweep(config: ExperimentConfig) -> ExperimentTable:
    """
    Mixture scoring with uniform, paper and oracle per-segment speaker-type priors.

    """
    data = _train_corpus(config, config.train_speakers_per_type)
    mixture = train_mixture(data, config.em_iterations)
    conditions: list[Condition] = [
        ("uniform", MixtureMode(mixture, prior=make_prior("uniform")), _gold),
        ("paper", MixtureMode(mixture, prior=make_prior("nonuniform-paper")), _gold),
        ("oracle", MixtureMode(mixture, oracle_prior=True), _gold),
    ]
    return _evaluate(config, conditions, config.conversation_speakers, "prior-sweep")


SUITES: dict[str, Callable[[ExperimentConfig], ExperimentTable]] = {
    "oracle-vs-baseline": oracle_vs_baseline,
    "balanced-vs-unbalanced": balanced_vs_unbalanced,
    "prior-sweep": prior_sweep,
}


@log_params("experiments")
def run_suite(name: str, config: ExperimentConfig | None = None) -> ExperimentTable:
    if name not in SUITES:
        raise UnknownSuiteError(name, list(SUITES))
    return SUITES[name](config or ExperimentConfig())
