"""
Seeded synthetic corpora with speaker-type structure.

Speakers of each type are drawn from a two-covariance model of that type. All
randomness comes from a counter-based Philox generator seeded from the spec, so
corpora and conversations are reproducible bit for bit.

"""

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from mixplda.exceptions import MixPldaError, SegmentationError, TrainingDataError
from mixplda.generics import Interval, Vector
from mixplda.log import log_params, logger
from mixplda.pipeline import RecordingInputs, uniform_segment
from mixplda.priors import FramePosteriorSequence
from mixplda.schemas import (
    SPEAKER_TYPES,
    ConversationSpec,
    CorpusSpec,
    EmbeddingRecord,
    LabeledEmbeddingSet,
    Segment,
    SpeakerType,
    Turn,
    TypeLabel,
    TypeParams,
)
from mixplda.utils import merge_intervals, overlap

__all__ = [
    "SyntheticSpeaker",
    "Conversation",
    "make_rng",
    "structured_corpus_spec",
    "corpus_spec_from_config",
    "draw_speakers",
    "generate_training_corpus",
    "corpus_records",
    "generate_conversation",
    "synthesize_posteriors",
    "balance_by_type",
]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SyntheticSpeaker:
    speaker_id: str
    speaker_type: SpeakerType
    mean: Vector
    within_var: Vector

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        noise = rng.standard_normal((count, self.mean.shape[0]))
        return self.mean + np.sqrt(self.within_var) * noise


@dataclass(frozen=True)
class Conversation:
    recording_id: str
    sad: list[Interval]
    turns: list[Turn]
    segments: list[Segment]
    embeddings: list[EmbeddingRecord]
    type_labels: list[TypeLabel]
    speakers: list[SyntheticSpeaker] = field(default_factory=list)

    @property
    def num_speakers(self) -> int:
        return len({turn.speaker for turn in self.turns})

    def inputs(self, with_labels: bool = True) -> RecordingInputs:
        return RecordingInputs(
            recording_id=self.recording_id,
            sad=self.sad,
            embeddings=self.embeddings,
            type_labels=self.type_labels if with_labels else None,
        )


def structured_corpus_spec(
    dim: int = 12,
    speakers: int | Mapping[SpeakerType, int] = 100,
    separation: float = 2.0,
    discriminative_dims: int = 4,
    between_discriminative: float = 2.0,
    between_other: float = 0.01,
    within_discriminative: float = 0.25,
    within_other: float = 4.0,
    child_within_scale: float = 1.0,
    embeddings_per_speaker: tuple[int, int] = (4, 8),
    seed: int = 0,
) -> CorpusSpec:
    """
    Function builds a corpus spec where each type has its own speaker-discriminative
    subspace: high between-speaker and low within-speaker variance there, and
    noisy remaining dimensions.

    Type offsets lie along orthogonal axes and have length
    separation * sqrt(sum of the type's between-speaker variances).
    `child_within_scale` widens the child within-speaker variance.

    """
    if dim < len(SPEAKER_TYPES) or discriminative_dims < 1:
        raise MixPldaError(f"Structured corpus needs dim >= 3 and discriminative dims >= 1, got {dim}")
    if isinstance(speakers, int):
        speakers = {speaker_type: speakers for speaker_type in SPEAKER_TYPES}

    stride = dim // len(SPEAKER_TYPES)
    types = {}
    for k, speaker_type in enumerate(SPEAKER_TYPES):
        if speakers.get(speaker_type, 0) < 1:
            continue
        discriminative = [(k * stride + j) % dim for j in range(discriminative_dims)]
        between = np.full(dim, between_other)
        within = np.full(dim, within_other)
        between[discriminative] = between_discriminative
        within[discriminative] = within_discriminative
        if speaker_type == SpeakerType.CHILD:
            within = within * child_within_scale

        offset = np.zeros(dim)
        offset[k * stride] = separation * math.sqrt(between.sum())
        types[speaker_type] = TypeParams(
            offset=offset.tolist(),
            between_var=between.tolist(),
            within_var=within.tolist(),
            speakers=speakers[speaker_type],
        )

    return CorpusSpec(dim=dim, types=types, embeddings_per_speaker=embeddings_per_speaker, seed=seed)


def corpus_spec_from_config(config: Mapping[str, str]) -> CorpusSpec:
    """
    Function builds a structured corpus spec from a flat key-value config.

    """
    casts = {
        "dim": int,
        "speakers": int,
        "separation": float,
        "discriminative_dims": int,
        "between_discriminative": float,
        "between_other": float,
        "within_discriminative": float,
        "within_other": float,
        "child_within_scale": float,
        "seed": int,
    }
    unknown = set(config) - set(casts) - {"embeddings_min", "embeddings_max", "speakers_M", "speakers_F", "speakers_C"}
    if unknown:
        raise MixPldaError(f"Unknown corpus config keys: {', '.join(sorted(unknown))}")

    try:
        kwargs = {key: cast(config[key]) for key, cast in casts.items() if key in config}
        default_count = kwargs.pop("speakers", 100)
        kwargs["speakers"] = {
            speaker_type: int(config.get(f"speakers_{speaker_type.value}", default_count))
            for speaker_type in SPEAKER_TYPES
        }
        kwargs["embeddings_per_speaker"] = (
            int(config.get("embeddings_min", 4)),
            int(config.get("embeddings_max", 8)),
        )
    except ValueError as exc:
        raise MixPldaError(f"Invalid corpus config value: {exc}") from exc
    return structured_corpus_spec(**kwargs)


def draw_speakers(spec: CorpusSpec, rng: np.random.Generator, prefix: str = "") -> list[SyntheticSpeaker]:
    """
    Function draws speaker means from N(type offset, between var) for every type in
    M, F, C order.

    """
    speakers = []
    for speaker_type in SPEAKER_TYPES:
        params = spec.types.get(speaker_type)
        if params is None:
            continue
        offset = np.asarray(params.offset)
        between = np.asarray(params.between_var)
        within = np.asarray(params.within_var)
        for i in range(params.speakers):
            mean = offset + np.sqrt(between) * rng.standard_normal(spec.dim)
            speakers.append(
                SyntheticSpeaker(
                    speaker_id=f"{prefix}{speaker_type.value}{i + 1:04d}",
                    speaker_type=speaker_type,
                    mean=mean,
                    within_var=within,
                )
            )
    return speakers


@log_params("synth")
def generate_training_corpus(spec: CorpusSpec) -> LabeledEmbeddingSet:
    rng = make_rng(spec.seed)
    speakers = draw_speakers(spec, rng)
    low, high = spec.embeddings_per_speaker

    blocks, speaker_ids = [], []
    for speaker in speakers:
        count = int(rng.integers(low, high + 1))
        blocks.append(speaker.sample(rng, count))
        speaker_ids.extend([speaker.speaker_id] * count)

    logger.info(f"Generated {len(speaker_ids)} embeddings of {len(speakers)} speakers, d={spec.dim}")
    return LabeledEmbeddingSet(
        embeddings=np.vstack(blocks),
        speaker_ids=speaker_ids,
        speaker_types={speaker.speaker_id: speaker.speaker_type for speaker in speakers},
    )


def corpus_records(data: LabeledEmbeddingSet, window: float = 1.5) -> list[EmbeddingRecord]:
    """
    Function places each speaker's training embeddings on consecutive windows of a
    per-speaker pseudo recording, so they can be written as embedding and label files.

    """
    positions: dict[str, int] = {}
    records = []
    for vector, speaker_id in zip(data.embeddings, data.speaker_ids):
        k = positions.get(speaker_id, 0)
        positions[speaker_id] = k + 1
        onset = round(k * window, 3)
        records.append(EmbeddingRecord(f"train_{speaker_id}", onset, round(onset + window, 3), vector))
    return records


def _draw_turns(spec: ConversationSpec, speakers: Sequence[SyntheticSpeaker], rng: np.random.Generator) -> list[Turn]:
    """
    Each transition is a gap with probability `gap_prob`; otherwise the next turn starts
    early by overlap * length / (1 - gap_prob), at most 0.9 of the previous turn and
    never before the end of the turn before it.

    """
    scale = spec.turn_mean / spec.turn_shape
    turns: list[Turn] = []
    current = int(rng.integers(len(speakers)))
    previous_end, frontier, previous_length = 0.0, 0.0, 0.0
    same_rate = 1.0 - spec.gap_prob

    while True:
        length = max(spec.min_turn, float(rng.gamma(spec.turn_shape, scale)))
        if not turns:
            onset = 0.0
        elif rng.random() < spec.gap_prob:
            onset = previous_end + float(rng.exponential(spec.gap_mean))
        elif spec.overlap > 0.0 and turns[-1].speaker != speakers[current].speaker_id and same_rate > 0.0:
            early = min(spec.overlap * length / same_rate, 0.9 * previous_length)
            onset = max(previous_end - early, frontier)
        else:
            onset = previous_end

        onset = round(onset, 3)
        offset = round(min(onset + length, spec.length), 3)
        if offset - onset <= 0.0 or onset >= spec.length:
            break
        turns.append(
            Turn(
                recording_id=spec.recording_id,
                onset=onset,
                duration=round(offset - onset, 3),
                speaker=speakers[current].speaker_id,
            )
        )
        frontier = max(frontier, previous_end)
        previous_end, previous_length = offset, offset - onset
        if offset >= spec.length:
            break

        if len(speakers) > 1:
            step = int(rng.integers(1, len(speakers)))
            current = (current + step) % len(speakers)
    return turns


def _owner(segment: Segment, turns: Sequence[Turn]) -> str:
    """
    Function returns the speaker with most active time in the segment; ties go to the
    speaker whose overlapping turn starts first.

    """
    active: dict[str, float] = {}
    for turn in turns:
        shared = overlap((segment.onset, segment.offset), (turn.onset, turn.offset))
        if shared > 0.0:
            active[turn.speaker] = active.get(turn.speaker, 0.0) + shared
    if not active:
        raise SegmentationError(f"No speaker active in [{segment.onset:.3f}, {segment.offset:.3f})")
    return max(active, key=active.get)


@log_params("synth")
def generate_conversation(spec: ConversationSpec, speakers: Sequence[SyntheticSpeaker]) -> Conversation:
    """
    Function simulates one recording: reference turns, SAD as their union, uniform
    subsegments with an embedding sampled from each subsegment's dominant speaker,
    and per-turn oracle speaker-type labels.

    """
    if not speakers:
        raise MixPldaError("Conversation needs at least one speaker")
    if len({speaker.speaker_id for speaker in speakers}) != len(speakers):
        raise MixPldaError("Conversation speakers must have distinct ids")

    rng = make_rng(spec.seed)
    by_id = {speaker.speaker_id: speaker for speaker in speakers}
    turns = _draw_turns(spec, speakers, rng)
    sad = merge_intervals((turn.onset, turn.offset) for turn in turns)
    segments = uniform_segment(sad, spec.window, spec.hop, recording_id=spec.recording_id)

    ordered_turns = sorted(turns, key=lambda turn: turn.onset)
    embeddings = []
    for segment in segments:
        owner = by_id[_owner(segment, ordered_turns)]
        embeddings.append(
            EmbeddingRecord(
                recording_id=spec.recording_id,
                onset=segment.onset,
                offset=segment.offset,
                vector=owner.sample(rng, 1)[0],
            )
        )

    type_labels = [
        TypeLabel(
            recording_id=turn.recording_id,
            onset=turn.onset,
            offset=turn.offset,
            speaker_type=by_id[turn.speaker].speaker_type,
        )
        for turn in turns
    ]
    return Conversation(
        recording_id=spec.recording_id,
        sad=sad,
        turns=turns,
        segments=segments,
        embeddings=embeddings,
        type_labels=type_labels,
        speakers=list(speakers),
    )


def synthesize_posteriors(
    conversation: Conversation,
    frame_rate: float = 100.0,
    confidence: float = 0.75,
    seed: int = 0,
) -> FramePosteriorSequence:
    """
    Function simulates frame-level speaker-type posteriors: `confidence` on the oracle
    type of the frame plus Dirichlet noise on the rest. Frames outside every labeled
    region get pure Dirichlet noise.

    """
    if not 0.5 < confidence <= 1.0:
        raise MixPldaError(f"Posterior confidence must be in (0.5, 1], got {confidence}")
    rng = make_rng(seed)
    end = max((offset for _, offset in conversation.sad), default=0.0)
    frames = max(1, int(math.ceil(end * frame_rate)))
    centers = (np.arange(frames) + 0.5) / frame_rate

    truth = np.full(frames, -1)
    for label in sorted(conversation.type_labels, key=lambda label: label.onset, reverse=True):
        covered = (centers >= label.onset) & (centers < label.offset)
        truth[covered] = SPEAKER_TYPES.index(label.speaker_type)

    noise = rng.dirichlet(np.ones(len(SPEAKER_TYPES)), size=frames)
    rows = np.where(truth[:, None] < 0, noise, (1.0 - confidence) * noise)
    speech = truth >= 0
    rows[speech, truth[speech]] += confidence
    return FramePosteriorSequence(recording_id=conversation.recording_id, frame_rate=frame_rate, rows=rows)


def balance_by_type(data: LabeledEmbeddingSet, speakers_per_type: int, seed: int = 0) -> LabeledEmbeddingSet:
    """
    Function keeps `speakers_per_type` speakers of every present type, sampled without
    replacement, with all of their embeddings.

    """
    if speakers_per_type < 1:
        raise TrainingDataError(f"Speakers per type must be positive, got {speakers_per_type}")
    rng = make_rng(seed)
    keep = []
    for speaker_type in SPEAKER_TYPES:
        pool = data.speakers_of_type(speaker_type)
        if not pool:
            continue
        if len(pool) < speakers_per_type:
            raise TrainingDataError(
                f"Not enough speakers of type {speaker_type.value}: {len(pool)} < {speakers_per_type}"
            )
        keep.extend(rng.choice(pool, size=speakers_per_type, replace=False).tolist())
    logger.info(f"Balanced training data to {speakers_per_type} speakers per type")
    return data.subset(keep)
