import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mixplda.exceptions import PriorError, TrainingDataError
from mixplda.generics import Matrix, Vector

__all__ = [
    "SpeakerType",
    "SPEAKER_TYPES",
    "MixPldaModel",
    "SpeakerTypePrior",
    "Segment",
    "Turn",
    "TypeLabel",
    "DerReport",
    "RttmDiagnostic",
    "TypeParams",
    "CorpusSpec",
    "ConversationSpec",
    "ExperimentRow",
    "ExperimentTable",
    "EmbeddingRecord",
    "LabeledEmbeddingSet",
]

PRIOR_TOLERANCE = 1e-9


class SpeakerType(str, Enum):
    MALE = "M"
    FEMALE = "F"
    CHILD = "C"


SPEAKER_TYPES: tuple[SpeakerType, ...] = (SpeakerType.MALE, SpeakerType.FEMALE, SpeakerType.CHILD)


class MixPldaModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True, populate_by_name=True)


class SpeakerTypePrior(MixPldaModel):
    """
    Prior distribution over speaker types. Types missing from the input get zero mass.

    """

    probs: dict[SpeakerType, float]

    @field_validator("probs", mode="before")
    @classmethod
    def fill_missing(cls, value: Any) -> Any:
        if isinstance(value, Mapping):
            filled = {SpeakerType(key): float(prob) for key, prob in value.items()}
            for speaker_type in SPEAKER_TYPES:
                filled.setdefault(speaker_type, 0.0)
            return filled
        return value

    @model_validator(mode="after")
    def check_distribution(self) -> "SpeakerTypePrior":
        for speaker_type, prob in self.probs.items():
            if not math.isfinite(prob) or prob < 0.0 or prob > 1.0:
                raise PriorError(f"Prior probability of {speaker_type.value} is outside [0, 1]: {prob}")
        total = sum(self.probs.values())
        if abs(total - 1.0) > PRIOR_TOLERANCE:
            raise PriorError(f"Prior does not sum to 1: {total!r}")
        return self

    @classmethod
    def from_array(cls, values, normalize: bool = False) -> "SpeakerTypePrior":
        """
        Builds prior from a probability triple in M, F, C order.

        """
        array = np.asarray(values, dtype=np.float64)
        if normalize:
            array = array / array.sum()
        return cls(probs=dict(zip(SPEAKER_TYPES, array.tolist())))

    def as_array(self) -> Vector:
        return np.array([self.probs[speaker_type] for speaker_type in SPEAKER_TYPES], dtype=np.float64)

    @property
    def is_one_hot(self) -> bool:
        return sorted(self.probs.values()) == [0.0, 0.0, 1.0]


class Segment(MixPldaModel):
    recording_id: str
    onset: float
    offset: float
    index: int = 0

    @model_validator(mode="after")
    def check_extent(self) -> "Segment":
        if not (0.0 <= self.onset < self.offset) or not math.isfinite(self.offset):
            raise ValueError(f"Invalid segment extent [{self.onset}, {self.offset})")
        return self

    @property
    def duration(self) -> float:
        return self.offset - self.onset


class Turn(MixPldaModel):
    recording_id: str
    onset: float
    duration: float
    speaker: str

    @model_validator(mode="after")
    def check_times(self) -> "Turn":
        if not (math.isfinite(self.onset) and math.isfinite(self.duration)):
            raise ValueError("Turn times must be finite")
        if self.duration <= 0.0:
            raise ValueError(f"Turn duration must be positive, got {self.duration}")
        return self

    @property
    def offset(self) -> float:
        return self.onset + self.duration


class TypeLabel(MixPldaModel):
    recording_id: str
    onset: float
    offset: float
    speaker_type: SpeakerType


class DerReport(MixPldaModel):
    false_alarm: float = Field(alias="fa", ge=0.0)
    miss: float = Field(ge=0.0)
    speaker_mismatch: float = Field(alias="sm", ge=0.0)
    total_scored: float = Field(alias="total", gt=0.0)
    der: float

    @classmethod
    def from_components(cls, false_alarm: float, miss: float, speaker_mismatch: float, total_scored: float):
        """
        Function builds report and derives DER from its components.

        """
        der = (false_alarm + miss + speaker_mismatch) / total_scored
        return cls(
            false_alarm=false_alarm,
            miss=miss,
            speaker_mismatch=speaker_mismatch,
            total_scored=total_scored,
            der=der,
        )

    def to_kv(self) -> str:
        return "\n".join(
            [
                f"fa={self.false_alarm:.3f}",
                f"miss={self.miss:.3f}",
                f"sm={self.speaker_mismatch:.3f}",
                f"total={self.total_scored:.3f}",
                f"der={self.der:.3f}",
            ]
        )

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True)


class RttmDiagnostic(MixPldaModel):
    line: int
    message: str


class TypeParams(MixPldaModel):
    """
    Generating parameters of one speaker type.

    """

    offset: list[float]
    between_var: list[float]
    within_var: list[float]
    speakers: int = Field(ge=1)

    @model_validator(mode="after")
    def check_params(self) -> "TypeParams":
        if not (len(self.offset) == len(self.between_var) == len(self.within_var)):
            raise ValueError("Type parameters must share one dimension")
        if min(self.between_var) <= 0.0 or min(self.within_var) <= 0.0:
            raise ValueError("Generating variances must be positive")
        return self


class CorpusSpec(MixPldaModel):
    dim: int = Field(gt=0)
    types: dict[SpeakerType, TypeParams]
    embeddings_per_speaker: tuple[int, int] = (4, 8)
    seed: int = 0

    @model_validator(mode="after")
    def check_spec(self) -> "CorpusSpec":
        if not self.types:
            raise ValueError("Corpus spec needs at least one speaker type")
        for params in self.types.values():
            if len(params.offset) != self.dim:
                raise ValueError(f"Type parameters have dimension {len(params.offset)}, expected {self.dim}")
        low, high = self.embeddings_per_speaker
        if low < 1 or high < low:
            raise ValueError(f"Invalid embeddings-per-speaker range {self.embeddings_per_speaker}")
        return self


class ConversationSpec(MixPldaModel):
    recording_id: str = "rec1"
    length: float = Field(default=60.0, gt=0.0)
    turn_mean: float = Field(default=3.0, gt=0.0)
    turn_shape: float = Field(default=4.0, gt=0.0)
    min_turn: float = Field(default=0.5, gt=0.0)
    gap_prob: float = Field(default=0.3, ge=0.0, le=1.0)
    gap_mean: float = Field(default=0.5, gt=0.0)
    overlap: float = Field(default=0.0, ge=0.0, lt=1.0)
    window: float = 1.5
    hop: float = 0.75
    seed: int = 0


class ExperimentRow(MixPldaModel):
    condition: str
    ders: list[float]
    median: float


class ExperimentTable(MixPldaModel):
    suite: str
    seeds: list[int]
    rows: list[ExperimentRow]

    def row(self, condition: str) -> ExperimentRow:
        return next(row for row in self.rows if row.condition == condition)


@dataclass(frozen=True)
class EmbeddingRecord:
    recording_id: str
    onset: float
    offset: float
    vector: Vector


@dataclass
class LabeledEmbeddingSet:
    """
    Training container: embeddings with parallel speaker ids and optional speaker types.

    """

    embeddings: Matrix
    speaker_ids: list[str]
    speaker_types: dict[str, SpeakerType] = field(default_factory=dict)

    def __post_init__(self):
        self.embeddings = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
        if self.embeddings.shape[0] != len(self.speaker_ids):
            raise TrainingDataError(
                f"{self.embeddings.shape[0]} embeddings but {len(self.speaker_ids)} speaker ids"
            )

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def speakers(self) -> list[str]:
        return sorted(set(self.speaker_ids))

    def counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for speaker_id in self.speaker_ids:
            counts[speaker_id] = counts.get(speaker_id, 0) + 1
        return counts

    def subset(self, speakers) -> "LabeledEmbeddingSet":
        keep = set(speakers)
        mask = np.array([speaker_id in keep for speaker_id in self.speaker_ids], dtype=bool)
        return LabeledEmbeddingSet(
            embeddings=self.embeddings[mask],
            speaker_ids=[speaker_id for speaker_id in self.speaker_ids if speaker_id in keep],
            speaker_types={key: value for key, value in self.speaker_types.items() if key in keep},
        )

    def speakers_of_type(self, speaker_type: SpeakerType) -> list[str]:
        return [speaker for speaker in self.speakers() if self.speaker_types.get(speaker) == speaker_type]

    def by_type(self, speaker_type: SpeakerType) -> "LabeledEmbeddingSet":
        return self.subset(self.speakers_of_type(speaker_type))

    def check_trainable(self) -> None:
        if not np.all(np.isfinite(self.embeddings)):
            raise TrainingDataError("Training embeddings contain non-finite values")
        counts = self.counts()
        if len(counts) < 2:
            raise TrainingDataError(f"Training needs at least 2 speakers, got {len(counts)}")
        if max(counts.values()) < 2:
            raise TrainingDataError("Training needs at least one speaker with 2 or more embeddings")
