from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from mixplda.exceptions import PriorError, SegmentationError
from mixplda.generics import Matrix, Vector
from mixplda.schemas import SPEAKER_TYPES, Segment, SpeakerTypePrior, TypeLabel
from mixplda.utils import overlap

__all__ = [
    "FramePosteriorSequence",
    "segment_prior",
    "segment_priors",
    "oracle_priors",
    "oracle_segment_types",
]

ROW_TOLERANCE = 1e-6


@dataclass(frozen=True)
class FramePosteriorSequence:
    """
    Frame-level speaker-type posteriors of one recording, columns in M, F, C order.

    """

    recording_id: str
    frame_rate: float
    rows: Matrix

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if self.frame_rate <= 0.0:
            raise PriorError(f"Frame rate must be positive, got {self.frame_rate}")
        if rows.shape[0] < 1 or rows.shape[1] != len(SPEAKER_TYPES):
            raise PriorError(f"Posterior rows must have shape (T >= 1, 3), got {rows.shape}")
        if np.any(rows < 0.0) or np.any(rows > 1.0):
            raise PriorError("Posterior entries must lie in [0, 1]")
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > ROW_TOLERANCE):
            raise PriorError("Posterior rows must sum to 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def frame_centers(self) -> Vector:
        return (np.arange(self.rows.shape[0]) + 0.5) / self.frame_rate


def segment_prior(seq: FramePosteriorSequence, seg: Segment) -> SpeakerTypePrior:
    """
    Function averages rows whose frame centers fall in [onset, offset) and renormalizes.

    """
    centers = seq.frame_centers
    covered = (centers >= seg.onset) & (centers < seg.offset)
    if not np.any(covered):
        raise SegmentationError(
            f"segment outside posterior extent: [{seg.onset:.3f}, {seg.offset:.3f}) of {seq.recording_id}"
        )
    mean = seq.rows[covered].mean(axis=0)
    return SpeakerTypePrior.from_array(mean, normalize=True)


def segment_priors(seq: FramePosteriorSequence, segments: Sequence[Segment]) -> list[SpeakerTypePrior]:
    return [segment_prior(seq, segment) for segment in segments]


def oracle_segment_types(labels: Sequence[TypeLabel], segments: Sequence[Segment]):
    """
    Function assigns each segment the oracle type with the largest time overlap.
    Ties go to the earlier label.

    """
    types = []
    for segment in segments:
        best, best_overlap = None, 0.0
        for label in labels:
            if label.recording_id != segment.recording_id:
                continue
            shared = overlap((segment.onset, segment.offset), (label.onset, label.offset))
            if shared > best_overlap:
                best, best_overlap = label.speaker_type, shared
        if best is None:
            raise SegmentationError(
                f"Segment [{segment.onset:.3f}, {segment.offset:.3f}) of {segment.recording_id} "
                "has no speaker-type label"
            )
        types.append(best)
    return types


def oracle_priors(labels: Sequence[TypeLabel], segments: Sequence[Segment]) -> list[SpeakerTypePrior]:
    """
    Function returns one-hot priors from oracle speaker-type labels.

    """
    return [SpeakerTypePrior(probs={speaker_type: 1.0}) for speaker_type in oracle_segment_types(labels, segments)]
