"""
Diarization of one recording: uniform subsegmentation, pairwise scoring, average-linkage
AHC and turn reconstruction, with single, mixture and oracle speaker-type split modes.

"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from mixplda.conf import settings
from mixplda.exceptions import ClusteringError, MissingEmbeddingError, SegmentationError
from mixplda.generics import Interval, Matrix
from mixplda.log import log_params, logger
from mixplda.mixture import MixturePlda, pairwise_log_lr_mixture
from mixplda.plda import PldaModel, pairwise_log_lr
from mixplda.priors import FramePosteriorSequence, oracle_priors, oracle_segment_types, segment_priors
from mixplda.schemas import SPEAKER_TYPES, EmbeddingRecord, Segment, SpeakerType, SpeakerTypePrior, Turn, TypeLabel
from mixplda.utils import to_ms

__all__ = [
    "ScoreMatrix",
    "DiarizationHypothesis",
    "RecordingInputs",
    "SingleScorer",
    "MixtureScorer",
    "NumSpeakers",
    "Threshold",
    "StopRule",
    "SingleMode",
    "MixtureMode",
    "OracleTypeSplitMode",
    "OneSpeakerMode",
    "DiarizationMode",
    "SINGLE_THRESHOLD",
    "ORACLE_THRESHOLD",
    "uniform_segment",
    "score_all_pairs",
    "cluster_ahc",
    "labels_to_turns",
    "diarize",
]

SINGLE_THRESHOLD = -0.2
ORACLE_THRESHOLD = 0.0
TIME_EPS = 1e-9


@dataclass(frozen=True)
class ScoreMatrix:
    """
    Symmetric matrix of pairwise log LRs. The diagonal is ignored and stored as zero.

    """

    scores: Matrix

    def __post_init__(self):
        scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        if scores.shape[0] != scores.shape[1]:
            raise ClusteringError(f"Score matrix must be square, got {scores.shape}")
        scores = 0.5 * (scores + scores.T)
        np.fill_diagonal(scores, 0.0)
        if not np.all(np.isfinite(scores)):
            raise ClusteringError("Score matrix has non-finite entries")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class NumSpeakers:
    k: int


@dataclass(frozen=True)
class Threshold:
    t: float


StopRule = NumSpeakers | Threshold


@dataclass(frozen=True)
class SingleScorer:
    model: PldaModel
    length_norm: bool = True

    def __call__(self, embeddings: Matrix) -> Matrix:
        return pairwise_log_lr(self.model, embeddings, self.length_norm)


@dataclass(frozen=True)
class MixtureScorer:
    """
    Mixture scorer with a shared recording-level prior or one prior per segment.

    """

    mixture: MixturePlda
    priors: SpeakerTypePrior | tuple[SpeakerTypePrior, ...]
    length_norm: bool = True

    def __call__(self, embeddings: Matrix) -> Matrix:
        scores = pairwise_log_lr_mixture(self.mixture, embeddings, self.priors, self.length_norm)
        floored = scores < settings.score_floor
        if np.any(floored):
            # one-hot priors of different types floor every cross-type pair
            priors = self.priors if isinstance(self.priors, tuple) else (self.priors,)
            log = logger.debug if all(prior.is_one_hot for prior in priors) else logger.info
            log(f"Flooring {int(floored.sum())} scores at {settings.score_floor}")
            scores = np.maximum(scores, settings.score_floor)
        return scores


@dataclass(frozen=True)
class SingleMode:
    model: PldaModel


@dataclass(frozen=True)
class MixtureMode:
    """
    Prior source: posteriors if given, else oracle labels if `oracle_prior`,
    else the explicit prior, else the mixture's default prior.

    """

    mixture: MixturePlda
    prior: SpeakerTypePrior | None = None
    posteriors: FramePosteriorSequence | None = None
    oracle_prior: bool = False


@dataclass(frozen=True)
class OracleTypeSplitMode:
    mixture: MixturePlda
    thresholds: dict[SpeakerType, float] = field(default_factory=dict)
    default_threshold: float = ORACLE_THRESHOLD

    def threshold(self, speaker_type: SpeakerType) -> float:
        return self.thresholds.get(speaker_type, self.default_threshold)


@dataclass(frozen=True)
class OneSpeakerMode:
    pass


DiarizationMode = SingleMode | MixtureMode | OracleTypeSplitMode | OneSpeakerMode


@dataclass(frozen=True)
class RecordingInputs:
    recording_id: str
    sad: list[Interval]
    embeddings: list[EmbeddingRecord]
    type_labels: list[TypeLabel] | None = None

    def lookup(self, segments: Sequence[Segment]) -> Matrix:
        """
        Method returns embeddings aligned to segments, matched at millisecond resolution.

        """
        table = {(to_ms(record.onset), to_ms(record.offset)): record.vector for record in self.embeddings}
        rows = []
        for segment in segments:
            key = (to_ms(segment.onset), to_ms(segment.offset))
            if key not in table:
                raise MissingEmbeddingError(
                    f"No embedding for segment [{segment.onset:.3f}, {segment.offset:.3f}) of {self.recording_id}"
                )
            rows.append(table[key])
        return np.asarray(rows, dtype=np.float64)


@dataclass(frozen=True)
class DiarizationHypothesis:
    recording_id: str
    segments: list[Segment]
    labels: list[str]
    turns: list[Turn]
    thresholds: dict[str, float] = field(default_factory=dict)

    @property
    def num_speakers(self) -> int:
        return len(set(self.labels))


def uniform_segment(
    sad_regions: Sequence[Interval],
    window: float | None = None,
    hop: float | None = None,
    min_duration: float | None = None,
    recording_id: str = "",
) -> list[Segment]:
    """
    Function cuts SAD regions into windows of `window` seconds every `hop` seconds.

    The last window of a region is truncated to the region end. If the tail left
    uncovered by the last full window is shorter than `min_duration` it extends that
    window instead. Regions not longer than one window, or shorter than `min_duration`,
    give one segment.

    """
    window = settings.window if window is None else window
    hop = settings.hop if hop is None else hop
    min_duration = settings.min_duration if min_duration is None else min_duration
    if not window > 0.0 or not (0.0 < hop <= window):
        raise SegmentationError(f"Invalid window/hop: window={window}, hop={hop}")

    bounds: list[Interval] = []
    previous_end = -math.inf
    for onset, offset in sad_regions:
        if offset <= onset or onset < previous_end - TIME_EPS:
            raise SegmentationError(f"SAD regions must be sorted, non-overlapping, non-empty: ({onset}, {offset})")
        previous_end = offset

        if offset - onset <= window + TIME_EPS or offset - onset < min_duration:
            bounds.append((onset, offset))
            continue

        region: list[list[float]] = []
        k = 0
        while onset + k * hop + window < offset - TIME_EPS:
            start = onset + k * hop
            region.append([start, start + window])
            k += 1

        start = onset + k * hop
        if offset - region[-1][1] < min_duration:
            region[-1][1] = offset
        else:
            region.append([start, offset])
        bounds.extend((start, end) for start, end in region)

    return [
        Segment(recording_id=recording_id, onset=onset, offset=offset, index=index)
        for index, (onset, offset) in enumerate(bounds)
    ]


def score_all_pairs(scorer: Callable[[Matrix], Matrix], embeddings: Matrix) -> ScoreMatrix:
    """
    Function scores every pair of embeddings; `scorer` maps (n, d) to an (n, n) matrix.

    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2:
        raise MissingEmbeddingError(f"Expected one embedding per segment, got array of shape {embeddings.shape}")
    if embeddings.shape[0] == 0:
        return ScoreMatrix(np.zeros((0, 0)))
    return ScoreMatrix(scorer(embeddings))


def cluster_ahc(m: ScoreMatrix, stop: StopRule) -> list[int]:
    """
    Function runs average-linkage AHC on similarity scores.

    The pair of clusters with the highest average pairwise score is merged until the
    requested number of clusters is reached or the best score drops below the
    threshold. Equal scores merge the pair with the smallest (i, j) cluster ids.
    Labels are numbered by first appearance.

    """
    n = m.n
    if n < 1:
        raise ClusteringError("Nothing to cluster")
    if isinstance(stop, NumSpeakers):
        if stop.k < 1 or stop.k > n:
            raise ClusteringError(f"Cannot stop at {stop.k} clusters with {n} segments")

    # cluster-to-cluster average scores, -inf off the active set and on the diagonal
    average = m.scores.copy()
    np.fill_diagonal(average, -np.inf)
    sizes = np.ones(n)
    owner = np.arange(n)
    clusters = n

    while clusters > 1:
        if isinstance(stop, NumSpeakers) and clusters <= stop.k:
            break

        # row-major argmax of a symmetric matrix gives the smallest (i, j) with i < j
        i, j = divmod(int(np.argmax(average)), n)
        if isinstance(stop, Threshold) and average[i, j] < stop.t:
            break

        merged = (sizes[i] * average[i] + sizes[j] * average[j]) / (sizes[i] + sizes[j])
        average[i, :] = merged
        average[:, i] = merged
        average[i, i] = -np.inf
        average[j, :] = -np.inf
        average[:, j] = -np.inf
        sizes[i] += sizes[j]
        owner[owner == j] = i
        clusters -= 1

    relabel: dict[int, int] = {}
    return [relabel.setdefault(int(cluster), len(relabel)) for cluster in owner]


def labels_to_turns(labels: Sequence[str], segments: Sequence[Segment]) -> list[Turn]:
    """
    Function merges consecutive overlapping or adjacent same-label subsegments into turns.
    Different-label subsegments keep their full extent, so turns may overlap.

    """
    if len(labels) != len(segments):
        raise SegmentationError(f"{len(labels)} labels for {len(segments)} segments")

    order = sorted(range(len(segments)), key=lambda i: (segments[i].onset, segments[i].offset, segments[i].index))
    runs: list[list] = []
    for i in order:
        segment, label = segments[i], labels[i]
        if runs and runs[-1][2] == label and segment.onset <= runs[-1][1] + TIME_EPS:
            runs[-1][1] = max(runs[-1][1], segment.offset)
        else:
            runs.append([segment.onset, segment.offset, label, segment.recording_id])

    per_label: dict[str, list[list]] = {}
    for run in runs:
        merged = per_label.setdefault(run[2], [])
        if merged and run[0] < merged[-1][1] - TIME_EPS:
            merged[-1][1] = max(merged[-1][1], run[1])
        else:
            merged.append(run)

    turns = [
        Turn(recording_id=run[3], onset=run[0], duration=run[1] - run[0], speaker=run[2])
        for merged in per_label.values()
        for run in merged
    ]
    return sorted(turns, key=lambda turn: (turn.onset, turn.speaker))


def _speaker_names(labels: Sequence[int], prefix: str = "") -> list[str]:
    return [f"{prefix}spk{label + 1}" for label in labels]


def _diarize_oracle_split(
    inputs: RecordingInputs,
    mode: OracleTypeSplitMode,
    segments: list[Segment],
    embeddings: Matrix,
    length_norm: bool,
) -> tuple[list[str], dict[str, float]]:
    if not inputs.type_labels:
        raise SegmentationError(f"Oracle speaker-type split needs type labels for {inputs.recording_id}")

    types = oracle_segment_types(inputs.type_labels, segments)
    names = [""] * len(segments)
    thresholds = {}
    for speaker_type in SPEAKER_TYPES:
        members = [i for i, segment_type in enumerate(types) if segment_type == speaker_type]
        if not members:
            continue
        threshold = mode.threshold(speaker_type)
        thresholds[speaker_type.value] = threshold
        scorer = SingleScorer(mode.mixture.components[speaker_type], length_norm)
        labels = cluster_ahc(score_all_pairs(scorer, embeddings[members]), Threshold(threshold))
        for member, name in zip(members, _speaker_names(labels, prefix=f"{speaker_type.value}_")):
            names[member] = name
    return names, thresholds


def _mixture_scorer(
    inputs: RecordingInputs, mode: MixtureMode, segments: list[Segment], length_norm: bool
) -> MixtureScorer:
    if mode.posteriors is not None:
        priors = tuple(segment_priors(mode.posteriors, segments))
    elif mode.oracle_prior:
        if not inputs.type_labels:
            raise SegmentationError(f"Oracle priors need type labels for {inputs.recording_id}")
        priors = tuple(oracle_priors(inputs.type_labels, segments))
    else:
        return MixtureScorer(mode.mixture, mode.prior or mode.mixture.default_prior, length_norm)
    return MixtureScorer(mode.mixture, priors, length_norm)


@log_params("pipeline")
def diarize(
    inputs: RecordingInputs,
    mode: DiarizationMode,
    stop: StopRule,
    window: float | None = None,
    hop: float | None = None,
    length_norm: bool | None = None,
) -> DiarizationHypothesis:
    """
    Function diarizes one recording and returns labels per segment and merged turns.

    """
    length_norm = settings.length_norm if length_norm is None else length_norm
    segments = uniform_segment(inputs.sad, window, hop, recording_id=inputs.recording_id)
    if not segments:
        return DiarizationHypothesis(recording_id=inputs.recording_id, segments=[], labels=[], turns=[])

    thresholds: dict[str, float] = {}
    if isinstance(mode, OneSpeakerMode):
        names = _speaker_names([0] * len(segments))
    elif isinstance(mode, OracleTypeSplitMode):
        embeddings = inputs.lookup(segments)
        names, thresholds = _diarize_oracle_split(inputs, mode, segments, embeddings, length_norm)
    else:
        embeddings = inputs.lookup(segments)
        if isinstance(mode, SingleMode):
            scorer = SingleScorer(mode.model, length_norm)
        else:
            scorer = _mixture_scorer(inputs, mode, segments, length_norm)
        matrix = score_all_pairs(scorer, embeddings)
        if isinstance(stop, NumSpeakers):
            stop = NumSpeakers(min(stop.k, matrix.n))
        else:
            thresholds["all"] = stop.t
        names = _speaker_names(cluster_ahc(matrix, stop))

    hypothesis = DiarizationHypothesis(
        recording_id=inputs.recording_id,
        segments=segments,
        labels=names,
        turns=labels_to_turns(names, segments),
        thresholds=thresholds,
    )
    logger.info(
        f"{inputs.recording_id}: {len(segments)} segments, {hypothesis.num_speakers} clusters, "
        f"thresholds {thresholds or '-'}"
    )
    return hypothesis
