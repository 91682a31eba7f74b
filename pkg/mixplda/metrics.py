"""
RTTM reading and writing, and diarization error rate with false alarm, miss and
speaker mismatch decomposition.

DER is computed on a timeline of boundary events held in integer microseconds. Inside
each elementary interval the number of active reference and hypothesis speakers is
constant, and the speaker mapping is one optimal assignment per recording over total
co-occurrence time.

"""

from collections import defaultdict
from collections.abc import Iterable, Sequence
from typing import TextIO

import numpy as np
from scipy.optimize import linear_sum_assignment

from mixplda.exceptions import EmptyScoringRegionError, MixPldaError, ParseError
from mixplda.log import logger
from mixplda.schemas import DerReport, RttmDiagnostic, Turn
from mixplda.utils import to_seconds, to_us

__all__ = [
    "parse_rttm",
    "emit_rttm",
    "compute_der",
    "compute_der_per_recording",
    "per_recording_reports",
    "group_by_recording",
]

RTTM_TEMPLATE = "SPEAKER {recording} 1 {onset:.3f} {duration:.3f} <NA> <NA> {speaker} <NA> <NA>"


def parse_rttm(
    stream: TextIO | Iterable[str],
    diagnostics: list[RttmDiagnostic] | None = None,
    strict: bool = False,
    path=None,
) -> list[Turn]:
    """
    Function reads SPEAKER lines of an RTTM stream.

    Blank lines, comments and other record types are skipped. Lines with
    malformed numeric fields raise ParseError in strict mode and are otherwise
    collected into `diagnostics`. Turns with non-positive duration are always
    rejected with a diagnostic.

    """
    diagnostics = [] if diagnostics is None else diagnostics
    turns = []

    def reject(number: int, message: str, fatal: bool):
        if fatal and strict:
            raise ParseError(message, path=path, line=number)
        diagnostics.append(RttmDiagnostic(line=number, message=message))
        logger.warning(f"RTTM line {number} rejected: {message}")

    for number, line in enumerate(stream, start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#") or fields[0].startswith(";;"):
            continue
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 8:
            reject(number, f"expected at least 8 fields, got {len(fields)}", fatal=True)
            continue

        try:
            onset, duration = float(fields[3]), float(fields[4])
        except ValueError:
            reject(number, f"malformed onset or duration: '{fields[3]} {fields[4]}'", fatal=True)
            continue
        if not (np.isfinite(onset) and np.isfinite(duration)) or onset < 0.0:
            reject(number, f"invalid onset or duration: '{fields[3]} {fields[4]}'", fatal=True)
            continue
        if duration <= 0.0:
            reject(number, f"non-positive duration {duration}", fatal=False)
            continue

        turns.append(Turn(recording_id=fields[1], onset=onset, duration=duration, speaker=fields[7]))
    return turns


def emit_rttm(turns: Iterable[Turn]) -> str:
    """
    Function formats turns as RTTM ordered by recording, onset and speaker label.

    """
    ordered = sorted(turns, key=lambda turn: (turn.recording_id, to_us(turn.onset), turn.speaker))
    return "".join(
        RTTM_TEMPLATE.format(
            recording=turn.recording_id, onset=turn.onset, duration=turn.duration, speaker=turn.speaker
        )
        + "\n"
        for turn in ordered
    )


def group_by_recording(turns: Iterable[Turn]) -> dict[str, list[Turn]]:
    groups: dict[str, list[Turn]] = defaultdict(list)
    for turn in turns:
        groups[turn.recording_id].append(turn)
    return dict(groups)


def _activity(turns: Sequence[Turn], speakers: list[str], points: np.ndarray) -> np.ndarray:
    """
    Function returns boolean (speakers, intervals) activity built from a difference array.

    """
    index = {speaker: i for i, speaker in enumerate(speakers)}
    diff = np.zeros((len(speakers), points.shape[0]), dtype=np.int64)
    for turn in turns:
        start = np.searchsorted(points, to_us(turn.onset))
        end = np.searchsorted(points, to_us(turn.onset + turn.duration))
        diff[index[turn.speaker], start] += 1
        diff[index[turn.speaker], end] -= 1
    return np.cumsum(diff, axis=1)[:, :-1] > 0


def _score_recording(
    reference: Sequence[Turn], hypothesis: Sequence[Turn], collar_us: int, score_overlap: bool
) -> tuple[int, int, int, int]:
    ref_speakers = sorted({turn.speaker for turn in reference})
    hyp_speakers = sorted({turn.speaker for turn in hypothesis})

    boundaries = []
    ref_boundaries = []
    for turn in reference:
        ref_boundaries.extend((to_us(turn.onset), to_us(turn.onset + turn.duration)))
    for turn in hypothesis:
        boundaries.extend((to_us(turn.onset), to_us(turn.onset + turn.duration)))
    boundaries.extend(ref_boundaries)
    if collar_us > 0:
        for boundary in ref_boundaries:
            boundaries.extend((boundary - collar_us, boundary + collar_us))

    points = np.unique(np.asarray(boundaries, dtype=np.int64))
    if points.shape[0] < 2:
        return 0, 0, 0, 0
    lengths = np.diff(points)

    ref_active = _activity(reference, ref_speakers, points)
    hyp_active = _activity(hypothesis, hyp_speakers, points)
    ref_count = ref_active.sum(axis=0)
    hyp_count = hyp_active.sum(axis=0)

    scored = np.ones(lengths.shape[0], dtype=bool)
    if collar_us > 0:
        diff = np.zeros(points.shape[0], dtype=np.int64)
        for boundary in ref_boundaries:
            diff[np.searchsorted(points, boundary - collar_us)] += 1
            diff[np.searchsorted(points, boundary + collar_us)] -= 1
        scored &= np.cumsum(diff)[:-1] == 0
    if not score_overlap:
        scored &= ref_count < 2
    weight = np.where(scored, lengths, 0)

    matched = np.zeros(lengths.shape[0], dtype=np.int64)
    if ref_speakers and hyp_speakers:
        cooccurrence = (ref_active * weight).astype(np.int64) @ hyp_active.T.astype(np.int64)
        rows, cols = linear_sum_assignment(cooccurrence, maximize=True)
        for row, col in zip(rows, cols):
            matched += ref_active[row] & hyp_active[col]

    miss = int(np.sum(np.maximum(ref_count - hyp_count, 0) * weight))
    false_alarm = int(np.sum(np.maximum(hyp_count - ref_count, 0) * weight))
    mismatch = int(np.sum((np.minimum(ref_count, hyp_count) - matched) * weight))
    total = int(np.sum(ref_count * weight))
    return false_alarm, miss, mismatch, total


def _report(components: Sequence[int]) -> DerReport:
    false_alarm, miss, mismatch, total = components
    if total <= 0:
        raise EmptyScoringRegionError()
    return DerReport.from_components(to_seconds(false_alarm), to_seconds(miss), to_seconds(mismatch), to_seconds(total))


def compute_der_per_recording(
    reference: Iterable[Turn],
    hypothesis: Iterable[Turn],
    collar: float = 0.0,
    score_overlap: bool = True,
) -> dict[str, tuple[int, int, int, int]]:
    """
    Function returns (fa, miss, sm, total) in microseconds per recording id.
    Recordings present on one side only are scored against an empty other side.

    """
    if collar < 0.0:
        raise MixPldaError(f"Collar must be nonnegative, got {collar}")
    reference = group_by_recording(reference)
    hypothesis = group_by_recording(hypothesis)
    collar_us = to_us(collar)

    components = {}
    for recording_id in sorted(set(reference) | set(hypothesis)):
        components[recording_id] = _score_recording(
            reference.get(recording_id, []), hypothesis.get(recording_id, []), collar_us, score_overlap
        )
        logger.debug(f"{recording_id}: fa/miss/sm/total (us) {components[recording_id]}")
    return components


def per_recording_reports(components: dict[str, tuple[int, int, int, int]]) -> dict[str, DerReport]:
    """
    Function converts per-recording components into reports, skipping recordings
    without scored reference time.

    """
    return {recording_id: _report(values) for recording_id, values in components.items() if values[3] > 0}


def compute_der(
    reference: Iterable[Turn],
    hypothesis: Iterable[Turn],
    collar: float = 0.0,
    score_overlap: bool = True,
) -> DerReport:
    """
    Function returns DER aggregated over recordings, weighted by scored reference time.

    """
    components = compute_der_per_recording(reference, hypothesis, collar, score_overlap)
    totals = [sum(values[k] for values in components.values()) for k in range(4)]
    return _report(totals)
