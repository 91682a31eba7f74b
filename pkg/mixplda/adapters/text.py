"""
Line-oriented text formats.

Embeddings: `#emb v1 dim=<d>` then `<recording-id> <onset> <offset> <d floats>`.
SAD: `<recording-id> <onset> <offset>`.
Oracle speaker-type labels: `<recording-id> <onset> <offset> <M|F|C>`.
Training labels: `<recording-id> <onset> <offset> <speaker-id> <M|F|C|->`.
Posteriors: `#post v1 rate=<fps>` then `<t-index> <pM> <pF> <pC>`, recording id is the file stem.
Config: flat `key = value` lines.

"""

from collections import defaultdict
from pathlib import Path

import numpy as np

from mixplda.adapters.binary import EMBEDDING_MAGIC, read_embeddings_binary
from mixplda.adapters.types import PathLike, existing, is_comment, split_fields, to_float, to_int, to_type
from mixplda.exceptions import MissingEmbeddingError, ParseError, TrainingDataError
from mixplda.generics import Interval
from mixplda.log import logger
from mixplda.metrics import emit_rttm, parse_rttm
from mixplda.priors import FramePosteriorSequence
from mixplda.schemas import EmbeddingRecord, LabeledEmbeddingSet, SpeakerType, Turn, TypeLabel
from mixplda.utils import to_ms

__all__ = [
    "read_embeddings",
    "write_embeddings",
    "read_sad",
    "write_sad",
    "read_type_labels",
    "write_type_labels",
    "read_training_labels",
    "write_training_labels",
    "training_set",
    "read_posteriors",
    "write_posteriors",
    "read_kv_config",
    "read_rttm",
    "write_rttm",
]

EMBEDDING_HEADER = "#emb v1"
POSTERIOR_HEADER = "#post v1"

TrainingKey = tuple[str, int, int]


def _fmt(value: float) -> str:
    return repr(float(value))


def _header_value(line: str, prefix: str, key: str, path) -> str:
    fields = line.split()
    if " ".join(fields[:2]) != prefix:
        raise ParseError(f"missing header '{prefix} {key}=...'", path, 1)
    for field in fields[2:]:
        name, _, value = field.partition("=")
        if name == key:
            return value
    raise ParseError(f"header has no '{key}=' field", path, 1)


def _decoded(path: Path):
    """
    Function yields numbered UTF-8 lines, a line that does not decode raises ParseError.

    """
    with path.open("rb") as stream:
        for number, raw in enumerate(stream, start=1):
            try:
                yield number, raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(f"invalid UTF-8 byte at column {exc.start + 1}", path, number) from exc


def _lines(path: Path):
    for number, line in _decoded(path):
        if not is_comment(line):
            yield number, line


def read_embeddings(path: PathLike) -> tuple[list[EmbeddingRecord], int]:
    """
    Function reads text or binary embedding file, the binary variant is detected by magic.

    """
    path = existing(path)
    with path.open("rb") as stream:
        if stream.read(len(EMBEDDING_MAGIC)) == EMBEDDING_MAGIC:
            return read_embeddings_binary(path)

    lines = _decoded(path)
    _, header = next(lines, (1, ""))
    dim = to_int(_header_value(header, EMBEDDING_HEADER, "dim", path), path, 1)
    records = []
    for number, line in lines:
        if is_comment(line):
            continue
        fields = split_fields(line, 3 + dim, path, number, exact=True)
        onset, offset = to_float(fields[1], path, number), to_float(fields[2], path, number)
        vector = np.array([to_float(token, path, number) for token in fields[3:]])
        records.append(EmbeddingRecord(fields[0], onset, offset, vector))
    return records, dim


def write_embeddings(path: PathLike, records: list[EmbeddingRecord], dim: int) -> None:
    lines = [f"{EMBEDDING_HEADER} dim={dim}"]
    for record in records:
        values = " ".join(_fmt(value) for value in record.vector)
        lines.append(f"{record.recording_id} {_fmt(record.onset)} {_fmt(record.offset)} {values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_sad(path: PathLike) -> dict[str, list[Interval]]:
    path = existing(path)
    regions: dict[str, list[Interval]] = defaultdict(list)
    for number, line in _lines(path):
        fields = split_fields(line, 3, path, number, exact=True)
        onset, offset = to_float(fields[1], path, number), to_float(fields[2], path, number)
        if offset <= onset:
            raise ParseError(f"empty SAD region [{onset}, {offset})", path, number)
        regions[fields[0]].append((onset, offset))
    return {recording_id: sorted(items) for recording_id, items in regions.items()}


def write_sad(path: PathLike, regions: dict[str, list[Interval]]) -> None:
    lines = [
        f"{recording_id} {onset:.3f} {offset:.3f}"
        for recording_id in sorted(regions)
        for onset, offset in regions[recording_id]
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_type_labels(path: PathLike) -> dict[str, list[TypeLabel]]:
    path = existing(path)
    labels: dict[str, list[TypeLabel]] = defaultdict(list)
    for number, line in _lines(path):
        fields = split_fields(line, 4, path, number, exact=True)
        labels[fields[0]].append(
            TypeLabel(
                recording_id=fields[0],
                onset=to_float(fields[1], path, number),
                offset=to_float(fields[2], path, number),
                speaker_type=to_type(fields[3], path, number),
            )
        )
    return {recording_id: sorted(items, key=lambda label: label.onset) for recording_id, items in labels.items()}


def write_type_labels(path: PathLike, labels: list[TypeLabel]) -> None:
    ordered = sorted(labels, key=lambda label: (label.recording_id, label.onset, label.offset))
    lines = [f"{x.recording_id} {x.onset:.3f} {x.offset:.3f} {x.speaker_type.value}" for x in ordered]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_training_labels(path: PathLike) -> dict[TrainingKey, tuple[str, SpeakerType | None]]:
    """
    Function reads training labels keyed by (recording id, onset ms, offset ms).

    """
    path = existing(path)
    labels = {}
    for number, line in _lines(path):
        fields = split_fields(line, 5, path, number, exact=True)
        key = (fields[0], to_ms(to_float(fields[1], path, number)), to_ms(to_float(fields[2], path, number)))
        speaker_type = None if fields[4] == "-" else to_type(fields[4], path, number)
        if key in labels:
            raise ParseError(f"duplicate label for {fields[0]} [{fields[1]}, {fields[2]})", path, number)
        labels[key] = (fields[3], speaker_type)
    return labels


def write_training_labels(path: PathLike, records: list[EmbeddingRecord], data: LabeledEmbeddingSet) -> None:
    lines = []
    for record, speaker_id in zip(records, data.speaker_ids):
        speaker_type = data.speaker_types.get(speaker_id)
        tag = speaker_type.value if speaker_type else "-"
        lines.append(f"{record.recording_id} {_fmt(record.onset)} {_fmt(record.offset)} {speaker_id} {tag}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def training_set(
    records: list[EmbeddingRecord], labels: dict[TrainingKey, tuple[str, SpeakerType | None]]
) -> LabeledEmbeddingSet:
    """
    Function joins embedding records with training labels. Every label needs an
    embedding; embeddings without a label are skipped.

    """
    table = {(record.recording_id, to_ms(record.onset), to_ms(record.offset)): record for record in records}
    vectors, speaker_ids, speaker_types = [], [], {}
    for key, (speaker_id, speaker_type) in labels.items():
        if key not in table:
            raise MissingEmbeddingError(f"No embedding for labeled segment {key[0]} [{key[1]} ms, {key[2]} ms)")
        vectors.append(table[key].vector)
        speaker_ids.append(speaker_id)
        if speaker_type is not None:
            known = speaker_types.setdefault(speaker_id, speaker_type)
            if known != speaker_type:
                raise TrainingDataError(f"Speaker {speaker_id} labeled as both {known.value} and {speaker_type.value}")

    skipped = len(records) - len(vectors)
    if skipped:
        logger.warning(f"Skipped {skipped} embeddings without training labels")
    if not vectors:
        raise TrainingDataError("No labeled training embeddings")
    return LabeledEmbeddingSet(embeddings=np.vstack(vectors), speaker_ids=speaker_ids, speaker_types=speaker_types)


def read_posteriors(path: PathLike) -> FramePosteriorSequence:
    path = existing(path)
    lines = _decoded(path)
    _, header = next(lines, (1, ""))
    rate = to_float(_header_value(header, POSTERIOR_HEADER, "rate", path), path, 1)
    rows = []
    for number, line in lines:
        if is_comment(line):
            continue
        fields = split_fields(line, 4, path, number, exact=True)
        if to_int(fields[0], path, number) != len(rows):
            raise ParseError(f"frame index {fields[0]} out of sequence, expected {len(rows)}", path, number)
        rows.append([to_float(token, path, number) for token in fields[1:]])
    if not rows:
        raise ParseError("posterior file has no frames", path)
    return FramePosteriorSequence(recording_id=path.stem, frame_rate=rate, rows=np.array(rows))


def write_posteriors(path: PathLike, posteriors: FramePosteriorSequence) -> None:
    lines = [f"{POSTERIOR_HEADER} rate={_fmt(posteriors.frame_rate)}"]
    lines.extend(f"{t} {' '.join(_fmt(value) for value in row)}" for t, row in enumerate(posteriors.rows))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_kv_config(path: PathLike) -> dict[str, str]:
    """
    Function reads flat `key = value` config, `#` starts a comment line.

    """
    path = existing(path)
    config = {}
    for number, line in _lines(path):
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"expected 'key = value', got '{line.strip()}'", path, number)
        config[key.strip().replace("-", "_")] = value.strip()
    return config


def read_rttm(path: PathLike, strict: bool = True) -> list[Turn]:
    path = existing(path)
    return parse_rttm((line for _, line in _decoded(path)), strict=strict, path=path)


def write_rttm(path: PathLike, turns: list[Turn]) -> None:
    Path(path).write_text(emit_rttm(turns), encoding="utf-8")
