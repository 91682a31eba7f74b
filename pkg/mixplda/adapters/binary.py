"""
Little-endian binary formats: PLDA model, mixture model and embedding files.

PLDA block: magic `PLDA`, u32 version, u32 d, mean (d f64), transform (d x d f64,
row-major), psi (d f64).
Mixture: magic `MPLD`, u32 version, u32 block count, per block a 1-byte type tag,
u32 block length and a PLDA block, then the default prior as 3 f64 in M, F, C order.
Embeddings: magic `EMBB`, u32 version, u32 d, u32 count, per record u16 id length,
UTF-8 id, f64 onset, f64 offset, d f64.

"""

import struct
from pathlib import Path

import numpy as np

from mixplda.adapters.types import PathLike, existing
from mixplda.exceptions import ModelFormatError, ParseError
from mixplda.mixture import MixturePlda
from mixplda.plda import PldaModel
from mixplda.schemas import SPEAKER_TYPES, EmbeddingRecord, SpeakerType, SpeakerTypePrior

__all__ = [
    "PLDA_MAGIC",
    "MIXTURE_MAGIC",
    "EMBEDDING_MAGIC",
    "FORMAT_VERSION",
    "plda_to_bytes",
    "plda_from_bytes",
    "mixture_to_bytes",
    "mixture_from_bytes",
    "save_plda",
    "load_plda",
    "save_mixture",
    "load_mixture",
    "load_model",
    "save_model",
    "write_embeddings_binary",
    "read_embeddings_binary",
]

PLDA_MAGIC = b"PLDA"
MIXTURE_MAGIC = b"MPLD"
EMBEDDING_MAGIC = b"EMBB"
FORMAT_VERSION = 1

HEADER = struct.Struct("<4sII")
BLOCK_HEADER = struct.Struct("<cI")
EMBEDDING_HEADER = struct.Struct("<4sIII")
ID_LENGTH = struct.Struct("<H")
F8 = np.dtype("<f8")


def _floats(data: bytes, offset: int, count: int) -> np.ndarray:
    return np.frombuffer(data, dtype=F8, count=count, offset=offset).astype(np.float64)


def plda_to_bytes(model: PldaModel) -> bytes:
    arrays = (model.mean, model.transform.reshape(-1), model.psi)
    return HEADER.pack(PLDA_MAGIC, FORMAT_VERSION, model.dim) + b"".join(a.astype(F8).tobytes() for a in arrays)


def plda_from_bytes(data: bytes, path=None) -> PldaModel:
    if len(data) < HEADER.size:
        raise ModelFormatError("truncated PLDA header", path)
    magic, version, dim = HEADER.unpack_from(data)
    if magic != PLDA_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {PLDA_MAGIC!r}", path)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported PLDA format version {version}", path)
    expected = HEADER.size + F8.itemsize * (2 * dim + dim * dim)
    if dim < 1 or len(data) != expected:
        raise ModelFormatError(f"PLDA block has {len(data)} bytes, expected {expected} for d={dim}", path)

    offset = HEADER.size
    mean = _floats(data, offset, dim)
    offset += F8.itemsize * dim
    transform = _floats(data, offset, dim * dim).reshape(dim, dim)
    offset += F8.itemsize * dim * dim
    psi = _floats(data, offset, dim)
    return PldaModel(mean=mean, transform=transform, psi=psi)


def mixture_to_bytes(mixture: MixturePlda) -> bytes:
    parts = [HEADER.pack(MIXTURE_MAGIC, FORMAT_VERSION, len(SPEAKER_TYPES))]
    for speaker_type in SPEAKER_TYPES:
        block = plda_to_bytes(mixture.components[speaker_type])
        parts.append(BLOCK_HEADER.pack(speaker_type.value.encode("ascii"), len(block)))
        parts.append(block)
    parts.append(mixture.default_prior.as_array().astype(F8).tobytes())
    return b"".join(parts)


def mixture_from_bytes(data: bytes, path=None) -> MixturePlda:
    if len(data) < HEADER.size:
        raise ModelFormatError("truncated mixture header", path)
    magic, version, count = HEADER.unpack_from(data)
    if magic != MIXTURE_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {MIXTURE_MAGIC!r}", path)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported mixture format version {version}", path)
    if count != len(SPEAKER_TYPES):
        raise ModelFormatError(f"mixture must hold {len(SPEAKER_TYPES)} components, got {count}", path)

    offset = HEADER.size
    components = {}
    for _ in range(count):
        if len(data) < offset + BLOCK_HEADER.size:
            raise ModelFormatError("truncated mixture block header", path)
        tag, length = BLOCK_HEADER.unpack_from(data, offset)
        offset += BLOCK_HEADER.size
        try:
            speaker_type = SpeakerType(tag.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            raise ModelFormatError(f"unknown component tag {tag!r}", path)
        if speaker_type in components:
            raise ModelFormatError(f"duplicate component {speaker_type.value}", path)
        components[speaker_type] = plda_from_bytes(data[offset : offset + length], path)
        offset += length

    prior_size = F8.itemsize * len(SPEAKER_TYPES)
    if len(data) != offset + prior_size:
        raise ModelFormatError("mixture prior missing or trailing bytes present", path)
    prior = SpeakerTypePrior.from_array(_floats(data, offset, len(SPEAKER_TYPES)))
    return MixturePlda(components=components, default_prior=prior)


def save_plda(model: PldaModel, path: PathLike) -> None:
    Path(path).write_bytes(plda_to_bytes(model))


def load_plda(path: PathLike) -> PldaModel:
    path = existing(path)
    return plda_from_bytes(path.read_bytes(), path)


def save_mixture(mixture: MixturePlda, path: PathLike) -> None:
    Path(path).write_bytes(mixture_to_bytes(mixture))


def load_mixture(path: PathLike) -> MixturePlda:
    path = existing(path)
    return mixture_from_bytes(path.read_bytes(), path)


def save_model(model: PldaModel | MixturePlda, path: PathLike) -> None:
    if isinstance(model, MixturePlda):
        save_mixture(model, path)
    else:
        save_plda(model, path)


def load_model(path: PathLike) -> PldaModel | MixturePlda:
    """
    Function loads single or mixture model file, the format is picked by magic.

    """
    path = existing(path)
    data = path.read_bytes()
    if data[:4] == MIXTURE_MAGIC:
        return mixture_from_bytes(data, path)
    return plda_from_bytes(data, path)


def write_embeddings_binary(path: PathLike, records: list[EmbeddingRecord], dim: int) -> None:
    parts = [EMBEDDING_HEADER.pack(EMBEDDING_MAGIC, FORMAT_VERSION, dim, len(records))]
    for record in records:
        encoded = record.recording_id.encode("utf-8")
        vector = np.asarray(record.vector, dtype=F8)
        if vector.shape != (dim,):
            raise ParseError(f"embedding of {record.recording_id} has shape {vector.shape}, expected ({dim},)", path)
        parts.append(ID_LENGTH.pack(len(encoded)) + encoded)
        parts.append(np.array([record.onset, record.offset], dtype=F8).tobytes() + vector.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_embeddings_binary(path: PathLike) -> tuple[list[EmbeddingRecord], int]:
    path = existing(path)
    data = path.read_bytes()
    if len(data) < EMBEDDING_HEADER.size:
        raise ParseError("truncated embedding header", path)
    magic, version, dim, count = EMBEDDING_HEADER.unpack_from(data)
    if magic != EMBEDDING_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}", path)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported embedding format version {version}", path)

    records = []
    offset = EMBEDDING_HEADER.size
    record_size = F8.itemsize * (2 + dim)
    for number in range(count):
        try:
            (length,) = ID_LENGTH.unpack_from(data, offset)
            offset += ID_LENGTH.size
            recording_id = data[offset : offset + length].decode("utf-8")
            offset += length
            if len(data) < offset + record_size:
                raise ParseError("truncated embedding record", path, number + 1)
            values = _floats(data, offset, 2 + dim)
            offset += record_size
        except (struct.error, UnicodeDecodeError) as exc:
            raise ParseError(f"malformed embedding record: {exc}", path, number + 1) from exc
        records.append(EmbeddingRecord(recording_id, float(values[0]), float(values[1]), values[2:]))

    if offset != len(data):
        raise ParseError("trailing bytes after embedding records", path)
    return records, dim
