import math
from pathlib import Path

from mixplda.exceptions import InputMissingError, ParseError
from mixplda.schemas import SpeakerType

__all__ = ["PathLike", "is_comment", "split_fields", "to_float", "to_int", "to_type", "existing"]

PathLike = str | Path


def existing(path: PathLike) -> Path:
    """
    Function returns path if it points to a file, raises InputMissingError otherwise.

    """
    path = Path(path)
    if not path.is_file():
        raise InputMissingError(path)
    return path


def is_comment(line: str) -> bool:
    stripped = line.strip()
    return not stripped or stripped.startswith("#")


def split_fields(line: str, minimum: int, path=None, number: int | None = None, exact: bool = False) -> list[str]:
    fields = line.split()
    if len(fields) < minimum or (exact and len(fields) != minimum):
        expected = f"{minimum}" if exact else f"at least {minimum}"
        raise ParseError(f"expected {expected} fields, got {len(fields)}", path, number)
    return fields


def to_float(token: str, path=None, number: int | None = None) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"not a number: '{token}'", path, number)
    if not math.isfinite(value):
        raise ParseError(f"not a finite number: '{token}'", path, number)
    return value


def to_int(token: str, path=None, number: int | None = None) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"not an integer: '{token}'", path, number)


def to_type(token: str, path=None, number: int | None = None) -> SpeakerType:
    try:
        return SpeakerType(token)
    except ValueError:
        raise ParseError(f"unknown speaker type '{token}', expected M, F or C", path, number)
