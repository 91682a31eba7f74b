__all__ = [
    "MixPldaError",
    "InputMissingError",
    "ParseError",
    "ModelFormatError",
    "NumericError",
    "RankDeficientError",
    "DegenerateEmbeddingError",
    "SingularTransformError",
    "DimensionMismatchError",
    "PriorError",
    "SegmentationError",
    "ClusteringError",
    "MissingEmbeddingError",
    "EmptyScoringRegionError",
    "UnknownSuiteError",
    "TrainingDataError",
]


class MixPldaError(Exception):
    """
    Base class for all package errors, `exit_code` is used by the CLI.

    """

    exit_code = 1


class InputMissingError(MixPldaError):
    exit_code = 3

    def __init__(self, path):
        self.path = path
        super().__init__(f"Input file is missing: {path}")


class ParseError(MixPldaError):
    exit_code = 4

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location += f"{path}"
        if line is not None:
            location += f":{line}"
        super().__init__(f"{location}: {message}" if location else message)


class ModelFormatError(ParseError):
    pass


class NumericError(MixPldaError):
    exit_code = 5


class RankDeficientError(NumericError):
    def __init__(self, detail: str = ""):
        super().__init__("rank-deficient data" + (f": {detail}" if detail else ""))


class DegenerateEmbeddingError(NumericError):
    def __init__(self):
        super().__init__("degenerate embedding")


class SingularTransformError(NumericError):
    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"PLDA transform is numerically singular (condition number {condition:.3g})")


class DimensionMismatchError(MixPldaError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"Dimension mismatch: expected {expected}, got {got}")


class PriorError(MixPldaError):
    pass


class TrainingDataError(MixPldaError):
    pass


class SegmentationError(MixPldaError):
    pass


class ClusteringError(MixPldaError):
    pass


class MissingEmbeddingError(MixPldaError):
    pass


class EmptyScoringRegionError(MixPldaError):
    def __init__(self):
        super().__init__("empty scoring region")


class UnknownSuiteError(MixPldaError):
    def __init__(self, name: str, available):
        super().__init__(f"Unknown experiment suite '{name}', available: {', '.join(available)}")
