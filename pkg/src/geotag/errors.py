"""Exception hierarchy shared across the package.

Everything raised on bad input data derives from :class:`GeotagError` so the
CLI can map it to a single "data error" exit code; anything else escaping a
command (assertion failures included) is an internal error.
"""


class GeotagError(Exception):
    """Base class for all data and usage errors raised by this package."""


# --- grid references / location ---

class GridRefError(GeotagError):
    pass


class EmptyInput(GridRefError):
    pass


class BadSquareLetters(GridRefError):
    pass


class OddDigitCount(GridRefError):
    pass


class BadDigits(GridRefError):
    pass


class OutOfDomain(GeotagError):
    """Coordinates fall outside the National Grid projection domain."""


class NonFiniteInput(GeotagError):
    pass


# --- file parsing / dataset assembly ---

class MalformedRow(GeotagError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownTag(GeotagError):
    def __init__(self, name: str, line: int):
        super().__init__(f"line {line}: unknown tag {name!r}")
        self.name = name
        self.line = line


class DuplicateId(GeotagError):
    pass


class BadMagic(GeotagError):
    pass


class TruncatedFile(GeotagError):
    pass


class DimMismatch(GeotagError):
    pass


class EmptyDataset(GeotagError):
    pass


class JoinMismatch(GeotagError):
    pass


# --- fusion / heads / training ---

class MissingModality(GeotagError):
    def __init__(self, modality: str):
        super().__init__(f"sample is missing the {modality!r} modality")
        self.modality = modality


class StaleCache(GeotagError):
    pass


class ShapeMismatch(GeotagError):
    pass


class BatchTooSmall(GeotagError):
    pass


class EmptyTrainSet(GeotagError):
    pass


class ConfigError(GeotagError):
    pass


# --- evaluation / reporting ---

class IdMismatch(GeotagError):
    pass


class EmptyPredictionRow(GeotagError):
    pass


class ComboMismatch(GeotagError):
    pass
