"""Exception types shared across the package.

``ConfigError`` maps to CLI exit code 2, every ``DataError`` to exit code 3.
"""


class WindvalError(Exception):
    """Base class for all package errors."""


class ConfigError(WindvalError):
    pass


class DataError(WindvalError, ValueError):
    pass


class FormatError(DataError):
    pass


class EmptySelectionError(DataError):
    pass


class OutOfDomainError(DataError):
    pass


class NodataError(DataError):
    pass


class DomainError(DataError):
    """Input outside the mathematical domain of a function (e.g. non-finite speeds)."""


class DegenerateSeriesError(DataError):
    pass


class HeightMismatchError(DataError):
    pass


class ImputationError(DataError):
    pass


class AmbiguousMatchError(DataError):
    def __init__(self, name: str, candidates: list[str]):
        self.name = name
        self.candidates = list(candidates)
        super().__init__(f"{name!r} matches several names: {', '.join(map(repr, self.candidates))}")


class AlignmentError(DataError):
    pass


class SimulationError(DataError):
    def __init__(self, record_id: str, cause: Exception):
        self.record_id = record_id
        self.cause = cause
        super().__init__(f"record {record_id}: {cause}")
