"""Exception types raised across the package."""


class HypDenseError(Exception):
    """Base class for every error raised by hypdense."""


class DimensionError(HypDenseError, ValueError):
    pass


class InvalidPointError(HypDenseError, ValueError):
    """A vector is not on (or tangent to) the hyperboloid within tolerance."""


class InvalidParamsError(HypDenseError, ValueError):
    pass


class DivergenceDomainError(HypDenseError, ValueError):
    """Divergence requested outside the region where its closed form is defined."""


class UndefinedMetricError(HypDenseError, ValueError):
    pass


class FormatError(HypDenseError):
    """A dataset or checkpoint file could not be parsed."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset


class VersionError(FormatError):
    pass


class ConfigError(HypDenseError, ValueError):
    pass


class TrainingDivergedError(HypDenseError, RuntimeError):
    def __init__(self, message: str, dump_path=None):
        super().__init__(message if dump_path is None else f"{message}; batch dumped to {dump_path}")
        self.dump_path = dump_path
