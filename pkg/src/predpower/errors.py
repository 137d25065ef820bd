"""Exception types shared across the pipeline.

Every error the CLI can surface maps to one of these classes so that the
machine-readable error JSON carries a stable ``error`` field.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all predpower errors."""

    exit_code = 1


class ParseError(PipelineError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DuplicateKeyError(PipelineError):
    pass


class CompletenessError(PipelineError):
    pass


class DegenerateScoreError(PipelineError):
    pass


class LexiconError(PipelineError):
    pass


class AlignmentError(PipelineError):
    pass


class CollinearityError(PipelineError):
    """Rank-deficient design matrix; names the offending columns."""

    def __init__(self, columns: list[str]):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; offending columns: {self.columns}")


class ConvergenceError(PipelineError):
    """Optimizer failed to converge; carries the evaluation trace."""

    def __init__(self, message: str, trace: list[tuple[float, float]] | None = None):
        self.trace = trace or []
        super().__init__(message)


class ModelSpecError(PipelineError):
    pass


class ParameterError(PipelineError):
    pass


class NumericError(PipelineError):
    pass


class SizeError(PipelineError):
    pass


class DegenerateSplitError(PipelineError):
    pass


class ConfigError(PipelineError):
    """Invalid run configuration; lists every violation at once."""

    exit_code = 2

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))
