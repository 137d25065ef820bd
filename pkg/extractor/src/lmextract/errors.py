"""Error taxonomy; every failure path raises an ExtractionError subclass."""


class ExtractionError(Exception):
    exit_code = 1


class ParameterError(ExtractionError):
    """Invalid job parameters (empty texts, bad batch size, unwritable path)."""

    exit_code = 2


class UnsupportedTokenizerError(ExtractionError):
    """The tokenizer cannot report character offsets for its tokens."""


class NumericError(ExtractionError):
    """NaN or Inf appeared in a score; the message names text and position."""


class ParseError(ExtractionError):
    """Malformed texts.tsv input."""
