"""Token-level surprisal/entropy extraction from causal LMs.

Emits the tokens.tsv exchange format: one row per non-special token with
character offsets into the source text, surprisal and exact full-vocabulary
contextual entropy in bits.
"""

from .core import (
    TOKENS_HEADER,
    ExtractionJob,
    TokenRow,
    extract_token_scores,
    load_model_and_tokenizer,
    load_texts_tsv,
    score_texts,
    write_tokens_tsv,
)
from .errors import (
    ExtractionError,
    NumericError,
    ParameterError,
    ParseError,
    UnsupportedTokenizerError,
)

__all__ = [
    "TOKENS_HEADER",
    "ExtractionJob",
    "TokenRow",
    "extract_token_scores",
    "load_model_and_tokenizer",
    "load_texts_tsv",
    "score_texts",
    "write_tokens_tsv",
    "ExtractionError",
    "NumericError",
    "ParameterError",
    "ParseError",
    "UnsupportedTokenizerError",
]

__version__ = "0.1.0"
