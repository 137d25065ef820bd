"""Align LM tokens to whitespace words via character offsets and pool
token-level surprisal/entropy up to word level.

Word surprisal is the sum of its tokens' surprisals (exact under the chain
rule); word entropy is the sum of the tokens' contextual entropies, which is
only an upper bound on the joint entropy (tight iff the tokens are
independent).  A token belongs to the word whose character span contains the
token's first non-whitespace character, which keeps alignment robust to
tokenizers that attach leading whitespace to tokens.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

from .errors import AlignmentError, ParseError

TOKENS_HEADER = [
    "text_id", "token_index", "token", "char_start", "char_end",
    "surprisal_bits", "entropy_bits",
]


@dataclass(frozen=True)
class TokenScore:
    """One LM token with its character span and information measures."""

    text_id: str
    token_index: int
    token: str
    char_start: int
    char_end: int
    surprisal_bits: float
    entropy_bits: float


@dataclass(frozen=True)
class WordScore:
    """Pooled word-level scores; entropy is the summed upper bound."""

    text_id: str
    word_index: int
    surprisal_bits: float
    entropy_upper_bits: float
    token_count: int


def word_spans(text: str) -> list[tuple[int, int]]:
    """Character spans [start, end) of the whitespace-separated words."""
    spans = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        spans.append((i, j))
        i = j
    return spans


def validate_token_rows(rows: list[TokenScore]) -> None:
    """Check the per-text TokenScore invariants (ordering, spans, finiteness)."""
    prev_index = None
    prev_end = None
    for r in rows:
        if prev_index is not None and r.token_index <= prev_index:
            raise ParseError(
                f"token_index not strictly increasing at {r.text_id}:{r.token_index}"
            )
        if r.char_start >= r.char_end:
            raise ParseError(f"empty char span for token {r.text_id}:{r.token_index}")
        if prev_end is not None and r.char_start < prev_end:
            raise ParseError(
                f"overlapping char span for token {r.text_id}:{r.token_index}"
            )
        for name, v in (("surprisal", r.surprisal_bits), ("entropy", r.entropy_bits)):
            if not math.isfinite(v) or v < 0:
                raise ParseError(
                    f"non-finite or negative {name} for token {r.text_id}:{r.token_index}"
                )
        prev_index = r.token_index
        prev_end = r.char_end


def align_tokens_to_words(text: str, tokens: list[TokenScore]) -> dict[int, list[int]]:
    """Map word_index -> list of positions into ``tokens``.

    Requires the token spans to cover every non-whitespace character exactly
    once; a token whose non-whitespace characters cross a word boundary is
    rejected rather than split.
    """
    spans = word_spans(text)
    if not spans:
        raise AlignmentError("text has no words")
    validate_token_rows(tokens)

    covered = [False] * len(text)
    for t in tokens:
        if t.char_end > len(text):
            raise AlignmentError(
                f"token {t.token_index} span [{t.char_start},{t.char_end}) exceeds text length"
            )
        for i in range(t.char_start, t.char_end):
            if covered[i]:
                raise AlignmentError(f"character {i} covered by more than one token")
            covered[i] = True
    uncovered = [i for i, (c, ch) in enumerate(zip(covered, text)) if not c and not ch.isspace()]
    if uncovered:
        raise AlignmentError(f"non-whitespace characters not covered by any token: {uncovered[:8]}")

    alignment: dict[int, list[int]] = {}
    for pos, t in enumerate(tokens):
        first = next(
            (i for i in range(t.char_start, t.char_end) if not text[i].isspace()), None
        )
        if first is None:
            raise AlignmentError(f"token {t.token_index} is all whitespace")
        widx = next((k for k, (a, b) in enumerate(spans) if a <= first < b), None)
        if widx is None:
            raise AlignmentError(f"token {t.token_index} starts outside every word span")
        a, b = spans[widx]
        if any(not text[i].isspace() and not (a <= i < b) for i in range(t.char_start, t.char_end)):
            raise AlignmentError(
                f"token {t.token_index} ({t.token!r}) crosses the boundary of word {widx}"
            )
        alignment.setdefault(widx, []).append(pos)

    empty = [k for k in range(len(spans)) if k not in alignment]
    if empty:
        raise AlignmentError(f"words with zero tokens: {empty}")
    return alignment


def pool_word_scores(
    alignment: dict[int, list[int]], tokens: list[TokenScore]
) -> list[WordScore]:
    """Sum token surprisals and entropies within each aligned word."""
    out = []
    for widx in sorted(alignment):
        members = [tokens[p] for p in alignment[widx]]
        out.append(
            WordScore(
                text_id=members[0].text_id,
                word_index=widx,
                surprisal_bits=sum(t.surprisal_bits for t in members),
                entropy_upper_bits=sum(t.entropy_bits for t in members),
                token_count=len(members),
            )
        )
    return out


def pool_texts(
    texts: dict[str, str], tokens_by_text: dict[str, list[TokenScore]]
) -> dict[tuple[str, int], tuple[float, float]]:
    """Align and pool every text; returns {(text_id, word_index): (s, h)}."""
    scores: dict[tuple[str, int], tuple[float, float]] = {}
    for text_id in sorted(tokens_by_text):
        if text_id not in texts:
            raise AlignmentError(f"tokens reference unknown text_id {text_id!r}")
        rows = tokens_by_text[text_id]
        alignment = align_tokens_to_words(texts[text_id], rows)
        for ws in pool_word_scores(alignment, rows):
            scores[(text_id, ws.word_index)] = (ws.surprisal_bits, ws.entropy_upper_bits)
    return scores


def load_tokens(path: str) -> dict[str, list[TokenScore]]:
    """Read a tokens.tsv exchange file, grouped by text_id (file order kept)."""
    by_text: dict[str, list[TokenScore]] = {}
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != TOKENS_HEADER:
            raise ParseError(f"bad header {header!r}", path=path, line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(TOKENS_HEADER):
                raise ParseError(
                    f"expected {len(TOKENS_HEADER)} columns, got {len(parts)}",
                    path=path, line=lineno,
                )
            try:
                row = TokenScore(
                    text_id=parts[0],
                    token_index=int(parts[1]),
                    token=parts[2],
                    char_start=int(parts[3]),
                    char_end=int(parts[4]),
                    surprisal_bits=float(parts[5]),
                    entropy_bits=float(parts[6]),
                )
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from None
            by_text.setdefault(row.text_id, []).append(row)
    for rows in by_text.values():
        validate_token_rows(rows)
    return by_text


def write_tokens(rows: list[TokenScore], path: str) -> None:
    with io.open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(TOKENS_HEADER) + "\n")
        for r in rows:
            fh.write(
                f"{r.text_id}\t{r.token_index}\t{r.token}\t{r.char_start}\t{r.char_end}\t"
                f"{r.surprisal_bits!r}\t{r.entropy_bits!r}\n"
            )


def write_word_scores(scores: list[WordScore], path: str) -> None:
    with io.open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("text_id\tword_index\tsurprisal_bits\tentropy_upper_bits\ttoken_count\n")
        for w in scores:
            fh.write(
                f"{w.text_id}\t{w.word_index}\t{w.surprisal_bits!r}\t"
                f"{w.entropy_upper_bits!r}\t{w.token_count}\n"
            )


def load_word_scores(path: str) -> dict[tuple[str, int], tuple[float, float]]:
    """Read a word-scores TSV back into the {(text_id, word_index):
    (surprisal, entropy)} mapping the table builder consumes."""
    expected = ["text_id", "word_index", "surprisal_bits", "entropy_upper_bits", "token_count"]
    out: dict[tuple[str, int], tuple[float, float]] = {}
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != expected:
            raise ParseError(f"bad header {header!r}, expected {expected!r}", path=path, line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError(f"expected 5 columns, got {len(parts)}", path=path, line=lineno)
            tid, widx_s, s_s, h_s, _count = parts
            try:
                key = (tid, int(widx_s))
                val = (float(s_s), float(h_s))
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from None
            if key in out:
                raise ParseError(f"duplicate word score for {key}", path=path, line=lineno)
            if not (math.isfinite(val[0]) and math.isfinite(val[1])):
                raise ParseError(f"non-finite score for {key}", path=path, line=lineno)
            out[key] = val
    return out
