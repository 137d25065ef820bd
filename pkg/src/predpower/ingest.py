"""Parse reading events, psychometric scores, and a frequency lexicon into the
joined analysis table that all regressions run on.

File formats (all UTF-8 TSV with a header row):

* readings.tsv: subject_id, text_id, word_index, word, fprt_ms
  (empty fprt_ms marks a skipped word)
* scores.tsv:   subject_id, test_name, raw_score  (long format)
* lexicon.tsv:  word, log_lemma_freq  (natural-log frequency per million)
* texts.tsv:    text_id, text  (whitespace-tokenized stimulus words)

The analysis table keeps one row per non-skipped (subject, word) event with the
response ``log_fprt`` (natural log of milliseconds) and every predictor column
z-scored over the retained rows (sample sd, ddof=1).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    CompletenessError,
    DegenerateScoreError,
    DuplicateKeyError,
    LexiconError,
    ParseError,
)

logger = logging.getLogger(__name__)

RESPONSE_COL = "log_fprt"
LENGTH_COL = "length_z"
LOGFREQ_COL = "logfreq_z"

#: The 13 psychometric tests of the default battery, in report order.
DEFAULT_TEST_NAMES = (
    "stroop",
    "simon",
    "fair",
    "sentence_span",
    "operation_span",
    "memory_updating",
    "spatial_stm",
    "mwt",
    "rias_verbal",
    "rias_nonverbal",
    "rias_total",
    "slrt_words",
    "slrt_pseudo",
)

#: Tests where a higher raw value means *worse* performance; stored sign-flipped
#: so that higher always means better cognitive control.
DEFAULT_NEGATE_SET = frozenset({"stroop", "simon"})


def surprisal_col(lm_tag: str) -> str:
    return f"surprisal_z_{lm_tag}"


def entropy_col(lm_tag: str) -> str:
    return f"entropy_z_{lm_tag}"


def score_col(test: str) -> str:
    return f"score_z_{test}"


@dataclass(frozen=True)
class ReadingEvent:
    """One (subject, word) reading event; ``fprt_ms`` is None for skipped words."""

    subject_id: str
    text_id: str
    word_index: int
    word: str
    fprt_ms: float | None


@dataclass(frozen=True)
class SubjectProfile:
    """One subject's standardized psychometric scores (z across subjects)."""

    subject_id: str
    scores: dict[str, float]


@dataclass(frozen=True)
class IngestConfig:
    negate_set: frozenset[str] = DEFAULT_NEGATE_SET
    expected_tests: tuple[str, ...] | None = None
    missing_lexicon: str = "error"  # "error" | "drop"
    min_fprt_ms: float | None = None
    max_fprt_ms: float | None = None
    standardize: bool = True  # z-score predictors once over all retained rows


@dataclass(frozen=True)
class AnalysisTable:
    """Immutable regression substrate: one row per retained reading event.

    ``df`` carries the response plus standardized predictor columns; treat it
    as read-only and copy before mutating.
    """

    df: pd.DataFrame
    lm_tags: tuple[str, ...]
    tests: tuple[str, ...]
    n_items: int
    n_subjects: int

    def predictor_columns(self) -> list[str]:
        cols = [LENGTH_COL, LOGFREQ_COL]
        for tag in self.lm_tags:
            cols += [surprisal_col(tag), entropy_col(tag)]
        cols += [score_col(t) for t in self.tests]
        return cols

    def items(self) -> list[tuple[str, int]]:
        seen = self.df[["text_id", "word_index"]].drop_duplicates()
        return sorted((str(t), int(w)) for t, w in seen.itertuples(index=False))

    def subjects(self) -> list[str]:
        return sorted(self.df["subject_id"].unique())

    def subset_subjects(self, subject_ids) -> "AnalysisTable":
        keep = self.df["subject_id"].isin(set(subject_ids))
        sub = self.df.loc[keep].reset_index(drop=True)
        return AnalysisTable(
            df=sub,
            lm_tags=self.lm_tags,
            tests=self.tests,
            n_items=sub[["text_id", "word_index"]].drop_duplicates().shape[0],
            n_subjects=sub["subject_id"].nunique(),
        )


def zscore(values: np.ndarray) -> np.ndarray:
    """Standardize to mean 0, sample sd 1 (ddof=1)."""
    x = np.asarray(values, dtype=float)
    sd = x.std(ddof=1)
    if not np.isfinite(sd) or sd == 0.0:
        raise DegenerateScoreError("cannot z-score a zero-variance vector")
    return (x - x.mean()) / sd


def _read_tsv(path: str, expected_header: list[str]):
    """Yield (line_number, fields) for each data row, validating the header."""
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path=path) from None
        if header != expected_header:
            raise ParseError(
                f"bad header {header!r}, expected {expected_header!r}", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise ParseError(
                    f"expected {len(expected_header)} columns, got {len(row)}",
                    path=path,
                    line=lineno,
                )
            yield lineno, row


def load_reading_events(path: str) -> list[ReadingEvent]:
    """Load readings.tsv; empty fprt_ms marks a skip, non-positive RTs are errors."""
    events: list[ReadingEvent] = []
    seen: set[tuple[str, str, int]] = set()
    for lineno, (subj, text, widx_s, word, fprt_s) in _read_tsv(
        path, ["subject_id", "text_id", "word_index", "word", "fprt_ms"]
    ):
        try:
            widx = int(widx_s)
        except ValueError:
            raise ParseError(f"non-integer word_index {widx_s!r}", path=path, line=lineno)
        if widx < 0:
            raise ParseError(f"negative word_index {widx}", path=path, line=lineno)
        if not word:
            raise ParseError("empty word", path=path, line=lineno)
        fprt: float | None
        if fprt_s == "":
            fprt = None
        else:
            try:
                fprt = float(fprt_s)
            except ValueError:
                raise ParseError(f"non-numeric fprt_ms {fprt_s!r}", path=path, line=lineno)
            if not math.isfinite(fprt) or fprt <= 0:
                raise ParseError(f"non-positive fprt_ms {fprt_s}", path=path, line=lineno)
        key = (subj, text, widx)
        if key in seen:
            raise DuplicateKeyError(f"duplicate reading event {key} at {path}:{lineno}")
        seen.add(key)
        events.append(ReadingEvent(subj, text, widx, word, fprt))
    return events


def load_psychometric_scores(
    path: str,
    negate_set: frozenset[str] | set[str] = DEFAULT_NEGATE_SET,
    expected_tests: tuple[str, ...] | None = None,
) -> list[SubjectProfile]:
    """Load scores.tsv; negate the configured tests, then z-score each test
    across subjects.

    Every subject must have exactly one raw score for every test; a test with
    zero variance across subjects cannot be standardized and is an error.
    """
    raw: dict[str, dict[str, float]] = {}
    for lineno, (subj, test, score_s) in _read_tsv(
        path, ["subject_id", "test_name", "raw_score"]
    ):
        try:
            val = float(score_s)
        except ValueError:
            raise ParseError(f"non-numeric raw_score {score_s!r}", path=path, line=lineno)
        if not math.isfinite(val):
            raise ParseError(f"non-finite raw_score {score_s}", path=path, line=lineno)
        per_subj = raw.setdefault(subj, {})
        if test in per_subj:
            raise DuplicateKeyError(f"duplicate score ({subj}, {test}) at {path}:{lineno}")
        per_subj[test] = val
    if not raw:
        raise CompletenessError(f"{path}: no score rows")

    tests = tuple(expected_tests) if expected_tests else tuple(
        sorted(next(iter(raw.values())).keys())
    )
    subjects = sorted(raw.keys())
    for subj in subjects:
        missing = [t for t in tests if t not in raw[subj]]
        if missing:
            raise CompletenessError(f"subject {subj} is missing tests {missing}")
        extra = [t for t in raw[subj] if t not in tests]
        if extra:
            raise CompletenessError(f"subject {subj} has unexpected tests {extra}")

    standardized: dict[str, np.ndarray] = {}
    for test in tests:
        vals = np.array([raw[s][test] for s in subjects], dtype=float)
        if test in negate_set:
            vals = -vals
        try:
            standardized[test] = zscore(vals)
        except DegenerateScoreError:
            raise DegenerateScoreError(
                f"test {test!r} has zero variance across subjects; z-score undefined"
            ) from None

    return [
        SubjectProfile(subj, {t: float(standardized[t][i]) for t in tests})
        for i, subj in enumerate(subjects)
    ]


def load_lexicon(path: str) -> dict[str, float]:
    """Load lexicon.tsv mapping surface form to natural-log frequency per million."""
    lex: dict[str, float] = {}
    for lineno, (word, freq_s) in _read_tsv(path, ["word", "log_lemma_freq"]):
        try:
            freq = float(freq_s)
        except ValueError:
            raise ParseError(f"non-numeric log_lemma_freq {freq_s!r}", path=path, line=lineno)
        if word in lex:
            raise DuplicateKeyError(f"duplicate lexicon entry {word!r} at {path}:{lineno}")
        lex[word] = freq
    return lex


def load_texts(path: str) -> dict[str, str]:
    """Load texts.tsv mapping text_id to the whitespace-tokenized stimulus text."""
    texts: dict[str, str] = {}
    for lineno, (text_id, text) in _read_tsv(path, ["text_id", "text"]):
        if text_id in texts:
            raise DuplicateKeyError(f"duplicate text_id {text_id!r} at {path}:{lineno}")
        if not text.strip():
            raise ParseError("empty text", path=path, line=lineno)
        texts[text_id] = text
    return texts


def build_analysis_table(
    events: list[ReadingEvent],
    profiles: list[SubjectProfile],
    lexicon: dict[str, float],
    word_scores: dict[str, dict[tuple[str, int], tuple[float, float]]],
    config: IngestConfig = IngestConfig(),
) -> AnalysisTable:
    """Join events, profiles, lexicon, and per-LM word scores into the table.

    ``word_scores`` maps lm_tag -> {(text_id, word_index): (surprisal, entropy)}.
    Skipped events are excluded; the response is the natural log of fprt_ms;
    word length counts characters including punctuation.  All predictor columns
    are z-scored over the retained rows unless ``config.standardize`` is off.
    """
    profile_map = {p.subject_id: p for p in profiles}
    tests = tuple(sorted(profiles[0].scores.keys())) if profiles else ()
    lm_tags = tuple(sorted(word_scores.keys()))

    rows: list[dict] = []
    n_dropped = 0
    for ev in sorted(events, key=lambda e: (e.subject_id, e.text_id, e.word_index)):
        if ev.fprt_ms is None:
            continue  # skipped word
        if config.min_fprt_ms is not None and ev.fprt_ms < config.min_fprt_ms:
            continue
        if config.max_fprt_ms is not None and ev.fprt_ms > config.max_fprt_ms:
            continue
        if ev.subject_id not in profile_map:
            raise CompletenessError(f"subject {ev.subject_id!r} has no psychometric profile")
        if ev.word not in lexicon:
            if config.missing_lexicon == "drop":
                n_dropped += 1
                logger.info("dropping %r: word %r not in lexicon", ev, ev.word)
                continue
            raise LexiconError(f"word {ev.word!r} not in lexicon (event {ev.subject_id}, "
                               f"{ev.text_id}, {ev.word_index})")
        row = {
            "subject_id": ev.subject_id,
            "text_id": ev.text_id,
            "word_index": ev.word_index,
            RESPONSE_COL: math.log(ev.fprt_ms),
            LENGTH_COL: float(len(ev.word)),
            LOGFREQ_COL: lexicon[ev.word],
        }
        key = (ev.text_id, ev.word_index)
        for tag in lm_tags:
            try:
                s, h = word_scores[tag][key]
            except KeyError:
                raise CompletenessError(
                    f"no {tag!r} scores for word {key}; every retained word needs "
                    f"scores for every configured LM tag"
                ) from None
            row[surprisal_col(tag)] = s
            row[entropy_col(tag)] = h
        prof = profile_map[ev.subject_id]
        for t in tests:
            row[score_col(t)] = prof.scores[t]
        rows.append(row)

    if n_dropped:
        logger.warning("dropped %d rows with words missing from the lexicon", n_dropped)
    if not rows:
        raise CompletenessError("analysis table is empty after exclusions")

    df = pd.DataFrame(rows)
    predictor_cols = [LENGTH_COL, LOGFREQ_COL]
    for tag in lm_tags:
        predictor_cols += [surprisal_col(tag), entropy_col(tag)]
    predictor_cols += [score_col(t) for t in tests]
    if config.standardize:
        for col in predictor_cols:
            try:
                df[col] = zscore(df[col].to_numpy())
            except DegenerateScoreError:
                raise DegenerateScoreError(
                    f"predictor column {col!r} has zero variance over retained rows"
                ) from None

    return AnalysisTable(
        df=df,
        lm_tags=lm_tags,
        tests=tests,
        n_items=df[["text_id", "word_index"]].drop_duplicates().shape[0],
        n_subjects=df["subject_id"].nunique(),
    )


def write_analysis_table(table: AnalysisTable, path: str) -> None:
    """Dump the table as TSV (deterministic float repr, stable row order)."""
    cols = list(table.df.columns)
    with io.open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in table.df.itertuples(index=False):
            fh.write("\t".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
