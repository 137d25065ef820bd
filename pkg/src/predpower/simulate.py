"""Synthetic reading-time corpora from a declared generative model.

The generator samples a random bigram Markov chain (Dirichlet transition
rows) over an artificial vocabulary, emits texts from it, and produces
log-normal reading times with a per-subject random intercept:

    y_ij = beta0 + b_j
         + beta_length * length_z + beta_logfreq * logfreq_z
         + beta_surprisal * s_z + beta_entropy * h_z
         + beta_score * c_z + beta6 * (m_z * c_z)
         + sigma_resid * eps,      fprt = exp(y) milliseconds

where every *_z predictor is the column the analysis table itself carries:
the generator builds the table through the regular ingest path first, reads
the standardized predictors back, and only then draws the response.  Fitted
coefficients are therefore on exactly the generator's scale.

Two score sources: "true_chain" uses the chain's exact conditional surprisal
and entropy as the table's LM measures; "fitted_bigram" trains the package's
additive-smoothed bigram LM on the generated texts and scores them with it,
matching what the file-based pipeline recomputes from texts.tsv.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .ingest import (
    DEFAULT_NEGATE_SET,
    RESPONSE_COL,
    AnalysisTable,
    IngestConfig,
    ReadingEvent,
    SubjectProfile,
    build_analysis_table,
    entropy_col,
    score_col,
    surprisal_col,
    zscore,
)
from .ngram import score_tokens, train_bigram

SCORE_SOURCES = ("true_chain", "fitted_bigram")
LOADINGS = ("uniform", "low_only")
MEASURES = ("surprisal", "entropy")


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one synthetic corpus draw."""

    n_subjects: int = 61
    n_texts: int = 8
    words_per_text: int = 100
    vocab_size: int = 400
    dirichlet_conc: float = 0.3
    beta0: float = 5.5
    beta_length: float = 0.05
    beta_logfreq: float = -0.05
    beta_surprisal: float = 0.08
    beta_entropy: float = 0.03
    beta_score: float = -0.05
    beta6: float = 0.0
    sigma_resid: float = 0.25
    sigma_subj: float = 0.15
    measure: str = "surprisal"  # which measure the interaction multiplies
    test_name: str = "mwt"
    tests: tuple[str, ...] = ("mwt",)
    lm_tag: str = "bigram"
    score_source: str = "true_chain"
    alpha_smooth: float = 0.1
    loading: str = "uniform"  # "low_only": only low-score subjects load on surprisal
    skip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2:
            raise ParameterError(f"need >= 2 subjects, got {self.n_subjects}")
        if self.n_texts < 1 or self.words_per_text < 1:
            raise ParameterError("corpus must contain at least one word")
        if self.vocab_size < 10:
            raise ParameterError(f"vocabulary too small: {self.vocab_size}")
        if self.score_source not in SCORE_SOURCES:
            raise ParameterError(f"score_source must be one of {SCORE_SOURCES}")
        if self.loading not in LOADINGS:
            raise ParameterError(f"loading must be one of {LOADINGS}")
        if self.measure not in MEASURES:
            raise ParameterError(f"measure must be one of {MEASURES}")
        if self.test_name not in self.tests:
            raise ParameterError(f"test_name {self.test_name!r} not in tests {self.tests}")
        if not (self.sigma_resid > 0 and self.sigma_subj >= 0):
            raise ParameterError("variance components must be positive")
        if not (0.0 <= self.skip_prob < 1.0):
            raise ParameterError(f"skip_prob must be in [0, 1), got {self.skip_prob}")


@dataclass(frozen=True)
class SimulatedCorpus:
    """File-shaped pieces of one draw plus the generating truth."""

    texts: dict[str, str]
    events: list[ReadingEvent]
    raw_scores: dict[str, dict[str, float]]  # subject -> test -> raw value
    lexicon: dict[str, float]
    word_scores: dict[str, dict[tuple[str, int], tuple[float, float]]]
    truth: dict = field(repr=False)


def _entropy_bits(p: np.ndarray) -> float:
    pos = p[p > 0]
    return float(-(pos * np.log2(pos)).sum())


def _random_words(rng: np.random.Generator, n: int) -> list[str]:
    letters = "abcdefghijklmnopqrstuvwxyz"
    seen: set[str] = set()
    words: list[str] = []
    while len(words) < n:
        k = int(rng.integers(2, 10))
        w = "".join(letters[int(i)] for i in rng.integers(0, 26, size=k))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _standardized_profiles(
    raw_scores: dict[str, dict[str, float]], tests: tuple[str, ...]
) -> list[SubjectProfile]:
    """Negate-then-z-score raw scores across subjects, as the ingest loader does."""
    subjects = sorted(raw_scores)
    std: dict[str, np.ndarray] = {}
    for t in tests:
        vals = np.array([raw_scores[s][t] for s in subjects], dtype=float)
        if t in DEFAULT_NEGATE_SET:
            vals = -vals
        std[t] = zscore(vals)
    return [
        SubjectProfile(s, {t: float(std[t][i]) for t in tests})
        for i, s in enumerate(subjects)
    ]


def _draw(config: SimConfig):
    """Everything up to (but not including) the response draw."""
    rng = np.random.default_rng([config.seed])
    words = _random_words(rng, config.vocab_size)
    conc = np.full(config.vocab_size, config.dirichlet_conc)
    init = rng.dirichlet(conc)
    trans = rng.dirichlet(conc, size=config.vocab_size)

    texts: dict[str, str] = {}
    true_scores: dict[tuple[str, int], tuple[float, float]] = {}
    for ti in range(config.n_texts):
        tid = f"text{ti:03d}"
        prev = None
        picks = []
        for wi in range(config.words_per_text):
            p = init if prev is None else trans[prev]
            w = int(rng.choice(config.vocab_size, p=p))
            true_scores[(tid, wi)] = (
                -math.log2(max(float(p[w]), 1e-300)),
                _entropy_bits(p),
            )
            picks.append(w)
            prev = w
        texts[tid] = " ".join(words[i] for i in picks)

    logfreq = rng.normal(3.0, 1.0, size=config.vocab_size)
    lexicon = {words[i]: float(logfreq[i]) for i in range(config.vocab_size)}

    if config.score_source == "true_chain":
        word_scores = {config.lm_tag: true_scores}
    else:
        lm = train_bigram(list(texts.values()), alpha=config.alpha_smooth)
        fitted: dict[tuple[str, int], tuple[float, float]] = {}
        for tid, text in texts.items():
            for wi, (s, h) in enumerate(score_tokens(lm, text)):
                fitted[(tid, wi)] = (s, h)
        word_scores = {config.lm_tag: fitted}

    subjects = [f"s{j:03d}" for j in range(config.n_subjects)]
    raw_scores = {
        s: {t: float(rng.normal(0.0, 1.0)) for t in config.tests} for s in subjects
    }
    b = {s: float(v) for s, v in zip(subjects, rng.normal(0.0, config.sigma_subj, len(subjects)))}

    skip: set[tuple[str, str, int]] = set()
    events0: list[ReadingEvent] = []
    for s in subjects:
        for tid, text in texts.items():
            for wi, word in enumerate(text.split()):
                if config.skip_prob > 0 and rng.random() < config.skip_prob:
                    skip.add((s, tid, wi))
                    events0.append(ReadingEvent(s, tid, wi, word, None))
                else:
                    events0.append(ReadingEvent(s, tid, wi, word, 1.0))

    return rng, texts, lexicon, word_scores, raw_scores, b, events0


def _response(config: SimConfig, rng, table: AnalysisTable, b: dict[str, float],
              profiles: list[SubjectProfile]) -> tuple[np.ndarray, dict]:
    """Draw y from the Eq-structured linear predictor over the table's own
    standardized columns."""
    df = table.df
    mcol = surprisal_col(config.lm_tag) if config.measure == "surprisal" else entropy_col(config.lm_tag)
    m_z = df[mcol].to_numpy()
    c_z = df[score_col(config.test_name)].to_numpy()

    scores_by_subject = {p.subject_id: p.scores[config.test_name] for p in profiles}
    med = float(np.median(list(scores_by_subject.values())))
    low_subjects = {s for s, v in scores_by_subject.items() if v <= med}
    beta_s = np.full(len(df), config.beta_surprisal)
    if config.loading == "low_only":
        in_low = df["subject_id"].astype(str).isin(low_subjects).to_numpy()
        beta_s = np.where(in_low, config.beta_surprisal, 0.0)

    b_row = df["subject_id"].astype(str).map(b).to_numpy(dtype=float)
    eps = rng.normal(0.0, 1.0, size=len(df))
    y = (
        config.beta0
        + b_row
        + config.beta_length * df["length_z"].to_numpy()
        + config.beta_logfreq * df["logfreq_z"].to_numpy()
        + beta_s * df[surprisal_col(config.lm_tag)].to_numpy()
        + config.beta_entropy * df[entropy_col(config.lm_tag)].to_numpy()
        + config.beta_score * c_z
        + config.beta6 * (m_z * c_z)
        + config.sigma_resid * eps
    )
    truth = {
        "beta6": config.beta6,
        "measure": config.measure,
        "test_name": config.test_name,
        "lm_tag": config.lm_tag,
        "b": b,
        "median_score": med,
        "low_subjects": low_subjects,
        "high_subjects": set(scores_by_subject) - low_subjects,
        "interaction_var": float(np.var(m_z * c_z)),
    }
    return y, truth


def simulate_table(config: SimConfig) -> tuple[AnalysisTable, dict]:
    """In-memory draw: the assembled analysis table with a simulated response.

    The response column is the exact linear-predictor draw (no exp/log round
    trip), which keeps coefficient recovery free of representation noise.
    """
    rng, _texts, lexicon, word_scores, raw_scores, b, events0 = _draw(config)
    profiles = _standardized_profiles(raw_scores, config.tests)
    table = build_analysis_table(events0, profiles, lexicon, word_scores, IngestConfig())
    y, truth = _response(config, rng, table, b, profiles)
    df = table.df.copy()
    df[RESPONSE_COL] = y
    return replace(table, df=df), truth


def simulate_corpus(config: SimConfig) -> SimulatedCorpus:
    """File-shaped draw: events carry fprt_ms = exp(y); skipped words stay
    empty.  Writing these pieces out and re-ingesting reproduces the same
    table up to float round-trip of exp/log."""
    rng, texts, lexicon, word_scores, raw_scores, b, events0 = _draw(config)
    profiles = _standardized_profiles(raw_scores, config.tests)
    table = build_analysis_table(events0, profiles, lexicon, word_scores, IngestConfig())
    y, truth = _response(config, rng, table, b, profiles)

    fprt_by_key = {
        (str(s), str(t), int(w)): math.exp(v)
        for s, t, w, v in zip(
            table.df["subject_id"], table.df["text_id"], table.df["word_index"], y
        )
    }
    events = [
        ev if ev.fprt_ms is None else ReadingEvent(
            ev.subject_id, ev.text_id, ev.word_index, ev.word,
            fprt_by_key[(ev.subject_id, ev.text_id, ev.word_index)],
        )
        for ev in events0
    ]
    return SimulatedCorpus(
        texts=texts,
        events=events,
        raw_scores=raw_scores,
        lexicon=lexicon,
        word_scores=word_scores,
        truth=truth,
    )


def write_corpus(sim: SimulatedCorpus, out_dir: str) -> dict[str, str]:
    """Write texts/readings/scores/lexicon TSVs; returns the path map."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "texts": os.path.join(out_dir, "texts.tsv"),
        "readings": os.path.join(out_dir, "readings.tsv"),
        "scores": os.path.join(out_dir, "scores.tsv"),
        "lexicon": os.path.join(out_dir, "lexicon.tsv"),
    }
    with open(paths["texts"], "w", encoding="utf-8") as fh:
        fh.write("text_id\ttext\n")
        for tid in sorted(sim.texts):
            fh.write(f"{tid}\t{sim.texts[tid]}\n")
    with open(paths["readings"], "w", encoding="utf-8") as fh:
        fh.write("subject_id\ttext_id\tword_index\tword\tfprt_ms\n")
        for ev in sim.events:
            fprt = "" if ev.fprt_ms is None else repr(ev.fprt_ms)
            fh.write(f"{ev.subject_id}\t{ev.text_id}\t{ev.word_index}\t{ev.word}\t{fprt}\n")
    with open(paths["scores"], "w", encoding="utf-8") as fh:
        fh.write("subject_id\ttest_name\traw_score\n")
        for subj in sorted(sim.raw_scores):
            for test, val in sim.raw_scores[subj].items():
                fh.write(f"{subj}\t{test}\t{val!r}\n")
    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        fh.write("word\tlog_lemma_freq\n")
        for word in sorted(sim.lexicon):
            fh.write(f"{word}\t{sim.lexicon[word]!r}\n")
    return paths
