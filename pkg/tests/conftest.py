"""Shared fixtures: tiny on-disk corpora for ingest and CLI tests."""

from __future__ import annotations

import pytest


def write_tsv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")
    return str(path)


TEXTS = {
    "t1": "Der Hund. bellt laut heute",
    "t2": "Die Katze schläft gern dort",
}

SUBJECTS = ("s1", "s2", "s3", "s4")


@pytest.fixture
def corpus_dir(tmp_path):
    """A complete, consistent 4-subject corpus over two 5-word texts."""
    words = {tid: text.split() for tid, text in TEXTS.items()}
    readings = []
    rt = 150.0
    for subj in SUBJECTS:
        for tid in sorted(words):
            for wi, w in enumerate(words[tid]):
                rt = 150.0 + (hash((subj, tid, wi)) % 400)
                readings.append((subj, tid, wi, w, repr(rt)))
    # one skipped word for s1
    readings[1] = ("s1", "t1", 1, "Hund.", "")

    write_tsv(tmp_path / "readings.tsv",
              ["subject_id", "text_id", "word_index", "word", "fprt_ms"], readings)

    tests = ("mwt", "stroop")
    raws = {"s1": (12.0, 80.0), "s2": (15.0, 120.0), "s3": (19.0, 160.0), "s4": (22.0, 100.0)}
    score_rows = [(s, t, raws[s][i]) for s in SUBJECTS for i, t in enumerate(tests)]
    write_tsv(tmp_path / "scores.tsv",
              ["subject_id", "test_name", "raw_score"], score_rows)

    vocab = sorted({w for ws in words.values() for w in ws})
    write_tsv(tmp_path / "lexicon.tsv", ["word", "log_lemma_freq"],
              [(w, repr(1.0 + 0.37 * i)) for i, w in enumerate(vocab)])
    write_tsv(tmp_path / "texts.tsv", ["text_id", "text"],
              [(tid, TEXTS[tid]) for tid in sorted(TEXTS)])
    return tmp_path
