"""Regenerate the bundled mini corpus and its golden h1 report.

The corpus is a seeded synthetic draw (5 subjects x 200 words, full 13-test
battery) whose reading times load on the fitted bigram LM's own surprisal, so
the file-based pipeline recovers real structure.  The golden report pins the
exact bytes `h1` must reproduce on this input with the bundled seeds.

Run from the repository root:

    python3 scripts/make_mini_corpus.py
"""

from __future__ import annotations

import filecmp
import json
import os
import shutil
import sys
import tempfile

from predpower.cli import main
from predpower.ingest import DEFAULT_TEST_NAMES
from predpower.simulate import SimConfig, simulate_corpus, write_corpus

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(ROOT, "data", "mini_corpus")
GOLDEN_DIR = os.path.join(DATA_DIR, "golden")

CONFIG = SimConfig(
    n_subjects=5,
    n_texts=2,
    words_per_text=100,
    vocab_size=120,
    beta6=-0.05,
    beta_surprisal=0.10,
    sigma_subj=0.12,
    measure="surprisal",
    test_name="mwt",
    tests=DEFAULT_TEST_NAMES,
    score_source="fitted_bigram",
    skip_prob=0.05,
    seed=20260815,
)

CONFIG_TOML = """\
# Mini-corpus run configuration.  Paths are relative to the repository root.

[paths]
readings = "data/mini_corpus/readings.tsv"
scores = "data/mini_corpus/scores.tsv"
lexicon = "data/mini_corpus/lexicon.tsv"
texts = "data/mini_corpus/texts.tsv"
out_dir = "out/mini_corpus"

[paths.word_scores]
bigram = "data/mini_corpus/word_scores_bigram.tsv"

[cv]
k = 10

[seeds]
folds = 1001
permutation = 2002
bootstrap = 3003

[inference]
n_perm = 1000
n_boot = 1000
alpha = 0.05
"""


def run(argv: list[str]) -> None:
    code = main(argv)
    if code != 0:
        sys.exit(f"command failed ({code}): {' '.join(argv)}")


def h1_into(out_dir: str) -> str:
    run([
        "h1",
        "--config", os.path.join(DATA_DIR, "config.toml"),
        "--out-dir", out_dir,
    ])
    return os.path.join(out_dir, "h1_report.json")


def main_script() -> None:
    os.makedirs(DATA_DIR, exist_ok=True)
    sim = simulate_corpus(CONFIG)
    write_corpus(sim, DATA_DIR)

    # word scores through the same subcommand users run
    with tempfile.TemporaryDirectory() as tmp:
        run(["score", "--texts", os.path.join(DATA_DIR, "texts.tsv"),
             "--out-dir", tmp, "--tag", "bigram"])
        shutil.copy(os.path.join(tmp, "word_scores_bigram.tsv"),
                    os.path.join(DATA_DIR, "word_scores_bigram.tsv"))

    with open(os.path.join(DATA_DIR, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(CONFIG_TOML)

    os.chdir(ROOT)  # config paths are repo-root relative

    # sanity before pinning: two h1 runs must agree byte-for-byte
    with tempfile.TemporaryDirectory() as t1, tempfile.TemporaryDirectory() as t2:
        r1, r2 = h1_into(t1), h1_into(t2)
        if not filecmp.cmp(r1, r2, shallow=False):
            sys.exit("h1 is not deterministic; refusing to pin a golden report")
        with open(r1, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        cells = {(r["test"], r["measure"]): r for r in doc["reports"]}
        planted = cells[("mwt", "surprisal")]
        print("planted cell:", json.dumps({
            "mean_delta_ll": planted["payload"]["mean_delta_ll"],
            "p_value": planted["payload"]["p_value"],
            "significant": planted["significant"],
        }, indent=2))
        if len(doc["reports"]) != len(DEFAULT_TEST_NAMES) * 2:
            sys.exit(f"expected {len(DEFAULT_TEST_NAMES) * 2} report cells")

        os.makedirs(GOLDEN_DIR, exist_ok=True)
        shutil.copy(r1, os.path.join(GOLDEN_DIR, "h1_report.json"))
    print("golden pinned at", os.path.join(GOLDEN_DIR, "h1_report.json"))


if __name__ == "__main__":
    main_script()
