"""Additive-smoothed bigram language model over whitespace words.

Provides true per-word surprisal and exact full-vocabulary contextual entropy
(both in bits) so the whole pipeline can run without any external LM.  The
vocabulary is the set of observed word types plus reserved EOS and UNK symbols;
the begin-of-sentence marker is a context only and is never predicted, so it
does not enter the smoothing denominator:

    p(w | v) = (c(v, w) + alpha) / (c(v) + alpha * |vocab|)

Unseen test words map to UNK; training-time singletons are kept as-is.
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ParseError

EOS = "<eos>"
UNK = "<unk>"
BOS = "<bos>"  # context marker only, never part of the vocabulary

_DUMP_VERSION = "bigram-counts-v1"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered word types with reserved EOS and UNK symbols appended last."""

    symbols: tuple[str, ...]
    index: dict[str, int] = field(repr=False, default_factory=dict)

    @classmethod
    def from_types(cls, types) -> "Vocabulary":
        ordered = tuple(sorted(set(types))) + (EOS, UNK)
        return cls(symbols=ordered, index={s: i for i, s in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, sym: str) -> bool:
        return sym in self.index


@dataclass(frozen=True)
class BigramLM:
    """Trained bigram counts plus the smoothing constant.

    ``counts`` maps context symbol -> Counter of next symbols; contexts include
    BOS.  ``context_totals`` caches c(v).  Immutable after training.
    """

    vocab: Vocabulary
    alpha: float
    counts: dict[str, Counter]
    context_totals: dict[str, int]

    def prob(self, word: str, context: str) -> float:
        """Smoothed p(word | context); both mapped to UNK if out of vocabulary."""
        w = word if word in self.vocab else UNK
        v = context if (context == BOS or context in self.vocab) else UNK
        c_vw = self.counts.get(v, _EMPTY)[w]
        c_v = self.context_totals.get(v, 0)
        return (c_vw + self.alpha) / (c_v + self.alpha * len(self.vocab))

    def row(self, context: str) -> np.ndarray:
        """Full smoothed next-symbol distribution for one context."""
        v = context if (context == BOS or context in self.vocab) else UNK
        c = np.zeros(len(self.vocab))
        for w, n in self.counts.get(v, _EMPTY).items():
            c[self.vocab.index[w]] = n
        return (c + self.alpha) / (self.context_totals.get(v, 0) + self.alpha * len(self.vocab))


_EMPTY: Counter = Counter()


def _words(sentence) -> list[str]:
    """A sentence is either a whitespace-joined string or a word sequence."""
    if isinstance(sentence, str):
        return sentence.split()
    return list(sentence)


def train_bigram(sentences, alpha: float = 0.1) -> BigramLM:
    """Count bigram transitions over word sequences.

    Each sentence contributes a BOS context and a final EOS transition.
    """
    if not (alpha > 0):
        raise ParameterError(f"smoothing alpha must be > 0, got {alpha}")
    sentences = [_words(s) for s in sentences]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise ParameterError("empty corpus: need at least one nonempty sentence")

    types: set[str] = set()
    for sent in sentences:
        for w in sent:
            if w in (EOS, UNK, BOS):
                raise ParameterError(f"corpus contains reserved symbol {w!r}")
            types.add(w)
    vocab = Vocabulary.from_types(types)

    counts: dict[str, Counter] = {}
    for sent in sentences:
        prev = BOS
        for w in list(sent) + [EOS]:
            counts.setdefault(prev, Counter())[w] += 1
            prev = w
    totals = {v: sum(c.values()) for v, c in counts.items()}
    return BigramLM(vocab=vocab, alpha=alpha, counts=counts, context_totals=totals)


def score_tokens(lm: BigramLM, sentence) -> list[tuple[float, float]]:
    """Per-word (surprisal_bits, entropy_bits) for one sentence.

    Both measures condition on the previous word (BOS for the first); entropy
    is the exact sum over the full vocabulary.  The trailing EOS transition is
    not emitted.
    """
    words = _words(sentence)
    if not words:
        raise ParameterError("cannot score an empty sentence")
    out = []
    prev = BOS
    for w in words:
        out.append((surprisal_bits(lm, w, prev), entropy_bits(lm, prev)))
        prev = w if w in lm.vocab else UNK
    return out


def surprisal_bits(lm: BigramLM, word: str, context: str) -> float:
    return -math.log2(lm.prob(word, context))


def entropy_bits(lm: BigramLM, context: str) -> float:
    p = lm.row(context)
    return float(-(p * np.log2(p)).sum())


def save_counts(lm: BigramLM, path: str) -> None:
    """Versioned TSV dump: alpha, vocabulary, then (context, word, count) triples."""
    with io.open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"#version\t{_DUMP_VERSION}\n")
        fh.write(f"#alpha\t{lm.alpha!r}\n")
        fh.write("#vocab\t" + "\t".join(lm.vocab.symbols) + "\n")
        for v in sorted(lm.counts):
            for w in sorted(lm.counts[v]):
                fh.write(f"{v}\t{w}\t{lm.counts[v][w]}\n")


def load_counts(path: str) -> BigramLM:
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#version\t"):
        raise ParseError("missing version line", path=path, line=1)
    version = lines[0].split("\t", 1)[1]
    if version != _DUMP_VERSION:
        raise ParseError(f"unsupported dump version {version!r}", path=path, line=1)
    if len(lines) < 3 or not lines[1].startswith("#alpha\t") or not lines[2].startswith("#vocab\t"):
        raise ParseError("missing alpha/vocab header lines", path=path)
    alpha = float(lines[1].split("\t", 1)[1])
    symbols = tuple(lines[2].split("\t")[1:])
    vocab = Vocabulary(symbols=symbols, index={s: i for i, s in enumerate(symbols)})
    counts: dict[str, Counter] = {}
    for lineno, line in enumerate(lines[3:], start=4):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 columns, got {len(parts)}", path=path, line=lineno)
        v, w, n = parts
        counts.setdefault(v, Counter())[w] = int(n)
    totals = {v: sum(c.values()) for v, c in counts.items()}
    return BigramLM(vocab=vocab, alpha=alpha, counts=counts, context_totals=totals)
