"""Score texts with a pretrained causal LM and emit token-level TSV rows.

Surprisal of a token is -log2 p(token | prefix); the first real token is
conditioned on the model's BOS (EOS when no BOS is defined).  Contextual
entropy is the exact -sum p log2 p over the model's full output vocabulary
at that position, no truncation or sampling.  Log-probabilities come from
float64 logits, so the per-text surprisal sum reproduces the model's own
sequence NLL to high precision.

Output rows carry character offsets into the original text; special tokens
condition the distributions but are never emitted, and whitespace-only
tokens fold their scores into the neighboring row so every emitted span is
nonempty (the pooling precondition).  The output file is written atomically
(temp file + rename) and is deterministic given model, texts, and batch
size.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field

import torch

from .errors import (
    ExtractionError,
    NumericError,
    ParameterError,
    ParseError,
    UnsupportedTokenizerError,
)

LN2 = math.log(2.0)

TOKENS_HEADER = [
    "text_id", "token_index", "token", "char_start", "char_end",
    "surprisal_bits", "entropy_bits",
]


@dataclass(frozen=True)
class TokenRow:
    """One non-special token with its character span and scores in bits."""

    text_id: str
    token_index: int
    token: str
    char_start: int
    char_end: int
    surprisal_bits: float
    entropy_bits: float


@dataclass(frozen=True)
class ExtractionJob:
    """Everything one extraction run needs; log base is fixed to bits."""

    model_id: str
    texts: dict[str, str] = field(default_factory=dict)  # text_id -> raw text
    out_path: str = "tokens.tsv"
    device: str = "cpu"
    batch_size: int = 8

    def __post_init__(self):
        if not self.texts:
            raise ParameterError("texts must be nonempty")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        out_dir = os.path.dirname(os.path.abspath(self.out_path))
        if not os.path.isdir(out_dir) or not os.access(out_dir, os.W_OK):
            raise ParameterError(f"output directory {out_dir!r} is not writable")


def resolve_device(hint: str) -> str:
    """Best-effort device resolution; unavailable accelerators fall back to cpu."""
    if hint.startswith("cuda") and not torch.cuda.is_available():
        return "cpu"
    return hint


def load_model_and_tokenizer(model_id: str, device: str = "cpu"):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModelForCausalLM.from_pretrained(model_id).to(resolve_device(device))
    return model, tokenizer


def _bos_id(tokenizer) -> int:
    bos = tokenizer.bos_token_id
    if bos is None:
        bos = tokenizer.eos_token_id
    if bos is None:
        raise UnsupportedTokenizerError(
            "tokenizer defines neither a BOS nor an EOS token to condition the first token on"
        )
    return int(bos)


def _encode(tokenizer, text_id: str, text: str):
    if not getattr(tokenizer, "is_fast", False):
        raise UnsupportedTokenizerError(
            "tokenizer does not report character offsets; a fast tokenizer is required"
        )
    enc = tokenizer(text, add_special_tokens=False, return_offsets_mapping=True)
    ids = list(enc["input_ids"])
    offsets = [tuple(o) for o in enc["offset_mapping"]]
    if not ids:
        raise ExtractionError(f"text {text_id!r} produced no tokens")
    return ids, offsets


def _display(token: str) -> str:
    # The token column is informational; keep the TSV single-line per row.
    return token.replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def score_texts(
    model,
    tokenizer,
    texts: dict[str, str],
    batch_size: int = 8,
    device: str = "cpu",
) -> dict[str, list[TokenRow]]:
    """Per-text token rows, in the iteration order of ``texts``."""
    device = resolve_device(device)
    model.eval()
    bos = _bos_id(tokenizer)
    special = set(getattr(tokenizer, "all_special_ids", []) or [])
    limit = getattr(getattr(model, "config", None), "max_position_embeddings", None)

    order = list(texts)
    encoded = {tid: _encode(tokenizer, tid, texts[tid]) for tid in order}
    for tid, (ids, _) in encoded.items():
        if limit is not None and len(ids) + 1 > limit:
            raise ExtractionError(
                f"text {tid!r} has {len(ids) + 1} tokens with BOS, exceeds model context {limit}"
            )

    rows: dict[str, list[TokenRow]] = {}
    with torch.no_grad():
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            seqs = [[bos] + encoded[tid][0] for tid in batch]
            longest = max(len(s) for s in seqs)
            # Right padding with any valid id; the attention mask hides it and
            # keeps absolute positions correct for the real prefix.
            input_ids = torch.full((len(batch), longest), bos, dtype=torch.long)
            mask = torch.zeros((len(batch), longest), dtype=torch.long)
            for b, s in enumerate(seqs):
                input_ids[b, : len(s)] = torch.tensor(s, dtype=torch.long)
                mask[b, : len(s)] = 1
            logits = model(
                input_ids=input_ids.to(device), attention_mask=mask.to(device)
            ).logits.double()
            logprobs = torch.log_softmax(logits, dim=-1)
            entropy_bits = -(logprobs.exp() * logprobs).sum(dim=-1) / LN2

            for b, tid in enumerate(batch):
                ids, offsets = encoded[tid]
                tokens = tokenizer.convert_ids_to_tokens(ids)
                out: list[TokenRow] = []
                pend_s = pend_h = 0.0
                pend_tok = ""
                pending = False
                for i, tok_id in enumerate(ids):
                    if tok_id in special:
                        continue
                    # Distribution at position i predicts token i (BOS occupies slot 0).
                    s_bits = -logprobs[b, i, tok_id].item() / LN2
                    h_bits = entropy_bits[b, i].item()
                    if not (math.isfinite(s_bits) and math.isfinite(h_bits)):
                        raise NumericError(f"non-finite score at {tid}:{i}")
                    a, z = offsets[i]
                    if a >= z:
                        # Whitespace-only token (empty trimmed span).  Its
                        # probability mass still belongs to the stream, so fold
                        # it into the next row; the chain rule keeps sums exact
                        # and every emitted span stays nonempty for pooling.
                        pend_s += s_bits
                        pend_h += h_bits
                        pend_tok += tokens[i]
                        pending = True
                        continue
                    out.append(
                        TokenRow(
                            tid, i, _display(pend_tok + tokens[i]), int(a), int(z),
                            pend_s + s_bits, pend_h + h_bits,
                        )
                    )
                    pend_s = pend_h = 0.0
                    pend_tok = ""
                    pending = False
                if pending:
                    if not out:
                        raise ExtractionError(f"text {tid!r} has no tokens with visible characters")
                    last = out[-1]  # trailing whitespace attaches leftward
                    out[-1] = TokenRow(
                        last.text_id, last.token_index, last.token + _display(pend_tok),
                        last.char_start, last.char_end,
                        last.surprisal_bits + pend_s, last.entropy_bits + pend_h,
                    )
                rows[tid] = out
    return rows


def write_tokens_tsv(rows_by_text: dict[str, list[TokenRow]], path: str) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    tmp = f"{path}.tmp"
    try:
        with io.open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write("\t".join(TOKENS_HEADER) + "\n")
            for tid in rows_by_text:
                for r in rows_by_text[tid]:
                    fh.write(
                        f"{r.text_id}\t{r.token_index}\t{r.token}\t{r.char_start}\t"
                        f"{r.char_end}\t{r.surprisal_bits!r}\t{r.entropy_bits!r}\n"
                    )
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def extract_token_scores(job: ExtractionJob, model=None, tokenizer=None) -> str:
    """Run the job and return the output path.

    ``model`` and ``tokenizer`` may be passed together to reuse loaded
    instances; otherwise they are loaded from ``job.model_id``.
    """
    if (model is None) != (tokenizer is None):
        raise ParameterError("model and tokenizer must be supplied together")
    if model is None:
        model, tokenizer = load_model_and_tokenizer(job.model_id, job.device)
    rows = score_texts(model, tokenizer, job.texts, job.batch_size, job.device)
    write_tokens_tsv(rows, job.out_path)
    return job.out_path


def load_texts_tsv(path: str) -> dict[str, str]:
    """Read a two-column texts TSV (text_id, text), preserving file order."""
    texts: dict[str, str] = {}
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["text_id", "text"]:
            raise ParseError(f"bad header {header!r} in {path}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
            tid, text = parts
            if tid in texts:
                raise ParseError(f"{path}:{lineno}: duplicate text_id {tid!r}")
            if not text.strip():
                raise ParseError(f"{path}:{lineno}: text {tid!r} is empty")
            texts[tid] = text
    if not texts:
        raise ParseError(f"{path}: no texts")
    return texts
