"""Command line entry point: extract --model ID --texts texts.tsv --out tokens.tsv"""

from __future__ import annotations

import argparse
import json
import sys

from .core import ExtractionJob, extract_token_scores, load_texts_tsv
from .errors import ExtractionError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="extract",
        description="dump per-token surprisal and full-vocabulary entropy (bits) "
        "from a causal LM into a tokens.tsv exchange file",
    )
    p.add_argument("--model", required=True, help="model identifier or local path")
    p.add_argument("--texts", required=True, help="texts.tsv (text_id, text)")
    p.add_argument("--out", required=True, help="output tokens.tsv path")
    p.add_argument("--device", default="cpu", help="device hint (default cpu)")
    p.add_argument("--batch-size", type=int, default=8, help="texts per forward pass")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        texts = load_texts_tsv(args.texts)
        job = ExtractionJob(
            model_id=args.model,
            texts=texts,
            out_path=args.out,
            device=args.device,
            batch_size=args.batch_size,
        )
        out = extract_token_scores(job)
    except (ExtractionError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return getattr(exc, "exit_code", 1)
    print(json.dumps({"model": args.model, "n_texts": len(texts), "tokens": out}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
