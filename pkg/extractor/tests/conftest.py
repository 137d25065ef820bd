"""Session fixtures: a tiny causal LM built offline (no hub access needed).

The model is a 2-layer GPT-2 with random seeded weights over a byte-level
BPE vocabulary trained on the corpus below.  Random weights are fine: every
contract under test (NLL identity, entropy bounds, offsets, determinism) is
architecture-level, not about LM quality.
"""

import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")

import pytest
import torch

CORPUS = [
    "the small bird sang in the old garden",
    "a reader follows every word with care",
    "rivers of text flow past tired eyes",
    "some words surprise us more than others",
    "the model assigns a probability to each token",
    "reading times grow when the next word is unexpected",
    "short common words are skipped more often",
    "every sentence ends sooner or later",
]


def build_tiny_causal_lm(out_dir: str, vocab_size: int = 384, seed: int = 0) -> None:
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers, processors, trainers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    # trim_offsets keeps leading-space bytes out of the reported spans.
    tok.post_processor = processors.ByteLevel(trim_offsets=True)
    trainer = trainers.BpeTrainer(
        vocab_size=vocab_size,
        special_tokens=["<|endoftext|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator(CORPUS, trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, bos_token="<|endoftext|>", eos_token="<|endoftext|>"
    )
    fast.save_pretrained(out_dir)

    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=tok.get_vocab_size(),
        n_positions=128,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=fast.bos_token_id,
        eos_token_id=fast.eos_token_id,
    )
    GPT2LMHeadModel(config).save_pretrained(out_dir)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    d = tmp_path_factory.mktemp("tinylm")
    build_tiny_causal_lm(str(d))
    return str(d)


@pytest.fixture(scope="session")
def tiny_model(tiny_model_dir):
    from lmextract import load_model_and_tokenizer

    return load_model_and_tokenizer(tiny_model_dir)
