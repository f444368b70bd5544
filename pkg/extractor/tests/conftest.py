"""Builds a tiny local GPT-2-style checkpoint so tests run fully offline."""

import json

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2Model, PreTrainedTokenizerFast

VOCAB_WORDS = [
    "[UNK]", "[PAD]", "the", "sum", "of", "and", "is", "answer", "problem",
    "solve", "for", "x", "y", "a", "b", "plus", "minus", "times", "equals",
    "what", "area", "triangle", "circle",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
]

HIDDEN_SIZE = 32
NUM_LAYERS = 4


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny"
    vocab = {w: i for i, w in enumerate(VOCAB_WORDS)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    tokenizer = PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="[UNK]",
                                        pad_token="[PAD]")

    torch.manual_seed(1234)
    config = GPT2Config(vocab_size=len(vocab), n_positions=64,
                        n_embd=HIDDEN_SIZE, n_layer=NUM_LAYERS, n_head=4,
                        bos_token_id=0, eos_token_id=0)
    GPT2Model(config).save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


@pytest.fixture
def text_files(tmp_path):
    demos = [
        {"id": "d1", "problem": "the sum of 3 and 4", "solution": "the answer is 7"},
        {"id": "d2", "problem": "solve for x x plus 2 equals 5",
         "solution": "x equals 3"},
        {"id": "d3", "problem": "area of a triangle with 6 and 8",
         "solution": "the answer is 24"},
    ]
    tests = [{"id": "t1", "problem": "the sum of 2 and 9"}]
    demos_path = tmp_path / "demos.jsonl"
    tests_path = tmp_path / "tests.jsonl"
    demos_path.write_text("".join(json.dumps(r) + "\n" for r in demos))
    tests_path.write_text("".join(json.dumps(r) + "\n" for r in tests))
    return demos_path, tests_path
