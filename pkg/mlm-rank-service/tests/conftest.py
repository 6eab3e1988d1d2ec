"""A tiny seeded masked LM so tests never touch the network.

The fixture writes a full model directory (weights, config, tokenizer)
and loads it through the same path production uses, so ``load`` is
exercised for real.
"""

from __future__ import annotations

import pytest
import torch
from fastapi.testclient import TestClient
from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

from mlm_rank_service import create_app
from mlm_rank_service.scoring import MaskedRanker

# Plain lowercase words double as normalized entity keys on the wire.
WORDS = [
    "roll", "bank", "loop", "slip", "clinch", "maneuver", "flight",
    "barrel", "snap", "vertical", "turn", "dive", "spin", "stall",
    "chandelle", "knife", "spoon", "fork", "table", "fish", "butter",
    "steak", "cutlery", "ladle", "teaspoon", "tool", "blade", "handle",
]

VOCAB = (
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    + ["a", "an", "is", "of", "kind", "type", "example", "such", "as", "."]
    + WORDS
    + ["##s", "##ing"]
)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    directory = tmp_path_factory.mktemp("tiny-mlm")
    (directory / "vocab.txt").write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast.from_pretrained(str(directory))
    tokenizer.save_pretrained(str(directory))
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=48,
    )
    torch.manual_seed(99)
    BertForMaskedLM(config).save_pretrained(str(directory))
    return str(directory)


@pytest.fixture(scope="session")
def ranker(model_dir) -> MaskedRanker:
    return MaskedRanker.load(model_dir, device="cpu")


@pytest.fixture(scope="session")
def client(ranker) -> TestClient:
    return TestClient(create_app(ranker))
