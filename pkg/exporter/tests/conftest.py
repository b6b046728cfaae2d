import hashlib
import json

import numpy as np
import pytest


class FakeEmbeddingBackend:
    """Deterministic word -> vector map with no model behind it."""

    def __init__(self, dim: int = 384) -> None:
        self.model_id = f"fake-embedding-{dim}d"
        self.dim = dim
        self.calls = 0

    def encode(self, words):
        self.calls += 1
        out = np.empty((len(words), self.dim))
        for row, word in enumerate(words):
            seed = int.from_bytes(hashlib.sha256(word.encode()).digest()[:8], "big")
            out[row] = np.random.default_rng(seed).normal(size=self.dim)
        return out


class FakeMlmBackend:
    """Deterministic per-word probabilities in (0, 1)."""

    model_id = "fake-mlm"

    def word_probabilities(self, tokens):
        return [
            (int.from_bytes(hashlib.sha256(t.encode()).digest()[:4], "big") % 1000) / 1000.0
            for t in tokens
        ]


class FakeContextualBackend:
    def __init__(self, dim: int = 768) -> None:
        self.model_id = f"fake-contextual-{dim}d"
        self.dim = dim

    def token_embeddings(self, tokens):
        out = np.empty((len(tokens), self.dim))
        for row, token in enumerate(tokens):
            seed = int.from_bytes(hashlib.sha256(token.encode()).digest()[8:16], "big")
            out[row] = np.random.default_rng(seed).normal(size=self.dim)
        return out


@pytest.fixture
def corpus_file(tmp_path):
    utts = [
        {
            "utt_id": "u0",
            "dialogue_id": "d0",
            "speaker": "user",
            "tokens": ["i", "want", "cheap", "food"],
            "spans": [{"start": 2, "end": 2, "value": "cheap", "domain": "food", "slot": "price"}],
        },
        {
            "utt_id": "u1",
            "dialogue_id": "d0",
            "speaker": "system",
            "tokens": ["sure", "thing"],
            "spans": [],
        },
        {
            "utt_id": "u2",
            "dialogue_id": "d1",
            "speaker": "user",
            "tokens": ["book"],
            "spans": [],
        },
    ]
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(u) for u in utts) + "\n")
    return path


@pytest.fixture
def vocab_file(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("cheap\nfood\nbook\n")
    return path
