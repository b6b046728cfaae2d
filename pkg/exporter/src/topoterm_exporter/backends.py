"""Model backends: the only place pretrained models are loaded.

Each backend is a tiny protocol object so the export logic (and its tests)
never needs the real models.  The default implementations lazily import
sentence-transformers / transformers and translate load failures into
`BackendError` with an actionable message.
"""

from __future__ import annotations

import math
from typing import Protocol

import numpy as np

DEFAULT_EMBEDDING_MODEL = "sentence-transformers/all-MiniLM-L6-v2"
DEFAULT_MLM_MODEL = "roberta-base"


class BackendError(RuntimeError):
    pass


class EmbeddingBackend(Protocol):
    model_id: str
    dim: int

    def encode(self, words: list[str]) -> np.ndarray:
        """One dense vector per word, shape (len(words), dim)."""
        ...


class MlmBackend(Protocol):
    model_id: str

    def word_probabilities(self, tokens: list[str]) -> list[float]:
        """Per-word probability of the original word at a masked position.

        All subtokens of a word are masked jointly; multi-subtoken words
        report the geometric mean of their subtoken probabilities.
        """
        ...


class ContextualBackend(Protocol):
    model_id: str
    dim: int

    def token_embeddings(self, tokens: list[str]) -> np.ndarray:
        """Frozen last-layer vector per word (subwords mean-pooled), (n, dim)."""
        ...


def geometric_mean(probs: list[float]) -> float:
    if not probs:
        raise ValueError("geometric mean of no probabilities")
    return math.exp(sum(math.log(max(p, 1e-300)) for p in probs) / len(probs))


class SentenceEmbeddingBackend:
    """384-d sentence-embedding vectors, one word per input."""

    def __init__(self, model_id: str = DEFAULT_EMBEDDING_MODEL, device: str = "cpu") -> None:
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BackendError(
                "sentence-transformers is not installed; "
                "pip install 'topoterm-exporter[models]'"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id, device=device)
        except Exception as exc:
            raise BackendError(f"cannot load embedding model {model_id!r}: {exc}") from exc
        self.model_id = model_id
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, words: list[str]) -> np.ndarray:
        return np.asarray(self._model.encode(words, show_progress_bar=False), dtype=np.float64)


class MaskedLmBackend:
    """Joint-mask probabilities from a masked language model."""

    def __init__(self, model_id: str = DEFAULT_MLM_MODEL, device: str = "cpu") -> None:
        try:
            import torch
            from transformers import AutoModelForMaskedLM, AutoTokenizer
        except ImportError as exc:
            raise BackendError(
                "transformers is not installed; pip install 'topoterm-exporter[models]'"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModelForMaskedLM.from_pretrained(model_id).to(device).eval()
        except Exception as exc:
            raise BackendError(f"cannot load MLM model {model_id!r}: {exc}") from exc
        self._torch = torch
        self._device = device
        self.model_id = model_id

    def word_probabilities(self, tokens: list[str]) -> list[float]:
        torch = self._torch
        tok = self._tokenizer
        enc = tok(tokens, is_split_into_words=True, return_tensors="pt", truncation=True)
        word_ids = enc.word_ids()
        input_ids = enc["input_ids"].to(self._device)
        out: list[float] = []
        with torch.no_grad():
            for word_index in range(len(tokens)):
                positions = [i for i, w in enumerate(word_ids) if w == word_index]
                if not positions:  # truncated away by the context limit
                    out.append(0.0)
                    continue
                masked = input_ids.clone()
                originals = [int(masked[0, i]) for i in positions]
                for i in positions:
                    masked[0, i] = tok.mask_token_id
                logits = self._model(masked).logits[0]
                probs = [
                    float(torch.softmax(logits[i], dim=-1)[orig])
                    for i, orig in zip(positions, originals)
                ]
                out.append(geometric_mean(probs))
        return out


class ContextualEmbeddingBackend:
    """Frozen last-layer token states, mean-pooled over subwords."""

    def __init__(self, model_id: str = DEFAULT_MLM_MODEL, device: str = "cpu") -> None:
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise BackendError(
                "transformers is not installed; pip install 'topoterm-exporter[models]'"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModel.from_pretrained(model_id).to(device).eval()
        except Exception as exc:
            raise BackendError(f"cannot load encoder model {model_id!r}: {exc}") from exc
        self._torch = torch
        self._device = device
        self.model_id = model_id
        self.dim = int(self._model.config.hidden_size)

    def token_embeddings(self, tokens: list[str]) -> np.ndarray:
        torch = self._torch
        enc = self._tokenizer(
            tokens, is_split_into_words=True, return_tensors="pt", truncation=True
        )
        word_ids = enc.word_ids()
        with torch.no_grad():
            states = self._model(enc["input_ids"].to(self._device)).last_hidden_state[0]
        out = np.zeros((len(tokens), self.dim))
        for word_index in range(len(tokens)):
            positions = [i for i, w in enumerate(word_ids) if w == word_index]
            if positions:
                out[word_index] = states[positions].mean(dim=0).cpu().numpy()
        return out
