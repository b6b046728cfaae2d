"""The three export operations, each atomic and manifest-stamped.

Outputs are written to a temporary file in the destination directory and
renamed into place, so a crashed run never leaves a truncated export.  A JSON
sidecar "<out>.manifest.json" records the model identity and the SHA-256 of
every input and of the export itself.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from topoterm.corpus import load_corpus
from topoterm.embeddings import save_embeddings
from topoterm.features import write_contextual_embeddings

from .backends import ContextualBackend, EmbeddingBackend, MlmBackend

__all__ = [
    "export_vocab_embeddings",
    "export_mlm_probabilities",
    "export_contextual_embeddings",
    "load_vocab_file",
    "write_manifest",
]

log = logging.getLogger(__name__)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic(out_path, write_fn) -> None:
    out_path = Path(out_path)
    fd, tmp = tempfile.mkstemp(dir=out_path.parent, prefix=out_path.name + ".", suffix=".tmp")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, out_path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_manifest(out_path, model_id: str, inputs: dict[str, str]) -> Path:
    manifest = {
        "model_id": model_id,
        "inputs": {name: _sha256(path) for name, path in inputs.items()},
        "output_sha256": _sha256(out_path),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_vocab_file(path) -> list[str]:
    """One word per line; blank lines and duplicates rejected."""
    words: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            word = line.strip()
            if not word:
                continue
            if word in seen:
                raise ValueError(f"{path}:{lineno}: duplicate vocabulary word {word!r}")
            seen.add(word)
            words.append(word)
    if not words:
        raise ValueError(f"{path}: empty vocabulary")
    return words


def export_vocab_embeddings(
    vocab_file, out_path, backend: EmbeddingBackend, batch_size: int = 256
) -> Path:
    """One dense vector per vocabulary word, in the embedding TSV format."""
    words = load_vocab_file(vocab_file)
    chunks = [
        backend.encode(words[i : i + batch_size]) for i in range(0, len(words), batch_size)
    ]
    vectors = np.vstack(chunks)
    _atomic(out_path, lambda tmp: save_embeddings(tmp, words, vectors))
    log.info("exported %d x %d embeddings to %s", len(words), vectors.shape[1], out_path)
    return write_manifest(out_path, backend.model_id, {"vocab": vocab_file})


def export_mlm_probabilities(corpus_jsonl, out_path, backend: MlmBackend) -> Path:
    """Per-token masked probabilities for every user utterance, as JSONL."""
    utts = [u for u in load_corpus(corpus_jsonl) if u.speaker == "user"]

    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            for u in utts:
                probs = backend.word_probabilities(u.tokens)
                if len(probs) != len(u.tokens):
                    raise ValueError(f"{u.utt_id}: backend returned {len(probs)} probabilities")
                for p in probs:
                    if not 0.0 <= p <= 1.0:
                        raise ValueError(f"{u.utt_id}: probability {p} outside [0, 1]")
                fh.write(
                    json.dumps(
                        {"utt_id": u.utt_id, "tokens": u.tokens, "p_mask": probs},
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    _atomic(out_path, write)
    log.info("exported masked probabilities for %d utterances to %s", len(utts), out_path)
    return write_manifest(out_path, backend.model_id, {"corpus": corpus_jsonl})


def export_contextual_embeddings(corpus_jsonl, out_path, backend: ContextualBackend) -> Path:
    """Frozen per-token encoder states for every utterance, binary container."""
    records: dict[str, np.ndarray] = {}
    for u in load_corpus(corpus_jsonl):
        arr = np.asarray(backend.token_embeddings(u.tokens), dtype=np.float32)
        if arr.shape != (len(u.tokens), backend.dim):
            raise ValueError(f"{u.utt_id}: backend returned shape {arr.shape}")
        records[u.utt_id] = arr
    _atomic(out_path, lambda tmp: write_contextual_embeddings(tmp, records))
    log.info("exported contextual embeddings for %d utterances to %s", len(records), out_path)
    return write_manifest(out_path, backend.model_id, {"corpus": corpus_jsonl})
