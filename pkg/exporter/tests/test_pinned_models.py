"""Reference-value checks against the pinned pretrained models.

These tests exercise the real backends and therefore need the pinned models
(downloadable network access or a local cache) — they skip, with the reason,
when the models cannot be loaded.  The codensity / Wasserstein reference
values additionally need the full 50k-word vocabulary export, whose path is
supplied via the TOPOTERM_VOCAB_50K environment variable.
"""

import json
import os

import numpy as np
import pytest

from topoterm.embeddings import load_embeddings, neighborhood
from topoterm.features import codensity_vector, compute_word_features
from topoterm.mlm import aggregate_mlm_scores, iter_probability_records

from topoterm_exporter.backends import BackendError

MINI_CORPUS = [
    ("m0", ["i", "am", "looking", "for", "a", "cheap", "restaurant", "in", "the", "centre"]),
    ("m1", ["find", "me", "a", "cheap", "place", "to", "eat", "in", "the", "north"]),
    ("m2", ["is", "there", "a", "restaurant", "serving", "chinese", "food", "in", "the", "west"]),
    ("m3", ["i", "want", "a", "moderately", "priced", "restaurant", "in", "the", "city", "centre"]),
    ("m4", ["can", "you", "book", "a", "table", "at", "a", "cheap", "restaurant", "for", "me"]),
    ("m5", ["what", "is", "the", "address", "of", "the", "restaurant", "you", "found"]),
]


def write_mini_corpus(tmp_path):
    path = tmp_path / "mini.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id, tokens in MINI_CORPUS:
            fh.write(
                json.dumps(
                    {
                        "utt_id": utt_id,
                        "dialogue_id": utt_id,
                        "speaker": "user",
                        "tokens": tokens,
                        "spans": [],
                    }
                )
                + "\n"
            )
    return path


@pytest.fixture(scope="module")
def mlm_backend():
    backends = pytest.importorskip("topoterm_exporter.backends")
    try:
        return backends.MaskedLmBackend()
    except BackendError as exc:
        pytest.skip(f"pinned MLM model unavailable: {exc}")


@pytest.fixture(scope="module")
def vocab_embeddings():
    path = os.environ.get("TOPOTERM_VOCAB_50K")
    if not path:
        pytest.skip("TOPOTERM_VOCAB_50K not set; full-vocabulary export unavailable")
    return load_embeddings(path)


def test_mlm_score_ordering(tmp_path, mlm_backend):
    """Appendix-direction check: cheap > restaurant > the."""
    from topoterm_exporter.export import export_mlm_probabilities

    corpus = write_mini_corpus(tmp_path)
    out = tmp_path / "probs.jsonl"
    export_mlm_probabilities(corpus, out, mlm_backend)
    table = aggregate_mlm_scores(iter_probability_records(out))
    assert table.score("cheap") > table.score("restaurant") > table.score("the")


def test_codensity_reference_values(vocab_embeddings):
    nb = neighborhood(vocab_embeddings, "the", n=50)
    reference = np.array([0.099, 0.129, 0.213, 0.275, 0.318, 0.349])
    assert np.allclose(codensity_vector(nb), reference, atol=1e-3)


def test_wasserstein_reference_values(vocab_embeddings):
    record, _ = compute_word_features("can", vocab_embeddings, n=50)
    assert np.allclose(record["wasserstein"], [7.712, 0.311], atol=1e-2)
