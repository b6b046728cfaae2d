import json

import numpy as np
import pytest

from topoterm.embeddings import save_embeddings
from topoterm.persistence import DistanceMatrix


def random_distance_matrix(rng, n: int) -> DistanceMatrix:
    A = rng.uniform(0.0, 1.0, size=(n, n))
    A = (A + A.T) / 2.0
    np.fill_diagonal(A, 0.0)
    return DistanceMatrix(A)


def random_diagram(rng, n_points: int, max_birth: float = 0.8) -> list[tuple[float, float]]:
    out = []
    for _ in range(n_points):
        b = float(rng.uniform(0.0, max_birth))
        out.append((b, b + float(rng.uniform(0.005, 0.2))))
    return out


TERM_WORDS = [f"term{i:02d}" for i in range(6)]
FILLER_WORDS = [f"filler{i:02d}" for i in range(14)]


def write_synthetic_workspace(
    root,
    n_train: int = 24,
    n_test: int = 12,
    vocab_extra: int = 35,
    seed: int = 7,
    neighborhood_n: int = 41,
    kinds: tuple[str, ...] = ("mlm",),
    epochs: int = 2,
    learning_rate: float = 1e-3,
    batch_size: int = 8,
    cache_dir: str = "cache",
    output_dir: str = "output",
) -> str:
    """Build a self-contained corpus + embeddings + MLM probability fixture.

    Term words carry low masked probabilities (high MLM score) so data is
    separable for the mlm feature kind.  Returns the config file path.
    """
    rng = np.random.default_rng(seed)
    words = TERM_WORDS + FILLER_WORDS + [f"pad{i:02d}" for i in range(vocab_extra)]
    vectors = rng.normal(size=(len(words), 8))
    save_embeddings(root / "embeddings.tsv", words, vectors)

    def make_corpus(path, n_utts, id_prefix):
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(n_utts):
                n_tok = int(rng.integers(5, 9))
                tokens = [
                    str(rng.choice(TERM_WORDS if rng.random() < 0.35 else FILLER_WORDS))
                    for _ in range(n_tok)
                ]
                spans = [
                    {"start": j, "end": j, "value": t, "domain": "toy", "slot": "s"}
                    for j, t in enumerate(tokens)
                    if t.startswith("term")
                ]
                fh.write(
                    json.dumps(
                        {
                            "utt_id": f"{id_prefix}{i:04d}",
                            "dialogue_id": f"d{i:04d}",
                            "speaker": "user" if i % 5 else "system",
                            "tokens": tokens,
                            "spans": spans,
                        }
                    )
                    + "\n"
                )

    make_corpus(root / "train.jsonl", n_train, "tr")
    make_corpus(root / "test.jsonl", n_test, "te")

    with open(root / "probs.jsonl", "w", encoding="utf-8") as fh:
        for path, prefix, n_utts in (("train.jsonl", "tr", n_train), ("test.jsonl", "te", n_test)):
            for line in open(root / path, encoding="utf-8"):
                obj = json.loads(line)
                probs = [0.02 if t.startswith("term") else 0.9 for t in obj["tokens"]]
                fh.write(
                    json.dumps(
                        {"utt_id": obj["utt_id"], "tokens": obj["tokens"], "p_mask": probs}
                    )
                    + "\n"
                )

    config = f"""
seed = 13
deterministic = true

[paths]
train_corpus = "{root / 'train.jsonl'}"
test_corpus = "{root / 'test.jsonl'}"
embeddings = "{root / 'embeddings.tsv'}"
mlm_probabilities = "{root / 'probs.jsonl'}"
cache_dir = "{root / cache_dir}"
output_dir = "{root / output_dir}"

[neighborhood]
n = {neighborhood_n}
max_filtration = 1.0

[models]
kinds = {json.dumps(list(kinds))}

[training]
learning_rate = {learning_rate}
epochs = {epochs}
batch_size = {batch_size}
early_stop_delta = 0.005
"""
    (root / "pipeline.toml").write_text(config, encoding="utf-8")
    return str(root / "pipeline.toml")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
