"""Static ambient point cloud of vocabulary embeddings and cosine k-NN queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EmbeddingError",
    "MissingEmbedding",
    "EmbeddingMatrix",
    "load_embeddings",
    "save_embeddings",
    "cosine_distance",
    "pairwise_cosine_distances",
    "neighborhood",
    "Neighborhood",
]


class EmbeddingError(ValueError):
    """Malformed embedding file."""


class MissingEmbedding(KeyError):
    """Requested word has no vector in the vocabulary or the supplementary file."""


@dataclass
class EmbeddingMatrix:
    words: list[str]
    vectors: np.ndarray  # (n_words, dim)
    index: dict[str, int]

    @classmethod
    def from_arrays(cls, words: list[str], vectors: np.ndarray) -> "EmbeddingMatrix":
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise EmbeddingError("row count does not match word count")
        if len(set(words)) != len(words):
            dup = next(w for w in words if words.count(w) > 1)
            raise EmbeddingError(f"duplicate word {dup!r}")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0.0):
            bad = words[int(np.argmin(norms))]
            raise EmbeddingError(f"zero-norm vector for {bad!r}")
        return cls(words=list(words), vectors=vectors, index={w: i for i, w in enumerate(words)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        try:
            return self.vectors[self.index[word]]
        except KeyError:
            raise MissingEmbedding(word) from None


def load_embeddings(path) -> EmbeddingMatrix:
    """Load the TSV format: header "DIM<TAB>d", then "word<TAB>v1 v2 ... vd"."""
    words: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) != 2 or header[0] != "DIM":
            raise EmbeddingError(f"{path}: bad header {header!r}")
        try:
            dim = int(header[1])
        except ValueError:
            raise EmbeddingError(f"{path}: non-integer dimension {header[1]!r}") from None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            word, _, payload = line.rstrip("\n").partition("\t")
            try:
                vec = np.array([float(x) for x in payload.split()], dtype=np.float64)
            except ValueError:
                raise EmbeddingError(f"{path}:{lineno}: non-numeric value") from None
            if vec.shape[0] != dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: expected {dim} values, got {vec.shape[0]}"
                )
            if word in seen:
                raise EmbeddingError(f"{path}:{lineno}: duplicate word {word!r}")
            seen.add(word)
            words.append(word)
            rows.append(vec)
    if not rows:
        raise EmbeddingError(f"{path}: no embedding rows")
    return EmbeddingMatrix.from_arrays(words, np.vstack(rows))


def save_embeddings(path, words: list[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"DIM\t{vectors.shape[1]}\n")
        for w, v in zip(words, vectors):
            fh.write(w + "\t" + " ".join(repr(float(x)) for x in v) + "\n")


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), clamped to [0, 2] against round-off."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine distance undefined for zero vector")
    return float(np.clip(1.0 - float(u @ v) / (nu * nv), 0.0, 2.0))


def pairwise_cosine_distances(vectors: np.ndarray) -> np.ndarray:
    """Symmetric cosine-distance matrix with exact zero diagonal."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cosine distance undefined for zero vector")
    unit = vectors / norms
    dist = 1.0 - unit @ unit.T
    np.clip(dist, 0.0, 2.0, out=dist)
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass
class Neighborhood:
    center_word: str
    member_words: list[str]
    distances: np.ndarray  # (n, n) cosine distances
    center_index: int

    @property
    def size(self) -> int:
        return len(self.member_words)


def neighborhood(
    matrix: EmbeddingMatrix,
    word: str,
    n: int = 50,
    aux: EmbeddingMatrix | None = None,
) -> Neighborhood:
    """The n nearest vocabulary words to `word` under cosine distance.

    The center is always a member.  A word absent from the vocabulary is looked
    up in the supplementary `aux` matrix; its neighbours are still drawn from
    the main vocabulary.  Ties break toward the lower vocabulary index.
    """
    if n < 1:
        raise ValueError("neighborhood size must be >= 1")
    if n > len(matrix) + 1:
        raise ValueError(f"n={n} exceeds vocabulary size {len(matrix)}")
    if word in matrix:
        center_vec = matrix.vector(word)
        self_row = matrix.index[word]
    elif aux is not None and word in aux:
        center_vec = aux.vector(word)
        self_row = -1
    else:
        raise MissingEmbedding(word)

    norms = np.linalg.norm(matrix.vectors, axis=1)
    dists = 1.0 - (matrix.vectors @ center_vec) / (norms * np.linalg.norm(center_vec))
    np.clip(dists, 0.0, 2.0, out=dists)
    if self_row >= 0:
        dists[self_row] = np.inf  # the center occupies its own slot
    order = np.argsort(dists, kind="stable")[: n - 1]

    member_words = [word] + [matrix.words[i] for i in order]
    vectors = np.vstack([center_vec[None, :], matrix.vectors[order]])
    return Neighborhood(
        center_word=word,
        member_words=member_words,
        distances=pairwise_cosine_distances(vectors),
        center_index=0,
    )
