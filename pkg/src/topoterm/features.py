"""Vectorization of neighborhoods and diagrams into the TDA feature families."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtr

from .embeddings import EmbeddingMatrix, MissingEmbedding, neighborhood
from .persistence import DistanceMatrix, PersistenceDiagram, vr_persistence

__all__ = [
    "PersistenceImage",
    "TokenFeatures",
    "CODENSITY_KS",
    "codensity_vector",
    "wasserstein_norm",
    "wasserstein_distance",
    "persistence_image",
    "compute_word_features",
    "assemble_features",
    "save_feature_cache",
    "load_feature_cache",
    "write_contextual_embeddings",
    "read_contextual_embeddings",
]

log = logging.getLogger(__name__)

CODENSITY_KS = (1, 2, 5, 10, 20, 40)

# Persistence-image parameters: per-axis Gaussian variance, grid geometry.
PIMAGE_VARIANCE = 0.0007
H0_LIFETIME_RANGE = (0.0, 1.0)
H0_BINS = 100
H1_BIRTH_RANGE = (0.0, 1.0)
H1_BIRTH_BINS = 100
H1_LIFETIME_RANGE = (0.0, 0.3)
H1_LIFETIME_BINS = 30

WASSERSTEIN_MAX_POINTS = 200

_SQRT2 = float(np.sqrt(2.0))


@dataclass
class PersistenceImage:
    h0_vector: np.ndarray  # (100,) column 0 of the H0 image
    h1_grid: np.ndarray  # (100, 30) birth axis x persistence axis

    @classmethod
    def zeros(cls) -> "PersistenceImage":
        return cls(
            h0_vector=np.zeros(H0_BINS),
            h1_grid=np.zeros((H1_BIRTH_BINS, H1_LIFETIME_BINS)),
        )


@dataclass
class TokenFeatures:
    word: str
    pimage: PersistenceImage
    codensity: np.ndarray  # (6,)
    wasserstein: np.ndarray  # (2,)
    mlm_score: float
    contextual_embedding: np.ndarray | None = None
    missing: bool = False

    @classmethod
    def missing_word(cls, word: str, mlm_score: float = 0.5) -> "TokenFeatures":
        return cls(
            word=word,
            pimage=PersistenceImage.zeros(),
            codensity=np.zeros(len(CODENSITY_KS)),
            wasserstein=np.zeros(2),
            mlm_score=mlm_score,
            missing=True,
        )


def codensity_vector(nb) -> np.ndarray:
    """k-codensities of the neighborhood at its center for k in CODENSITY_KS."""
    max_k = max(CODENSITY_KS)
    if nb.size < max_k + 1:
        raise ValueError(f"neighborhood of size {nb.size} too small for k={max_k}")
    center_row = np.delete(nb.distances[nb.center_index], nb.center_index)
    ordered = np.sort(center_row)
    return np.array([ordered[k - 1] for k in CODENSITY_KS])


def _diagonal_cost(points: np.ndarray) -> np.ndarray:
    return (points[:, 1] - points[:, 0]) / _SQRT2


def wasserstein_norm(diagram: PersistenceDiagram) -> np.ndarray:
    """Order-1 transport cost to the empty diagram per degree: sum (d-b)/sqrt(2)."""
    out = np.zeros(2)
    for slot, pairs in enumerate((diagram.h0, diagram.h1)):
        if pairs:
            pts = np.asarray(pairs, dtype=np.float64)
            out[slot] = float(np.sum(_diagonal_cost(pts)))
    return out


def wasserstein_distance(points1, points2, order: int = 1) -> float:
    """Exact order-1 Wasserstein distance between two finite diagrams.

    Any point may match its diagonal projection instead of a partner;
    Euclidean ground metric; solved as a linear assignment problem.
    """
    if order != 1:
        raise ValueError("only order 1 is supported")
    P = np.atleast_2d(np.asarray(points1, dtype=np.float64)) if len(points1) else np.empty((0, 2))
    Q = np.atleast_2d(np.asarray(points2, dtype=np.float64)) if len(points2) else np.empty((0, 2))
    n, m = P.shape[0], Q.shape[0]
    if n > WASSERSTEIN_MAX_POINTS or m > WASSERSTEIN_MAX_POINTS:
        raise ValueError(
            f"diagram larger than {WASSERSTEIN_MAX_POINTS} points; subsample first"
        )
    if n == 0 and m == 0:
        return 0.0
    dp = _diagonal_cost(P)
    dq = _diagonal_cost(Q)
    big = float(dp.sum() + dq.sum()) + 1.0
    if n and m:
        cross = np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2)
    else:
        cross = np.empty((n, m))
    cost = np.full((n + m, m + n), big)
    cost[:n, :m] = cross
    cost[n:, m:] = 0.0
    for i in range(n):
        cost[i, m + i] = dp[i]
    for j in range(m):
        cost[n + j, j] = dq[j]
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def _axis_integrals(edges: np.ndarray, centers: np.ndarray, std: float) -> np.ndarray:
    """(n_points, n_bins) integrals of unit 1-D Gaussians over the bins."""
    z = (edges[None, :] - centers[:, None]) / std
    cdf = ndtr(z)
    return cdf[:, 1:] - cdf[:, :-1]


def _image_grid(
    points: np.ndarray,
    birth_range: tuple[float, float],
    birth_bins: int,
    life_range: tuple[float, float],
    life_bins: int,
) -> np.ndarray:
    grid = np.zeros((birth_bins, life_bins))
    if points.shape[0] == 0:
        return grid
    births = points[:, 0]
    lifetimes = points[:, 1] - points[:, 0]
    std = float(np.sqrt(PIMAGE_VARIANCE))
    bx = np.linspace(birth_range[0], birth_range[1], birth_bins + 1)
    by = np.linspace(life_range[0], life_range[1], life_bins + 1)
    ix = _axis_integrals(bx, births, std)
    iy = _axis_integrals(by, lifetimes, std)
    # Lifetime-weighted sum of separable per-point pixel masses.
    return np.einsum("p,pi,pj->ij", lifetimes, ix, iy)


def persistence_image(diagram: PersistenceDiagram) -> PersistenceImage:
    """Lifetime-weighted Gaussian surface integrated over the pixel grid.

    H0: birth [0,1] x lifetime [0,1] at 100x100, of which only column 0
    (birth bin [0, 0.01)) is kept.  H1: birth [0,1] x lifetime [0,0.3] at
    100x30.
    """
    h0_pts = np.asarray(diagram.h0, dtype=np.float64) if diagram.h0 else np.empty((0, 2))
    h1_pts = np.asarray(diagram.h1, dtype=np.float64) if diagram.h1 else np.empty((0, 2))
    h0_grid = _image_grid(h0_pts, (0.0, 1.0), H0_BINS, H0_LIFETIME_RANGE, H0_BINS)
    h1_grid = _image_grid(
        h1_pts, H1_BIRTH_RANGE, H1_BIRTH_BINS, H1_LIFETIME_RANGE, H1_LIFETIME_BINS
    )
    return PersistenceImage(h0_vector=h0_grid[0, :].copy(), h1_grid=h1_grid)


def compute_word_features(
    word: str,
    matrix: EmbeddingMatrix,
    aux: EmbeddingMatrix | None = None,
    n: int = 50,
    max_filtration: float = 1.0,
) -> tuple[dict, PersistenceDiagram]:
    """Neighborhood -> diagram -> the cacheable per-word feature record."""
    nb = neighborhood(matrix, word, n=n, aux=aux)
    diagram = vr_persistence(DistanceMatrix(nb.distances), max_filtration=max_filtration)
    image = persistence_image(diagram)
    record = {
        "word": word,
        "pimage_h0": image.h0_vector.tolist(),
        "pimage_h1": image.h1_grid.reshape(-1).tolist(),  # row-major, birth-major
        "codensity": codensity_vector(nb).tolist(),
        "wasserstein": wasserstein_norm(diagram).tolist(),
    }
    return record, diagram


def _features_from_record(word: str, record: dict, mlm_score: float) -> TokenFeatures:
    return TokenFeatures(
        word=word,
        pimage=PersistenceImage(
            h0_vector=np.asarray(record["pimage_h0"], dtype=np.float64),
            h1_grid=np.asarray(record["pimage_h1"], dtype=np.float64).reshape(
                H1_BIRTH_BINS, H1_LIFETIME_BINS
            ),
        ),
        codensity=np.asarray(record["codensity"], dtype=np.float64),
        wasserstein=np.asarray(record["wasserstein"], dtype=np.float64),
        mlm_score=mlm_score,
    )


def assemble_features(
    utterance,
    cache: dict[str, dict],
    mlm_table=None,
    contextual: np.ndarray | None = None,
) -> list[TokenFeatures]:
    """One TokenFeatures per token; per-word TDA features are memoized.

    A token absent from the cache gets the zero-feature `missing` bundle, once
    per word, with a logged warning.
    """
    memo: dict[str, TokenFeatures] = {}
    out: list[TokenFeatures] = []
    for pos, token in enumerate(utterance.tokens):
        feats = memo.get(token)
        if feats is None:
            score = mlm_table.score(token) if mlm_table is not None else 0.5
            record = cache.get(token)
            if record is None:
                log.warning("no TDA features for %r; substituting zeros", token)
                feats = TokenFeatures.missing_word(token, mlm_score=score)
            else:
                try:
                    feats = _features_from_record(token, record, score)
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"corrupt feature record for {token!r}") from exc
            memo[token] = feats
        if contextual is not None:
            feats = TokenFeatures(
                word=feats.word,
                pimage=feats.pimage,
                codensity=feats.codensity,
                wasserstein=feats.wasserstein,
                mlm_score=feats.mlm_score,
                contextual_embedding=np.asarray(contextual[pos], dtype=np.float64),
                missing=feats.missing,
            )
        out.append(feats)
    return out


def save_feature_cache(path, records: dict[str, dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(records):
            fh.write(json.dumps(records[word], ensure_ascii=False) + "\n")


def load_feature_cache(path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                out[record["word"]] = record
    return out


# Contextual-embedding container: magic, dim, then per-utterance records of
# (utt_id, n_tokens, n_tokens x dim float32 little-endian).
_CTXE_MAGIC = b"CTXE"


def write_contextual_embeddings(path, records: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        first = next(iter(records.values())) if records else np.empty((0, 0))
        dim = int(first.shape[1]) if first.size else 0
        fh.write(_CTXE_MAGIC)
        fh.write(struct.pack("<I", dim))
        for utt_id in sorted(records):
            arr = np.ascontiguousarray(records[utt_id], dtype="<f4")
            ident = utt_id.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<H", arr.shape[0]))
            fh.write(arr.tobytes())


def read_contextual_embeddings(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(4) != _CTXE_MAGIC:
            raise ValueError(f"{path}: not a contextual-embedding file")
        (dim,) = struct.unpack("<I", fh.read(4))
        while True:
            head = fh.read(2)
            if not head:
                break
            (id_len,) = struct.unpack("<H", head)
            utt_id = fh.read(id_len).decode("utf-8")
            (n_tokens,) = struct.unpack("<H", fh.read(2))
            buf = fh.read(n_tokens * dim * 4)
            out[utt_id] = np.frombuffer(buf, dtype="<f4").reshape(n_tokens, dim).astype(np.float64)
    return out
