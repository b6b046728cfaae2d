"""Independent reference implementations used only for cross-checking.

Nothing here shares code with the production paths: the MST oracle is Prim's
algorithm (the production H0 sweep is Kruskal/union-find), the Wasserstein
oracle enumerates matchings, and the image oracle integrates the Gaussian
surface numerically instead of using CDF differences.
"""

from __future__ import annotations

import math
from itertools import combinations, permutations

import numpy as np

from .features import PIMAGE_VARIANCE

__all__ = [
    "prim_mst_weights",
    "wasserstein_matching_bruteforce",
    "image_quadrature",
]


def prim_mst_weights(D: np.ndarray, max_filtration: float) -> list[float]:
    """Minimum-spanning-forest edge weights <= max_filtration, ascending."""
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    unvisited = set(range(n))
    weights: list[float] = []
    while unvisited:
        root = min(unvisited)
        tree = {root}
        unvisited.remove(root)
        while True:
            best = None
            for u in tree:
                for v in unvisited:
                    if D[u, v] <= max_filtration and (best is None or D[u, v] < best[0]):
                        best = (D[u, v], v)
            if best is None:
                break
            weights.append(float(best[0]))
            tree.add(best[1])
            unvisited.remove(best[1])
    return sorted(weights)


def _diag_cost(p) -> float:
    return (p[1] - p[0]) / math.sqrt(2.0)


def wasserstein_matching_bruteforce(points1, points2) -> float:
    """Order-1 Wasserstein distance by exhaustive enumeration of matchings.

    Every subset of one diagram is injectively matched into the other; all
    unmatched points pay their diagonal-projection cost.  Factorial blowup:
    intended for diagrams of at most ~6 points.
    """
    P = [tuple(map(float, p)) for p in points1]
    Q = [tuple(map(float, q)) for q in points2]
    best = math.inf
    all_diag = sum(_diag_cost(p) for p in P) + sum(_diag_cost(q) for q in Q)
    best = all_diag
    for r in range(1, min(len(P), len(Q)) + 1):
        for p_subset in combinations(range(len(P)), r):
            for q_perm in permutations(range(len(Q)), r):
                cost = 0.0
                for pi, qi in zip(p_subset, q_perm):
                    cost += math.dist(P[pi], Q[qi])
                matched_p = set(p_subset)
                matched_q = set(q_perm)
                cost += sum(_diag_cost(p) for i, p in enumerate(P) if i not in matched_p)
                cost += sum(_diag_cost(q) for j, q in enumerate(Q) if j not in matched_q)
                best = min(best, cost)
    return best


def image_quadrature(
    points,
    birth_range: tuple[float, float],
    birth_bins: int,
    life_range: tuple[float, float],
    life_bins: int,
    nodes: int = 17,
) -> np.ndarray:
    """Composite-Simpson integration of the lifetime-weighted Gaussian surface.

    points are (birth, death) pairs; the surface lives in (birth, lifetime)
    coordinates with per-axis variance PIMAGE_VARIANCE.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    births = pts[:, 0]
    lifetimes = pts[:, 1] - pts[:, 0]
    var = PIMAGE_VARIANCE
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)

    wts = np.ones(nodes)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    wts /= 3.0

    def axis_quadrature(edges: np.ndarray, centers: np.ndarray) -> np.ndarray:
        """(n_points, n_bins) Simpson integrals of the 1-D Gaussian factors."""
        out = np.zeros((centers.shape[0], edges.shape[0] - 1))
        for j in range(edges.shape[0] - 1):
            xs = np.linspace(edges[j], edges[j + 1], nodes)
            h = (edges[j + 1] - edges[j]) / (nodes - 1)
            values = norm * np.exp(-((xs[None, :] - centers[:, None]) ** 2) / (2.0 * var))
            out[:, j] = h * (values @ wts)
        return out

    bx = np.linspace(birth_range[0], birth_range[1], birth_bins + 1)
    by = np.linspace(life_range[0], life_range[1], life_bins + 1)
    # The 2-D Gaussians are axis-aligned, so the tensor-product Simpson rule
    # over each pixel factors into the two 1-D quadratures.
    qx = axis_quadrature(bx, births)
    qy = axis_quadrature(by, lifetimes)
    return np.einsum("p,pi,pj->ij", lifetimes, qx, qy)
