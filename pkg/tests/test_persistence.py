import math

import numpy as np
import pytest

from topoterm.oracles import prim_mst_weights
from topoterm.persistence import (
    DistanceMatrix,
    PersistenceDiagram,
    brute_force_persistence,
    h0_via_mst,
    load_diagrams,
    save_diagrams,
    vr_persistence,
)

from conftest import random_distance_matrix


def euclidean_matrix(points) -> DistanceMatrix:
    pts = np.asarray(points, dtype=float)
    return DistanceMatrix(np.linalg.norm(pts[:, None] - pts[None, :], axis=2))


def diagrams_equal(a: PersistenceDiagram, b: PersistenceDiagram) -> bool:
    a, b = a.sorted(), b.sorted()
    return (
        [(float(x), float(y)) for x, y in a.h0] == [(float(x), float(y)) for x, y in b.h0]
        and [(float(x), float(y)) for x, y in a.h1] == [(float(x), float(y)) for x, y in b.h1]
        and a.essential_h0 == b.essential_h0
    )


class TestDistanceMatrix:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            DistanceMatrix([[0.0, 1.0], [2.0, 0.0]])

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            DistanceMatrix([[1.0, 0.5], [0.5, 0.0]])

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            DistanceMatrix([[0.0, -0.5], [-0.5, 0.0]])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            DistanceMatrix(np.zeros((0, 0)))


class TestFixtures:
    def test_two_points(self):
        D = DistanceMatrix([[0.0, 0.4], [0.4, 0.0]])
        d = vr_persistence(D, max_filtration=1.0)
        assert d.h0 == [(0.0, 0.4)]
        assert d.h1 == []
        assert d.essential_h0 == 1

    def test_single_point(self):
        D = DistanceMatrix([[0.0]])
        d = vr_persistence(D, max_filtration=1.0)
        assert d.h0 == [] and d.h1 == [] and d.essential_h0 == 1
        b = brute_force_persistence(D)
        assert b.h0 == [] and b.h1 == [] and b.essential_h0 == 1

    def test_unit_square(self):
        D = euclidean_matrix([[0, 0], [1, 0], [1, 1], [0, 1]])
        d = vr_persistence(D, max_filtration=2.0)
        assert len(d.h1) == 1
        (birth, death) = d.h1[0]
        assert birth == pytest.approx(1.0, abs=1e-12)
        assert death == pytest.approx(math.sqrt(2.0), abs=1e-12)
        assert [dth for _, dth in d.h0] == pytest.approx([1.0, 1.0, 1.0])
        assert d.essential_h0 == 1

    def test_equilateral_triangle(self):
        s = 0.6
        D = DistanceMatrix([[0, s, s], [s, 0, s], [s, s, 0]])
        d = vr_persistence(D, max_filtration=1.0)
        assert d.h0 == [(0.0, s), (0.0, s)]
        assert d.h1 == []

    def test_collinear_points(self):
        deaths, essential = h0_via_mst(
            euclidean_matrix([[0.0, 0.0], [0.2, 0.0], [0.4, 0.0]]), 1.0
        )
        assert [d for _, d in deaths] == pytest.approx([0.2, 0.2])
        assert essential == 1

    def test_max_filtration_cuts_merges(self):
        D = DistanceMatrix([[0.0, 0.4], [0.4, 0.0]])
        d = vr_persistence(D, max_filtration=0.3)
        assert d.h0 == []
        assert d.essential_h0 == 2


class TestOracleEquivalence:
    def test_random_matrices(self, rng):
        for _ in range(300):
            n = int(rng.integers(3, 11))
            D = random_distance_matrix(rng, n)
            fast = vr_persistence(D, max_filtration=1.0)
            slow = brute_force_persistence(D, max_filtration=1.0)
            assert diagrams_equal(fast, slow)

    def test_random_matrices_with_cutoff(self, rng):
        for _ in range(100):
            D = random_distance_matrix(rng, int(rng.integers(3, 9)))
            cutoff = float(rng.uniform(0.2, 0.9))
            fast = vr_persistence(D, max_filtration=cutoff)
            slow = brute_force_persistence(D, max_filtration=cutoff)
            assert diagrams_equal(fast, slow)

    def test_brute_force_size_cap(self, rng):
        with pytest.raises(ValueError, match="brute force"):
            brute_force_persistence(random_distance_matrix(rng, 13))


class TestMstCrossCheck:
    def test_h0_deaths_equal_prim_weights(self, rng):
        for _ in range(200):
            D = random_distance_matrix(rng, int(rng.integers(2, 12)))
            deaths, _ = h0_via_mst(D, 1.0)
            assert [d for _, d in deaths] == prim_mst_weights(D.entries, 1.0)

    def test_h0_matches_vr(self, rng):
        for _ in range(50):
            D = random_distance_matrix(rng, int(rng.integers(2, 10)))
            deaths, essential = h0_via_mst(D, 1.0)
            d = vr_persistence(D, max_filtration=1.0)
            assert d.h0 == deaths
            assert d.essential_h0 == essential


class TestProperties:
    def test_scale_equivariance(self, rng):
        for _ in range(30):
            D = random_distance_matrix(rng, 7)
            lam = float(rng.uniform(0.3, 3.0))
            base = vr_persistence(D, max_filtration=1.0)
            scaled = vr_persistence(
                DistanceMatrix(D.entries * lam), max_filtration=lam
            )
            for (b1, d1), (b2, d2) in zip(base.h0, scaled.h0):
                assert d2 == pytest.approx(lam * d1, rel=1e-12)
            for (b1, d1), (b2, d2) in zip(base.h1, scaled.h1):
                assert b2 == pytest.approx(lam * b1, rel=1e-12)
                assert d2 == pytest.approx(lam * d1, rel=1e-12)

    def test_permutation_invariance(self, rng):
        for _ in range(30):
            D = random_distance_matrix(rng, 8)
            perm = rng.permutation(8)
            P = DistanceMatrix(D.entries[np.ix_(perm, perm)])
            assert diagrams_equal(
                vr_persistence(D, max_filtration=1.0),
                vr_persistence(P, max_filtration=1.0),
            )

    def test_monotone_in_max_filtration(self, rng):
        for _ in range(30):
            D = random_distance_matrix(rng, 7)
            small = vr_persistence(D, max_filtration=0.5)
            large = vr_persistence(D, max_filtration=1.0)
            assert set(small.h0) <= set(large.h0)
            assert set(small.h1) <= set(large.h1)
            assert large.essential_h0 <= small.essential_h0

    def test_h0_births_all_zero(self, rng):
        for _ in range(20):
            D = random_distance_matrix(rng, 9)
            d = vr_persistence(D, max_filtration=1.0)
            assert all(b == 0.0 for b, _ in d.h0)
            assert all(0.0 <= b < dth <= 1.0 for b, dth in d.h0 + d.h1)

    def test_component_count_identity(self, rng):
        for _ in range(20):
            D = random_distance_matrix(rng, 8)
            d = vr_persistence(D, max_filtration=1.0)
            assert len(d.h0) + d.essential_h0 == 8


def test_diagram_cache_roundtrip(tmp_path, rng):
    diagrams = {}
    for i in range(4):
        D = random_distance_matrix(rng, 6)
        diagrams[f"word{i}"] = vr_persistence(D, max_filtration=1.0)
    path = tmp_path / "diagrams.jsonl"
    save_diagrams(path, diagrams)
    loaded = load_diagrams(path)
    assert set(loaded) == set(diagrams)
    for w in diagrams:
        assert diagrams_equal(loaded[w], diagrams[w])
