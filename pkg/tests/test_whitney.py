import io
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from conekit import InvalidInput
from conekit.cones import PlaneCone, isoclinic_cone
from conekit.excess import Ball, SampledCurrent, one_sided_excess, synth_cone_sample
from conekit.whitney import (DEFAULT_RHO_STAR, CubeKind, WhitneyCube, bh_intersect, check_ancestry,
                             classify_cubes, cubes_at_generation, dump_labels,
                             dyadic_region_counts, excess_oracle_from_current,
                             generation_measure_sum, geometric_partial_sums,
                             geometry_constants, in_region, label_beyond_depth, locate,
                             max_generation_gap, neighbors, overlap_count,
                             region_membership, root_cube)


# -- cubes ---------------------------------------------------------------------

@pytest.mark.parametrize("m,ell,count", [(3, 0, 1), (3, 2, 4), (4, 3, 64), (5, 2, 64)])
def test_cube_counts(m, ell, count):
    assert len(cubes_at_generation(ell, m)) == count


@pytest.mark.parametrize("m", [3, 4, 5])
def test_measure_sums_exact(m):
    for ell in range(4):
        assert generation_measure_sum(ell, m) == 1


def test_cube_family_structure():
    L = WhitneyCube(2, (1, 3))
    assert L.parent() == WhitneyCube(1, (0, 1))
    assert len(L.children()) == 4 and all(c.parent() == L for c in L.children())
    assert L.ancestors()[-1] == root_cube(4)
    with pytest.raises(InvalidInput):
        WhitneyCube(1, (2,))
    with pytest.raises(InvalidInput):
        cubes_at_generation(0, 2)


def test_geometric_partial_sums_bounded():
    sums, bound = geometric_partial_sums(4, 1, 10)
    assert all(a < b for a, b in zip(sums, sums[1:]))
    assert sums[-1] < bound == 2


# -- regions -------------------------------------------------------------------------

def test_region_boundary_is_closed():
    L = WhitneyCube(2, (1,))  # spine interval [-1/2, 0]
    p = np.array([-0.25, 0.25, 0.0])  # |p_perp| = 2^-2 exactly
    inside, _ = region_membership(p, L)
    assert inside


def test_region_excludes_outside_cube_and_spine():
    L = WhitneyCube(2, (1,))
    assert not region_membership(np.array([0.3, 0.25, 0.0]), L)[0]
    for ell in range(3):
        for K in cubes_at_generation(ell, 3):
            assert not region_membership(np.array([K.center()[0], 0.0, 0.0]), K)[0]


def test_lambda_region_contains_region():
    L = WhitneyCube(1, (0, 1))
    y = [Fraction(-1, 4), Fraction(1, 4)]
    assert in_region(y, Fraction(1, 8), L, 1)
    assert in_region(y, Fraction(1, 8), L, Fraction(3, 2))
    with pytest.raises(InvalidInput):
        in_region(y, Fraction(1, 8), L, 2)


def _grid_neighbors(L, max_ell=3):
    """Brute force for m = 3: cubes whose regions share a point of a dyadic grid."""
    def box(K):
        w = 32 // 2 ** K.ell
        i = K.index[0]
        return (-16 + i * w, -16 + (i + 1) * w), (256 // 4 ** (K.ell + 1), 256 // 4 ** K.ell)

    (a0, a1), (b0, b1) = box(L)
    out = []
    for ell in range(max_ell + 1):
        for K in cubes_at_generation(ell, 3):
            (c0, c1), (d0, d1) = box(K)
            ys = [y for y in range(-16, 17) if a0 <= y <= a1 and c0 <= y <= c1]
            rs = [r for r in range(1, 257) if b0 <= r <= b1 and d0 <= r <= d1]
            if ys and rs:
                out.append(K)
    return out


def test_neighbors_of_leftmost_cube():
    L = WhitneyCube(1, (0,))
    got = set(neighbors(L))
    # [DERIVED] grid oracle: self, sibling, parent, two children and the cube touching at 0
    assert got == set(_grid_neighbors(L))
    assert len(got) == 6
    assert {WhitneyCube(1, (1,)), root_cube(3), WhitneyCube(2, (0,)), WhitneyCube(2, (1,))} <= got


@pytest.mark.parametrize("L", cubes_at_generation(2, 3))
def test_neighbors_match_grid_oracle(L):
    assert set(neighbors(L)) == set(_grid_neighbors(L))


def test_interior_neighbor_count_constant():
    interior = [L for L in cubes_at_generation(2, 4) if all(1 <= i <= 2 for i in L.index)]
    counts = {len(neighbors(L)) for L in interior}
    assert len(interior) == 4 and len(counts) == 1


def test_far_generations_never_neighbors():
    L = WhitneyCube(3, (2, 5))
    assert all(abs(K.ell - L.ell) <= 1 for K in neighbors(L))


# -- dyadic partition -----------------------------------------------------------------

@pytest.mark.parametrize("m", [3, 4, 5])
def test_dyadic_partition(m):
    rng = np.random.default_rng(m)
    K = 6
    A = rng.integers(-2 ** K, 2 ** K + 1, (4000, m - 2))
    B = rng.integers(1, 4 ** K + 1, 4000)
    B[:500] = 4 ** rng.integers(0, K + 1, 500)
    closed, opened = dyadic_region_counts(A, B, K, m)
    assert closed.min() >= 1 and opened.max() <= 1


@given(st.integers(0, 2 ** 32 - 1))
def test_dyadic_counts_match_exhaustive_scan(seed):
    rng = np.random.default_rng(seed)
    K, m = 4, 4
    a = rng.integers(-2 ** K, 2 ** K + 1, m - 2)
    b = int(rng.integers(1, 4 ** K + 1)) if rng.random() < 0.7 else 4 ** int(rng.integers(0, K + 1))
    # spine coordinates in units of s, radial part squared
    y = [Fraction(int(v), 2 ** K) for v in a]
    r2 = Fraction(b, 4 ** K)
    closed, opened = dyadic_region_counts(a[None], np.array([b]), K, m)
    assert closed[0] == len(_cubes_containing(y, r2, m, K, closed=True))
    assert opened[0] == len(_cubes_containing(y, r2, m, K, closed=False))


def _cubes_containing(y_units, r2, m, K, closed):
    out = []
    for ell in range(K + 1):
        for L in cubes_at_generation(ell, m):
            box = L.bounds()
            lo2, hi2 = Fraction(1, 4 ** (ell + 1)), Fraction(1, 4 ** ell)
            if closed:
                ok = lo2 <= r2 <= hi2 and all(lo <= v <= hi for v, (lo, hi) in zip(y_units, box))
            else:
                ok = lo2 < r2 < hi2 and all(lo < v < hi for v, (lo, hi) in zip(y_units, box))
            if ok:
                out.append(L)
    return out


def test_locate_agrees_with_membership():
    y = [Fraction(1, 3)]
    found = locate(y, Fraction(1, 16), 3)
    assert {L.ell for L in found} == {1, 2}
    assert all(in_region(y, Fraction(1, 16), L) for L in found)


# -- B^h geometry --------------------------------------------------------------------------

def test_geometry_constants():
    g = geometry_constants(3)
    assert g["C"] == 8.0
    assert max_generation_gap() == 4


@pytest.mark.parametrize("m", [3, 4, 5])
def test_diameters_comparable_to_generation_scale(m):
    rng = np.random.default_rng(m)
    n = 2
    C = geometry_constants(m)["C"]
    rho = float(DEFAULT_RHO_STAR)
    for ell in range(4):
        L = cubes_at_generation(ell, m)[int(rng.integers(0, 2 ** (ell * (m - 2))))]
        unit = 2.0 ** -ell
        # R(L): spine box times the radial shell, corners included
        u = np.vstack([rng.uniform(-1, 1, (2000, m - 2)), rng.choice([-1.0, 1.0], (64, m - 2))])
        e = rng.standard_normal((len(u), n + 2))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        r = unit * rng.choice([0.5, 1.0, 0.75], len(u))
        R = np.hstack([L.center() + L.half_side * u, r[:, None] * e])
        # B^h(L): ball of radius 4 unit around the centre, minus the tube of radius rho unit
        z = rng.standard_normal((20000, m + n))
        z *= (4 * unit * rng.random(len(z)) ** (1 / (m + n)) / np.linalg.norm(z, axis=1))[:, None]
        z[:, : m - 2] += L.center()
        Bh = z[np.linalg.norm(z[:, m - 2:], axis=1) >= rho * unit]
        for P in (R, Bh):
            diam = pdist(P[:3000]).max()
            dist = np.linalg.norm(P[:, m - 2:], axis=1)
            assert unit / C <= diam <= C * unit
            assert unit / C <= dist.min() and dist.max() <= C * unit


def test_bh_far_generations_disjoint():
    L = WhitneyCube(0, (0,))
    deep = WhitneyCube(max_generation_gap() + 1, (0,))
    assert not bh_intersect(L, deep)
    assert bh_intersect(L, WhitneyCube(1, (0,)))


def test_overlap_count_is_finite_and_uniform_in_depth():
    c3 = [overlap_count(L) for ell in (4, 5) for L in cubes_at_generation(ell, 3)]
    assert max(c3) <= 200


# -- classification ---------------------------------------------------------------------------

def test_classify_zero_oracle_all_outer():
    labels = classify_cubes(lambda L, k: 0.0, [1.0, 0.5], 0.1, 3, 3)
    assert all(l.kind == CubeKind.OUTER for l in labels.values())
    assert len(labels) == 1 + 2 + 4 + 8


def test_classify_root_only_outer():
    root = root_cube(3)

    def oracle(L, k):
        return 0.0 if (L == root and k == 0) else 1e6

    labels = classify_cubes(oracle, [1.0, 0.5], 0.1, 3, 3)
    assert labels[root].kind == CubeKind.OUTER
    assert all(labels[L].kind == CubeKind.INNER for L in cubes_at_generation(1, 3))
    assert all(labels[L].kind == CubeKind.DESCENDANT_OF_INNER
               for ell in (2, 3) for L in cubes_at_generation(ell, 3))
    assert not check_ancestry(labels)
    deep = WhitneyCube(5, (3,))
    assert label_beyond_depth(deep, labels).kind == CubeKind.DESCENDANT_OF_INNER


def test_classify_random_oracles_respect_ancestry():
    rng = np.random.default_rng(0)
    for _ in range(20):
        table = {}
        thresh = rng.random(2)

        def oracle(L, k):
            if (L, k) not in table:
                table[L, k] = float(rng.random() < thresh[k])
            return table[L, k]

        labels = classify_cubes(oracle, [1.0, 1.0], 0.5, 4, 4)
        assert not check_ancestry(labels)


def test_end_to_end_pipeline():
    S = isoclinic_cone(3, 2, [0.0, 0.05, 0.6])
    T = synth_cone_sample(S, h=0.02, noise=0.005, density=1500, seed=4)
    layers = [S, PlaneCone(S.spine, (S.planes[0], S.planes[2]))]
    oracle = excess_oracle_from_current(T, layers)
    labels = classify_cubes(oracle, [0.05, 0.6], 0.5, 3, 3)
    assert not check_ancestry(labels)
    buf = io.StringIO()
    dump_labels(labels, buf)
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(rows) == len(labels) and {"ell", "index", "label"} <= set(rows[0])


def test_excess_oracle_values():
    S = isoclinic_cone(3, 2, [0.0, 0.5])
    T = synth_cone_sample(S, density=300, seed=2)
    oracle = excess_oracle_from_current(T, [S])
    assert all(oracle(L, 0) <= 1e-25 for ell in range(3) for L in cubes_at_generation(ell, 3))
    # one sample at distance d from the cone inside B^h(L) of a generation-1 cube
    L = WhitneyCube(1, (0,))
    y = L.center()[0]
    d = 0.01
    p = np.zeros(5)
    p[0] = y
    p[1] = 0.3
    p[3] = d  # normal to the first plane and at distance d from both planes' nearest
    single = SampledCurrent(p[None], [0.7], 3)
    value = excess_oracle_from_current(single, [PlaneCone(S.spine, (S.planes[0],))])(L, 0)
    assert value == pytest.approx(2 ** (5 * 1) * 0.7 * d * d, rel=1e-12)


def test_excess_oracle_reconciles_with_one_sided_excess():
    rng = np.random.default_rng(7)
    S = isoclinic_cone(3, 2, [0.0, 0.4])
    T = synth_cone_sample(S, h=0.03, noise=0.01, density=2000, seed=5)
    oracle = excess_oracle_from_current(T, [S])
    rho = float(DEFAULT_RHO_STAR)
    for ell in range(4):
        L = cubes_at_generation(ell, 3)[int(rng.integers(0, 2 ** ell))]
        keep = np.linalg.norm(T.points[:, 1:], axis=1) >= rho * 2.0 ** -ell
        outside_tube = SampledCurrent(T.points[keep], T.weights[keep], 3)
        ball = Ball(np.r_[L.center(), np.zeros(4)], 2.0 ** (2 - ell))
        # radius 2^(2-ell): r^-(m+2) differs from 2^((m+2) ell) by 2^(2(m+2))
        expected = 2.0 ** (2 * 5) * one_sided_excess(outside_tube, S, ball)
        assert oracle(L, 0) == pytest.approx(expected, rel=1e-10)
