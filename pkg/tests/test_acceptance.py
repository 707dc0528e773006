"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Campaign runs exercise the same code path as ``conekit verify``; the
independent rechecks use raw numpy, exact arithmetic or the brute-force
oracles in ``oracles.py``.
"""
import json
import math
import subprocess
import sys
from fractions import Fraction

import numpy as np

from acceptance_log import verdict
from conekit.campaigns import run_campaign
from conekit.clusters import cluster_comparable, cluster_refine, cluster_split
from conekit.cones import (GapMatrix, PlaneCone, isoclinic_cone, layer_subdivide, prune,
                           pruning_constants)
from conekit.excess import (Cylinder, SampledCurrent, omega, synth_cone_sample,
                            tilt_excess_nonoriented, tilt_excess_oriented)
from conekit.planes import (Subspace, canonical_rotation, graph_subspace,
                            half_difference_singular_values, morgan_angles,
                            random_subspace, rotation_from_eigenbases, unit_ball_hausdorff)
from conekit.whitney import (check_ancestry, classify_cubes, cubes_at_generation,
                             dyadic_region_counts, excess_oracle_from_current,
                             generation_measure_sum)
from oracles import (best_split, comparable_valid, dist_to_span, orth, pairwise, perp_basis,
                     rayleigh_angles, refine_valid, rotation_column_by_column,
                     sampled_hausdorff_circle, subsets, svd2)

SLACK = 1e-12


def _le(a, b):
    return a <= b + SLACK * max(1.0, abs(a), abs(b))


def _all_passed(report):
    passed = report["aggregate"]["passed"]
    return passed == report["trials"], f"{passed}/{report['trials']}"


def _pair(rng, k=None):
    k = int(rng.integers(2, 9)) if k is None else k
    d = int(rng.integers(1, k))
    return random_subspace(k, d, rng), random_subspace(k, d, rng)


def _multiscale_points(rng, N, n):
    """Points clustered at several scales, so pruning and clustering have work to do."""
    centers = rng.standard_normal((N, n))
    scale = 10.0 ** -rng.uniform(0, 5, (N, 1))
    owner = rng.integers(0, max(1, N // 2), N)
    return centers[owner] + scale * rng.standard_normal((N, n))


# -- 1 -----------------------------------------------------------------------------------

def test_criterion_01_morgan_angles_vs_rayleigh_oracle():
    rng = np.random.default_rng(101)
    worst, mismatched = 0.0, 0
    for _ in range(1000):
        a, b = _pair(rng)
        ours = np.asarray(morgan_angles(a, b).angles)
        ref = rayleigh_angles(a.frame, b.frame)
        if len(ours) != len(ref):
            mismatched += 1
            continue
        if len(ours):
            worst = max(worst, float(np.abs(ours - ref).max()))
    ok = mismatched == 0 and worst <= 1e-8
    verdict(1, "Morgan angles vs Rayleigh-grid oracle", ok,
            f"1000 pairs, max error {worst:.2e}, count mismatches {mismatched}")
    assert ok


# -- 2 -----------------------------------------------------------------------------------

def test_criterion_02_hausdorff_identity():
    rng = np.random.default_rng(102)
    ident = 0.0
    for _ in range(1000):
        a, b = _pair(rng)
        h = unit_ball_hausdorff(a, b)
        th = morgan_angles(a, b)
        s = math.sin(th.max) if len(th.angles) else 0.0
        ident = max(ident, abs(h - s), abs(h - float(np.linalg.norm(a.projector - b.projector, 2))))
    sampled = 0.0
    for _ in range(200):
        m, n = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        k = m + n
        Q = np.linalg.qr(rng.standard_normal((k, k)))[0]
        spine = Q[:, : m - 2]
        rest = perp_basis(spine, k) if m > 2 else np.eye(k)
        A = np.hstack([spine, rest @ orth(rng.standard_normal((rest.shape[1], 2)))])
        B = np.hstack([spine, rest @ orth(rng.standard_normal((rest.shape[1], 2)))])
        h = unit_ball_hausdorff(Subspace(A), Subspace(B))
        sampled = max(sampled, abs(h - sampled_hausdorff_circle(A, B, spine, 2 ** 14)))
    ok = ident <= 1e-9 and sampled <= 1e-6
    verdict(2, "Hausdorff = sin(max angle); sampled sup", ok,
            f"identity err {ident:.2e} on 1000 pairs, sampled-sup err {sampled:.2e} on 200 cone pairs")
    assert ok


# -- 3 -----------------------------------------------------------------------------------

def _random_eigenbasis(X, P, rng):
    """Orthonormal eigenbasis of ``X^T (I - P) X`` mapped into span(X), mixed inside clusters."""
    Q = X.T @ (np.eye(len(P)) - P) @ X
    vals, vecs = np.linalg.eigh((Q + Q.T) / 2)
    out = np.empty_like(vecs)
    i = 0
    while i < len(vals):
        j = i + 1
        while j < len(vals) and abs(vals[j] - vals[i]) < 1e-9:
            j += 1
        block = vecs[:, i:j]
        mix = np.linalg.qr(rng.standard_normal((j - i, j - i)))[0]
        out[:, i:j] = block @ mix * rng.choice([-1.0, 1.0], j - i)
        i = j
    return X @ out


def _admissible_pair(rng):
    k = int(rng.integers(2, 9))
    d = int(rng.integers(1, k))
    common = int(rng.integers(0, d))
    Q = np.linalg.qr(rng.standard_normal((k, k)))[0]
    A = Q[:, :d]
    B = np.hstack([Q[:, :common], rng.standard_normal((k, d - common))])
    return Subspace(A), Subspace.span(B)


def test_criterion_03_rotation_contract():
    rng = np.random.default_rng(103)
    err = {"orthogonal": 0.0, "det": 0.0, "maps": 0.0, "inverse": 0.0, "fixed": 0.0,
           "bases": 0.0, "oracle": 0.0}
    for _ in range(1000):
        a, b = _admissible_pair(rng)
        k = a.ambient_dim
        R = canonical_rotation(a, b)
        I = np.eye(k)
        err["orthogonal"] = max(err["orthogonal"], float(np.abs(R @ R.T - I).max()))
        err["det"] = max(err["det"], abs(float(np.linalg.det(R)) - 1.0))
        err["maps"] = max(err["maps"], float(dist_to_span(b.frame, (R @ a.frame).T).max()))
        err["inverse"] = max(err["inverse"], float(np.abs(R @ canonical_rotation(b, a) - I).max()))
        # fixed subspaces: alpha & beta and alpha_perp & beta_perp
        for X, Y in ((a.frame, b.frame), (perp_basis(a.frame, k), perp_basis(b.frame, k))):
            if X.shape[1] == 0:
                continue
            U, s, _ = np.linalg.svd(X.T @ Y)
            C = X @ U[:, s > 1 - 1e-12]
            if C.size:
                err["fixed"] = max(err["fixed"], float(np.abs(R @ C - C).max()))
        ap, bp = a.complement(), b.complement()
        Rs = [rotation_from_eigenbases(a, b, _random_eigenbasis(a.frame, b.projector, rng),
                                       _random_eigenbasis(ap.frame, bp.projector, rng))
              for _ in range(2)]
        err["bases"] = max(err["bases"], float(np.abs(Rs[0] - Rs[1]).max()),
                           float(np.abs(Rs[0] - R).max()))
        err["oracle"] = max(err["oracle"],
                            float(np.abs(rotation_column_by_column(a.frame, b.frame) - R).max()))
    ok = max(err.values()) <= 1e-9
    verdict(3, "rotation contract and basis independence", ok,
            "1000 pairs, " + ", ".join(f"{k} {v:.1e}" for k, v in err.items()))
    assert ok


# -- 4 -----------------------------------------------------------------------------------

def test_criterion_04_sandwich():
    rng = np.random.default_rng(104)
    violations, count = 0, 0
    while count < 1000:
        m, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        H = rng.standard_normal((n, 2)) @ rng.standard_normal((2, m))
        L0 = rng.standard_normal((n, m))
        L1, L2 = L0 + H, L0 - H
        scale = 1e-2 * rng.uniform(0.05, 1.0) / max(np.linalg.norm(L1, 2), np.linalg.norm(L2, 2))
        L1, L2 = L1 * scale, L2 * scale
        half = (L1 - L2) / 2
        U = orth(half)[:, :2]
        V = orth(half.T)[:, :2]
        s_hi, s_lo = svd2(U.T @ half @ V)
        if s_lo <= 1e-6 * s_hi:
            continue
        count += 1
        lib_s = half_difference_singular_values(L1, L2)
        lib_t = morgan_angles(graph_subspace(L1), graph_subspace(L2)).angles
        ref_t = rayleigh_angles(orth(np.vstack([np.eye(m), L1])), orth(np.vstack([np.eye(m), L2])))
        for s, t in [*zip((s_lo, s_hi), ref_t), *zip(lib_s, lib_t)]:
            violations += not (s / 4 <= t <= 4 * s)
        violations += len(lib_t) != 2 or len(ref_t) != 2
    report = run_campaign("sandwich", 1000, 104)
    camp_ok, camp = _all_passed(report)
    ok = violations == 0 and camp_ok
    verdict(4, "sigma/4 <= theta <= 4 sigma at |L| <= 1e-2", ok,
            f"1000 oracle pairs, {violations} violations; campaign {camp}")
    assert ok


# -- 5 -----------------------------------------------------------------------------------

def test_criterion_05_pruning_certificates(tmp_path):
    rng = np.random.default_rng(105)
    bad = 0
    for _ in range(10000):
        N = int(rng.integers(2, 7))
        g = pairwise(_multiscale_points(rng, N, int(rng.integers(1, 4))))
        delta = float(rng.uniform(0.05, 1.0))
        Gamma, eps = pruning_constants(N, delta)
        top = g.max()
        u = rng.random()
        D = 0.0 if u < 0.05 else (eps * top if u < 0.1 else eps * top * rng.random() ** 3)
        I = list(prune(g, D, delta).I)
        sub = g[np.ix_(I, I)][np.triu_indices(len(I), 1)]
        reach = g[:, I].min(axis=1).max()
        bad += not (len(I) >= 2 and _le(reach, Gamma * D) and _le(D + reach, delta * sub.min())
                    and sub.max() == top)
    camp_ok, camp = _all_passed(run_campaign("prune", 10000, 1))
    gaps = tmp_path / "gaps.json"
    gaps.write_text(json.dumps([[0, 0.01, 0.5], [0.01, 0, 0.5], [0.5, 0.5, 0]]))
    codes = []
    for D in ("0.3", "0.02"):
        done = subprocess.run([sys.executable, "-m", "conekit.cli", "compute", "prune",
                               "--gaps", str(gaps), "--D", D, "--delta", "0.5"],
                              capture_output=True, text=True)
        codes.append(done.returncode)
    ok = bad == 0 and camp_ok and codes == [2, 0]
    verdict(5, "pruning conclusions; violated hypothesis exits 2", ok,
            f"10000 raw rechecks, {bad} violations; campaign {camp}; exit codes {codes}")
    assert ok


# -- 6 -----------------------------------------------------------------------------------

def test_criterion_06_layer_certificates():
    rng = np.random.default_rng(106)
    bad = 0
    for _ in range(10000):
        N = int(rng.integers(2, 7))
        g = pairwise(_multiscale_points(rng, N, int(rng.integers(1, 4))))
        delta = float(rng.uniform(0.05, 1.0))
        cert = layer_subdivide(GapMatrix(g), delta)
        eta = cert.eta

        def stats(I):
            sub = g[np.ix_(I, I)][np.triu_indices(len(I), 1)]
            return sub.min(), sub.max(), g[:, list(I)].min(axis=1).max()

        ms, Ms, ds = zip(*(stats(I) for I in cert.chain))
        ok = all(M == Ms[0] for M in Ms) and _le(eta * Ms[-1], ms[-1])
        for s in range(1, len(cert.chain)):
            ok &= set(cert.chain[s]) < set(cert.chain[s - 1]) and len(cert.chain[s]) >= 2
            ok &= _le(ds[s], delta * ms[s]) and _le(eta * ds[s], ms[s - 1])
            ok &= _le(ms[s - 1], delta * ms[s])
        bad += not ok
    camp_ok, camp = _all_passed(run_campaign("layers", 10000, 106))
    ok = bad == 0 and camp_ok
    verdict(6, "layer conclusions (i)-(iv), M(s) constant", ok,
            f"10000 raw rechecks, {bad} violations; campaign {camp}")
    assert ok


# -- 7 -----------------------------------------------------------------------------------

def test_criterion_07_clustering_certificates():
    rng = np.random.default_rng(107)
    bad = {"comparable": 0, "refine": 0, "split": 0}
    brute = 0
    for _ in range(10000):
        N = int(rng.integers(2, 9))
        P = _multiscale_points(rng, N, int(rng.integers(1, 4)))
        D = pairwise(P)
        db = float(rng.uniform(0.05, 0.5))
        delta, eps = float(rng.uniform(0.05, 0.5)), float(10 ** rng.uniform(-4, -1))
        sel, cert = cluster_comparable(P, db)
        bad["comparable"] += not (cert.ok and comparable_valid(D, sel, db))
        sel2, cert2 = cluster_refine(P, delta, eps)
        bad["refine"] += not (cert2.ok and refine_valid(D, sel2, delta, eps))
        A, B, cert3 = cluster_split(P)
        cross = D[np.ix_(A, B)].min()
        bound = D.max() / 2.0 ** (N - 2)
        bad["split"] += not (cert3.ok and bound <= cross and sorted(A + B) == list(range(N)))
        if N <= 6:
            brute += 1
            best = best_split(D)
            ok = cross <= best and bound <= best
            ok &= any(comparable_valid(D, S, db) for S in subsets(N, 2))
            ok &= any(refine_valid(D, S, delta, eps) for S in subsets(N, 1))
            bad["split"] += not ok
    camps = {lemma: _all_passed(run_campaign(lemma, 10000, 107))
             for lemma in ("clusters1", "clusters2", "clusters3")}
    ok = not any(bad.values()) and all(c[0] for c in camps.values())
    verdict(7, "clustering certificates and brute-force agreement", ok,
            f"10000 instances each, violations {bad}, {brute} brute-force checks; campaigns "
            + ", ".join(f"{k} {v[1]}" for k, v in camps.items()))
    assert ok


# -- 8 -----------------------------------------------------------------------------------

def _exhaustive_counts(y, r2, m, K):
    closed = opened = 0
    for ell in range(K + 1):
        lo2, hi2 = Fraction(1, 4 ** (ell + 1)), Fraction(1, 4 ** ell)
        for L in cubes_at_generation(ell, m):
            box = L.bounds()
            closed += lo2 <= r2 <= hi2 and all(lo <= v <= hi for v, (lo, hi) in zip(y, box))
            opened += lo2 < r2 < hi2 and all(lo < v < hi for v, (lo, hi) in zip(y, box))
    return closed, opened


def test_criterion_08_whitney_suite():
    rng = np.random.default_rng(108)
    problems = []
    for m in (3, 4, 5):
        for ell in range(7):
            if len(cubes_at_generation(ell, m)) != 2 ** (ell * (m - 2)):
                problems.append(f"count m={m} ell={ell}")
            if generation_measure_sum(ell, m) != 1:
                problems.append(f"measure m={m} ell={ell}")
        K = 6
        A = rng.integers(-2 ** K, 2 ** K + 1, (100000, m - 2))
        B = rng.integers(1, 4 ** K + 1, 100000)
        B[:10000] = 4 ** rng.integers(0, K + 1, 10000)
        closed, opened = dyadic_region_counts(A, B, K, m)
        if closed.min() < 1 or opened.max() > 1:
            problems.append(f"partition m={m}")
        Ks = 3
        for _ in range(40):
            a = rng.integers(-2 ** Ks, 2 ** Ks + 1, m - 2)
            b = int(rng.integers(1, 4 ** Ks + 1)) if rng.random() < 0.7 else 4 ** int(rng.integers(0, Ks + 1))
            c, o = dyadic_region_counts(a[None], np.array([b]), Ks, m)
            ref = _exhaustive_counts([Fraction(int(v), 2 ** Ks) for v in a], Fraction(b, 4 ** Ks), m, Ks)
            if (int(c[0]), int(o[0])) != ref:
                problems.append(f"scan m={m}")
    labelled = 0
    for _ in range(30):
        table, thresh = {}, rng.random(3)

        def oracle(L, k):
            if (L, k) not in table:
                table[L, k] = float(rng.random() < thresh[k]) * 10.0
            return table[L, k]

        labels = classify_cubes(oracle, [1.0, 1.0, 1.0], 1.0, 4, 3)
        labelled += len(labels)
        if check_ancestry(labels):
            problems.append("ancestry random")
    S = isoclinic_cone(3, 2, [0.0, 0.05, 0.6])
    T = synth_cone_sample(S, h=0.02, noise=0.005, density=1500, seed=4)
    layers = [S, PlaneCone(S.spine, (S.planes[0], S.planes[2]))]
    if check_ancestry(classify_cubes(excess_oracle_from_current(T, layers), [0.05, 0.6], 0.5, 3, 3)):
        problems.append("ancestry current")
    ok = not problems
    verdict(8, "Whitney counts, measures, partition, ancestry", ok,
            f"m in 3,4,5 ell <= 6; 3 x 100000 dyadic points; {labelled} labelled cubes; "
            f"problems {problems or 'none'}")
    assert ok


# -- 9 -----------------------------------------------------------------------------------

def test_criterion_09_excess_scaling():
    report = run_campaign("excess-scaling", 1000, 1)
    ok, summary = _all_passed(report)
    worst = report["aggregate"]["constant_max"]
    verdict(9, "excess invariant under rescaling", ok,
            f"campaign {summary}, max relative difference {worst:.1e}")
    assert ok


# -- 10 ----------------------------------------------------------------------------------

def test_criterion_10_planar_optimality():
    report = run_campaign("planar-opt", 100, 110, {"planes": "1000"})
    ok, summary = _all_passed(report)
    best = report["aggregate"]["constant_min"]
    verdict(10, "planar excess not beaten by random planes", ok,
            f"campaign {summary} x 1000 planes, smallest competitor gap {best:.2e}")
    assert ok


# -- 11 ----------------------------------------------------------------------------------

def _point_current(k, F, sign):
    return SampledCurrent(np.zeros((1, k)), [1.0], F.shape[1], F[None], [sign])


def test_criterion_11_tilt_algebra():
    rng = np.random.default_rng(111)
    rev, rot = 0.0, 0.0
    for _ in range(500):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        k = m + n
        Q = np.linalg.qr(rng.standard_normal((k, k)))[0]
        pi = Subspace(Q[:, :m])
        cyl = Cylinder(np.zeros(k), 1.0, pi)
        norm = 2 * omega(m)
        T = _point_current(k, pi.frame, -1.0)
        rev = max(rev, abs(tilt_excess_oriented(T, cyl, pi) * norm - 4.0),
                  abs(tilt_excess_nonoriented(T, cyl, pi) * norm))
        j = int(rng.integers(1, min(m, n) + 1))
        phi = rng.uniform(0, math.pi / 2, j)
        F = Q[:, :m].copy()
        for i in range(j):
            F[:, i] = math.cos(phi[i]) * Q[:, i] + math.sin(phi[i]) * Q[:, m + i]
        T = _point_current(k, F, 1.0)
        rot = max(rot,
                  abs(tilt_excess_oriented(T, cyl, pi) * norm - (2 - 2 * np.prod(np.cos(phi)))),
                  abs(tilt_excess_nonoriented(T, cyl, pi) * norm - 2 * np.sum(np.sin(phi) ** 2)))
    ok = rev <= 1e-12 and rot <= 1e-10
    verdict(11, "tilt excess orientation dichotomy and closed forms", ok,
            f"500 instances, reversed err {rev:.1e}, rotated err {rot:.1e}")
    assert ok


# -- 12 ----------------------------------------------------------------------------------

def test_criterion_12_calibration_stability():
    parts, ok = [], True
    for lemma in ("spine", "shift", "maximizer"):
        tops = [run_campaign(lemma, 1000, seed)["aggregate"]["constant_max"] for seed in (1201, 1202)]
        spread = abs(tops[0] - tops[1]) / max(tops)
        ok &= all(math.isfinite(t) and t > 0 for t in tops) and spread < 0.10
        parts.append(f"{lemma} {tops[0]:.4g} vs {tops[1]:.4g} ({spread:.1%})")
    verdict(12, "calibration constants stable across master seeds", ok,
            "max over 1000 seeds each: " + ", ".join(parts))
    assert ok
