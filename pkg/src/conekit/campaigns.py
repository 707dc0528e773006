"""Seeded verification campaigns.

Every campaign runs ``trials`` independent trials.  Trial ``t`` of a campaign
with master seed ``s`` draws all of its randomness from
``Generator(Philox(key=[s, t]))``, so results do not depend on scheduling.
A trial returns a record with ``ok`` (all hard checks passed), ``margin``
(smallest relative slack ``(rhs - lhs) / max(|lhs|, |rhs|)`` over its checks)
and, for calibration campaigns, the empirical ``constant`` it observed.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.linalg import expm

from . import __version__
from .clusters import cluster_comparable, cluster_refine, cluster_split
from .cones import (GapMatrix, PlaneCone, layer_subdivide, maximizer_sides, mu, prune,
                    pruning_constants, random_balanced_cone, random_cone,
                    rotate_cone, separated_region, shift_lower_bound,
                    spine_gap_ratio)
from .errors import ConekitError, InvalidInput, RankMismatch
from .excess import (Ball, SampledCurrent, one_sided_excess, planar_excess, rescale,
                     synth_cone_sample, two_sided_excess)
from .planes import (Subspace, canonical_rotation, graph_subspace,
                     half_difference_singular_values, morgan_angles,
                     random_subspace, unit_ball_hausdorff)
from .whitney import (check_ancestry, classify_cubes, cubes_at_generation,
                      dyadic_region_counts, generation_measure_sum)

DEFAULTS = {
    "prune": {"m": "2:3", "n": "2:3", "N": "2:6", "delta": "0.05:1"},
    "layers": {"m": "2:3", "n": "2:3", "N": "2:6", "delta": "0.05:1"},
    "clusters1": {"n": "1:3", "N": "2:8", "delta_bar": "0.05:0.5"},
    "clusters2": {"n": "1:3", "N": "2:8", "delta": "0.05:0.5", "eps": "0.0001:0.1"},
    "clusters3": {"n": "1:3", "N": "2:8"},
    "angles": {"ambient": "2:8"},
    "rotation": {"ambient": "2:8"},
    "hausdorff": {"ambient": "2:8", "resolution": "16384"},
    "sandwich": {"m": "2:4", "n": "2:4", "size": "0.01"},
    "sep-region": {"m": "1:3", "n": "1:3", "N": "1:4", "resolution": "4096"},
    "spine": {"m": "3", "n": "2", "N": "2", "M": "2", "eta": "0.001", "resolution": "1024"},
    "shift": {"m": "3", "n": "2", "N": "2", "M": "2", "samples": "10000", "fraction": "0.05"},
    "maximizer": {"m": "3", "n": "2", "N": "2", "M": "2"},
    "excess-scaling": {"m": "2:3", "n": "2:3", "N": "1:3", "h": "0:0.1", "noise": "0:0.02",
                       "a": "0.0625", "resolution": "1024", "density": "200"},
    "whitney": {"m": "3", "depth": "6", "points": "1000"},
    "planar-opt": {"m": "1:3", "n": "1:2", "planes": "1000"},
}

CALIBRATION = {"spine", "shift", "maximizer"}
LEMMAS = tuple(DEFAULTS)


# --------------------------------------------------------------------------
# parameters


class Range:
    """A parameter given as ``v``, ``a:b`` (inclusive range) or ``v1,v2,...``."""

    def __init__(self, text):
        self.text = str(text)
        t = self.text.strip()
        if not t:
            raise InvalidInput("empty parameter range")
        if "," in t:
            self.choices = [_num(v) for v in t.split(",")]
            self.lo = self.hi = None
        elif ":" in t:
            a, b = t.split(":")
            self.lo, self.hi = _num(a), _num(b)
            if self.hi < self.lo:
                raise InvalidInput(f"empty range {t}")
            self.choices = None
        else:
            self.choices = [_num(t)]
            self.lo = self.hi = None

    def draw(self, rng):
        if self.choices is not None:
            return self.choices[int(rng.integers(len(self.choices)))]
        if isinstance(self.lo, int) and isinstance(self.hi, int):
            return int(rng.integers(self.lo, self.hi + 1))
        return float(self.lo + (self.hi - self.lo) * rng.random())


def _num(v):
    v = v.strip()
    try:
        return int(v)
    except ValueError:
        return float(v)


def resolve_params(lemma, overrides=None):
    if lemma not in DEFAULTS:
        raise InvalidInput(f"unknown lemma {lemma!r}; choose from {', '.join(LEMMAS)}")
    params = dict(DEFAULTS[lemma])
    for k, v in (overrides or {}).items():
        if v is not None:
            params[k] = str(v)
    for v in params.values():
        Range(v)
    return params


def trial_rng(seed, trial):
    return np.random.Generator(np.random.Philox(key=[int(seed), int(trial)]))


# --------------------------------------------------------------------------
# helpers


def _margin(lhs, rhs):
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale == 0 else (rhs - lhs) / scale


# equalities and counts: pass/fail only, no meaningful slack
STRUCTURAL = ("pruning_3", "size", "i", "M_", "strict_", "count", "measure", "covered",
              "disjoint", "ancestry")


def _structural(name):
    return name in STRUCTURAL or name.startswith(("M_", "strict_"))


def _record(checks, ok=True, **extra):
    """``checks``: name -> (lhs, rhs, ok); ``ok`` adds a check without a margin.

    The margin ranges over inequality checks only.
    """
    margins = [_margin(l, r) for name, (l, r, _) in checks.items() if not _structural(name)]
    rec = {"ok": bool(ok) and all(c for _, _, c in checks.values()),
           "margin": min(margins) if margins else None,
           "checks": {k: [float(l), float(r), bool(ok)] for k, (l, r, ok) in checks.items()}}
    rec.update(extra)
    return rec


def _cert_checks(cert_checks):
    return {k: (v["lhs"], v["rhs"], v["ok"]) for k, v in cert_checks.items()}


def _ascend(f, starts, rng, scales=(0.3, 0.1, 0.03, 0.01, 0.003), batch=64, rounds=2):
    """Batched random local search for a maximizer of a vectorized ``f``."""
    vals = f(starts)
    i = int(np.argmax(vals))
    x, best = starts[i], float(vals[i])
    for s in scales:
        for _ in range(rounds):
            cand = x + s * np.linalg.norm(x) * rng.standard_normal((batch, len(x)))
            v = f(cand)
            j = int(np.argmax(v))
            if v[j] > best:
                x, best = cand[j], float(v[j])
    return x, best


def _skew(Y, k):
    iu = np.triu_indices(k, 1)
    K = np.zeros((len(Y), k, k))
    K[:, iu[0], iu[1]] = Y
    return K - K.transpose(0, 2, 1)


def spine_linear_model(S):
    """First-order spine ratio for ``S' = exp(eta K) S`` as ``eta -> 0``, vectorized in ``K``.

    ``dist(V, V') ~ eta |p_{V_perp} K|_V|`` and
    ``dist(S & B_1, S' & B_1) ~ eta max_i |p_{alpha_i}^perp K|_{alpha_i}|``.
    """
    k = S.ambient_dim
    FV = S.spine.frame
    PVp = np.eye(k) - FV @ FV.T
    perps = [(np.eye(k) - p.projector, p.frame) for p in S.planes]
    den = GapMatrix.from_cone(S).values.max(axis=1).min()

    def f(Y):
        K = _skew(np.atleast_2d(Y), k)
        A = np.linalg.norm(PVp @ K @ FV, ord=2, axis=(1, 2))
        B = np.max([np.linalg.norm(P @ K @ F, ord=2, axis=(1, 2)) for P, F in perps], axis=0)
        return A / B * den

    return f


def maximizer_ratio_model(S):
    """``q -> lhs(q) / max_i |p_{alpha_i}^perp q|``, vectorized (degree-0 homogeneous)."""
    W = S.normal_part(0)
    m_s = mu(S)

    def f(Q):
        Q = np.atleast_2d(Q)
        perp = np.array([p.perp_norm(Q) for p in S.planes])
        lhs = perp[0] + m_s * np.linalg.norm(W.coords(Q), axis=1)
        return lhs / perp.max(axis=0)

    return f


def _adversarial_direction(S, rng, starts=256):
    f = maximizer_ratio_model(S)
    x, best = _ascend(f, rng.standard_normal((starts, S.ambient_dim)), rng)
    return x / np.linalg.norm(x), best


def _rank2_pair(rng, m, n, size):
    """Two ``n x m`` maps with ``|L_i| <= size`` whose difference has rank 2."""
    if min(m, n) < 2:
        raise RankMismatch(f"a rank-2 difference needs m, n >= 2 (got m={m}, n={n})")
    while True:
        B = rng.standard_normal((n, 2)) @ rng.standard_normal((2, m))
        L0 = rng.standard_normal((n, m))
        L1, L2 = L0 + B, L0 - B
        scale = size * rng.uniform(0.05, 1.0) / max(np.linalg.norm(L1, 2), np.linalg.norm(L2, 2))
        L1, L2 = L1 * scale, L2 * scale
        s = np.linalg.svd(L1 - L2, compute_uv=False)
        if len(s) >= 2 and s[1] > 1e-6 * s[0]:
            return L1, L2


def _brute_angles(alpha, beta):
    """Angles from a dense eigensolve of ``Q1 = A^T (I - P_beta) A``."""
    A = alpha.frame
    Q1 = A.T @ (np.eye(A.shape[0]) - beta.projector) @ A
    lam = np.clip(np.linalg.eigvalsh((Q1 + Q1.T) / 2), 0.0, 1.0)
    return np.arcsin(np.sqrt(lam))


# --------------------------------------------------------------------------
# trials


def trial_prune(p, rng):
    N, m, n = p["N"], p["m"], p["n"]
    delta = p["delta"]
    S = random_cone(m, n, N, rng, rotate=False)
    g = GapMatrix.from_cone(S)
    _, eps = pruning_constants(N, delta)
    top = g.max_over(list(range(N)))
    u = rng.random()
    D = 0.0 if u < 0.05 else (eps * top if u < 0.1 else eps * top * rng.random() ** 3)
    cert = prune(g, D, delta)
    return _record(_cert_checks(cert.checks), I=list(cert.I), N=N)


def trial_layers(p, rng):
    N, m, n = p["N"], p["m"], p["n"]
    S = random_cone(m, n, N, rng, rotate=False)
    cert = layer_subdivide(GapMatrix.from_cone(S), p["delta"])
    return _record(_cert_checks(cert.checks), kappa=cert.kappa, N=N)


def _points(p, rng):
    return rng.random((p["N"], p["n"]))


def trial_clusters1(p, rng):
    P = _points(p, rng)
    sel, cert = cluster_comparable(P, p["delta_bar"])
    return _record(_cert_checks(cert.checks), selected=list(sel))


def trial_clusters2(p, rng):
    P = _points(p, rng)
    sel, cert = cluster_refine(P, p["delta"], p["eps"])
    return _record(_cert_checks(cert.checks), selected=list(sel))


def trial_clusters3(p, rng):
    P = _points(p, rng)
    A, B, cert = cluster_split(P)
    D = np.linalg.norm(P[:, None] - P[None], axis=-1)
    diam = D.max()
    cross = D[np.ix_(A, B)].min()
    checks = _cert_checks(cert.checks)
    checks["exact"] = (diam / 2.0 ** (len(P) - 2), cross, diam / 2.0 ** (len(P) - 2) <= cross)
    return _record(checks, parts=[list(A), list(B)])


def _random_pair(p, rng):
    k = p["ambient"]
    d = int(rng.integers(1, k))
    return random_subspace(k, d, rng), random_subspace(k, d, rng)


def trial_angles(p, rng):
    a, b = _random_pair(p, rng)
    ours = morgan_angles(a, b).angles
    oracle = np.sort(_brute_angles(a, b))[::-1][: len(ours)][::-1]
    err = float(np.max(np.abs(np.asarray(ours) - oracle))) if len(ours) else 0.0
    sym = morgan_angles(b, a).angles
    sym_err = float(np.max(np.abs(np.asarray(ours) - np.asarray(sym)))) if len(ours) == len(sym) and len(ours) else 0.0
    return _record({"oracle": (err, 1e-8, err <= 1e-8),
                    "symmetry": (sym_err, 1e-9, len(ours) == len(sym) and sym_err <= 1e-9)})


def trial_rotation(p, rng):
    k = p["ambient"]
    d = int(rng.integers(1, k))
    a = random_subspace(k, d, rng)
    b = random_subspace(k, d, rng)
    R = canonical_rotation(a, b)
    Rinv = canonical_rotation(b, a)
    I = np.eye(k)
    orth = float(np.abs(R @ R.T - I).max())
    det = abs(float(np.linalg.det(R)) - 1.0)
    maps = float(b.perp_norm((R @ a.frame).T).max())
    inv = float(np.abs(R @ Rinv - I).max())
    A, B = a.frame, b.frame
    U, s, Vt = np.linalg.svd(A.T @ B)
    common = A @ U[:, s > 1 - 1e-12]
    fixed = float(np.abs(R @ common - common).max()) if common.size else 0.0
    return _record({"orthogonal": (orth, 1e-9, orth <= 1e-9), "det": (det, 1e-9, det <= 1e-9),
                    "maps": (maps, 1e-9, maps <= 1e-9), "inverse": (inv, 1e-9, inv <= 1e-9),
                    "fixed": (fixed, 1e-9, fixed <= 1e-9)})


def trial_hausdorff(p, rng):
    a, b = _random_pair(p, rng)
    h = unit_ball_hausdorff(a, b)
    th = morgan_angles(a, b)
    ident = abs(h - math.sin(th.max))
    proj = abs(h - float(np.linalg.norm(a.projector - b.projector, 2)))
    return _record({"identity": (ident, 1e-9, ident <= 1e-9),
                    "projector": (proj, 1e-9, proj <= 1e-9)})


def trial_sandwich(p, rng):
    m, n = p["m"], p["n"]
    L1, L2 = _rank2_pair(rng, m, n, p["size"])
    s1, s2 = half_difference_singular_values(L1, L2)
    th = morgan_angles(graph_subspace(L1), graph_subspace(L2)).angles
    checks = {}
    for i, (s, t) in enumerate(zip((s1, s2), th), start=1):
        checks[f"lower_{i}"] = (s / 4, t, s / 4 <= t)
        checks[f"upper_{i}"] = (t, 4 * s, t <= 4 * s)
    checks["count"] = (len(th), 2, len(th) == 2)
    return _record(checks)


def trial_sep_region(p, rng):
    m, n, N = p["m"], p["n"], p["N"]
    a = random_subspace(m + n, m, rng)
    betas = [random_subspace(m + n, m, rng) for _ in range(N)]
    reg = separated_region(a, betas, grid=p["resolution"])
    ratio = reg.check(a, betas, samples=1000, rng=rng)
    return _record({"separation": (1.0, ratio, ratio >= 1.0 - 1e-12)},
                   constant=reg.c, guaranteed=reg.c_guaranteed)


def trial_spine(p, rng):
    S = random_balanced_cone(p["m"], p["n"], p["N"], p["M"], rng)
    k = S.ambient_dim
    f = spine_linear_model(S)
    y, _ = _ascend(f, rng.standard_normal((256, k * (k - 1) // 2)), rng)
    K = _skew(y[None], k)[0]
    K /= np.linalg.norm(K)
    S2 = rotate_cone(S, expm(p["eta"] * K))
    lhs, rhs = spine_gap_ratio(S, S2, M=p["M"], resolution=p["resolution"])
    c = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return _record({}, ok=math.isfinite(c), constant=c, lhs=lhs, rhs_core=rhs)


def trial_maximizer(p, rng):
    S = random_balanced_cone(p["m"], p["n"], p["N"], p["M"], rng)
    u, _ = _adversarial_direction(S, rng)
    q = u * 0.5 * rng.random() ** (1.0 / S.ambient_dim)
    lhs, top, first = maximizer_sides(S, q)
    c = lhs / top if top > 0 else 0.0
    return _record({"ordering": (first, top, first <= top)}, constant=c)


def trial_shift(p, rng):
    S = random_balanced_cone(p["m"], p["n"], p["N"], p["M"], rng)
    u, _ = _adversarial_direction(S, rng)
    q = u * 0.5 * rng.random() ** (1.0 / S.ambient_dim)
    rep = shift_lower_bound(S, q, samples=p["samples"], candidates=(), target_fraction=p["fraction"],
                            M=p["M"], seed=int(rng.integers(2 ** 31)))
    c = rep.calibrated_C
    return _record({}, ok=math.isfinite(c), constant=c, plane=rep.calibrated_plane)


def trial_excess_scaling(p, rng):
    m, n, N = p["m"], p["n"], p["N"]
    S = random_cone(m, n, N, rng) if N > 1 else _single_plane_cone(m, n, rng)
    T = synth_cone_sample(S, p["h"], p["noise"], density=p["density"], rho=0.0,
                          seed=int(rng.integers(2 ** 31)))
    q = 0.3 * rng.standard_normal(S.ambient_dim)
    r = float(rng.uniform(0.2, 2.0))
    b, b1 = Ball(q, r), Ball(np.zeros(S.ambient_dim), 1.0)
    T1, S1 = rescale(T, q, r), S.rescale(q, r)
    e0, e1 = one_sided_excess(T, S, b), one_sided_excess(T1, S1, b1)
    f0 = two_sided_excess(T, S, b, p["a"], p["resolution"])
    f1 = two_sided_excess(T1, S1, b1, p["a"], p["resolution"])
    d1 = abs(e0 - e1) / max(abs(e0), abs(e1), 1e-300)
    d2 = abs(f0 - f1) / max(abs(f0), abs(f1), 1e-300)
    return _record({"one_sided": (d1, 1e-10, d1 <= 1e-10), "two_sided": (d2, 1e-10, d2 <= 1e-10)},
                   constant=max(d1, d2))


def _single_plane_cone(m, n, rng):
    a = random_subspace(m + n, m, rng)
    spine = Subspace(a.frame[:, : m - 2]) if m > 2 else Subspace.zero(m + n)
    return PlaneCone(spine, (a,))


def trial_whitney(p, rng, trial=0):
    m, depth = p["m"], p["depth"]
    ell = trial % (depth + 1)
    count = len(cubes_at_generation(ell, m)) if ell * (m - 2) <= 18 else None
    checks = {}
    if count is not None:
        checks["count"] = (count, 2 ** (ell * (m - 2)), count == 2 ** (ell * (m - 2)))
        total = generation_measure_sum(ell, m)
        checks["measure"] = (float(total), 1.0, total == 1)
    K = depth + 2
    npts = p["points"]
    A = rng.integers(-2 ** K, 2 ** K + 1, (npts, m - 2))
    B = rng.integers(1, 4 ** K + 1, npts)
    B[: npts // 4] = 4 ** rng.integers(0, K + 1, npts // 4)
    closed, opened = dyadic_region_counts(A, B, K, m)
    checks["covered"] = (1, int(closed.min()), bool(closed.min() >= 1))
    checks["disjoint"] = (int(opened.max()), 1, bool(opened.max() <= 1))
    table = {}
    thresh = rng.random(3)

    def oracle(L, k):
        key = (L, k)
        if key not in table:
            table[key] = float(rng.random() < thresh[k]) * 10.0
        return table[key]

    labels = classify_cubes(oracle, [1.0, 1.0, 1.0], 1.0, min(depth, 4), m)
    bad = check_ancestry(labels)
    checks["ancestry"] = (len(bad), 0, not bad)
    return _record(checks, generation=ell)


def trial_planar_opt(p, rng):
    m, n = p["m"], p["n"]
    k = m + n
    base = random_subspace(k, m, rng)
    K = 300
    pts = rng.standard_normal((K, m)) @ base.frame.T * 0.5 + 0.05 * rng.standard_normal((K, k))
    T = SampledCurrent(pts, rng.random(K), m)
    b = Ball(np.zeros(k), 1.0)
    val, _ = planar_excess(T, b, m)
    inside = b.contains(T.points)
    X, w = T.points[inside], T.weights[inside]
    # competitor planes through the centre: |x|^2 - |F^T x|^2 summed directly
    frames, _ = np.linalg.qr(rng.standard_normal((p["planes"], k, m)))
    res = np.einsum("j,j->", w, np.einsum("ja,ja->j", X, X)) - np.einsum(
        "j,pjc->p", w, np.einsum("ja,pac->pjc", X, frames) ** 2)
    worst = float(res.min()) - val
    return _record({"optimal": (-worst, 1e-12, worst >= -1e-12)}, constant=worst)


TRIALS = {
    "prune": trial_prune, "layers": trial_layers, "clusters1": trial_clusters1,
    "clusters2": trial_clusters2, "clusters3": trial_clusters3, "angles": trial_angles,
    "rotation": trial_rotation, "hausdorff": trial_hausdorff, "sandwich": trial_sandwich,
    "sep-region": trial_sep_region, "spine": trial_spine, "shift": trial_shift,
    "maximizer": trial_maximizer, "excess-scaling": trial_excess_scaling,
    "whitney": trial_whitney, "planar-opt": trial_planar_opt,
}


# --------------------------------------------------------------------------
# runner


def run_trial(lemma, params, seed, t):
    rng = trial_rng(seed, t)
    drawn = {k: Range(v).draw(rng) for k, v in sorted(params.items())}
    try:
        if lemma == "whitney":
            rec = trial_whitney(drawn, rng, t)
        else:
            rec = TRIALS[lemma](drawn, rng)
    except (ConekitError, RuntimeError, np.linalg.LinAlgError) as exc:
        rec = {"ok": False, "margin": None, "error": f"{type(exc).__name__}: {exc}"}
    rec["trial"] = t
    rec["params"] = drawn
    return rec


def _run_chunk(args):
    lemma, params, seed, ts = args
    return [run_trial(lemma, params, seed, t) for t in ts]


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("CONEKIT_THREADS", "1") or 1)
    return max(1, int(threads))


def run_campaign(lemma, trials, seed, params=None, threads=None):
    """Run a campaign and return its report (a JSON-serializable dict)."""
    if trials < 1:
        raise InvalidInput("trial count must be at least 1")
    params = resolve_params(lemma, params)
    threads = _threads(threads)
    start = time.perf_counter()
    if threads == 1:
        records = _run_chunk((lemma, params, seed, range(trials)))
    else:
        chunks = [list(range(i, trials, threads)) for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(_run_chunk, [(lemma, params, seed, c) for c in chunks if c])
            records = list(itertools.chain.from_iterable(parts))
    records.sort(key=lambda r: r["trial"])
    report = {
        "lemma": lemma, "trials": trials, "seed": seed, "params": params,
        "version": __version__, "records": records, "aggregate": aggregate(lemma, records),
    }
    report["digest"] = report_digest(report)
    report["wall_clock"] = time.perf_counter() - start
    return report


def aggregate(lemma, records):
    passed = sum(1 for r in records if r["ok"])
    margins = [r["margin"] for r in records if r.get("margin") is not None]
    agg = {"passed": passed, "failed": len(records) - passed,
           "worst_margin": min(margins) if margins else None,
           "errors": sum(1 for r in records if "error" in r)}
    consts = [r["constant"] for r in records if r.get("constant") is not None]
    if consts:
        agg["constant_max"] = max(consts)
        agg["constant_min"] = min(consts)
        agg["constant_median"] = float(np.median(consts))
    if lemma in CALIBRATION:
        agg["calibrated_constant"] = agg.get("constant_max")
    return agg


def report_digest(report):
    body = {k: v for k, v in report.items() if k not in ("wall_clock", "digest")}
    text = json.dumps(body, sort_keys=True, default=float)
    return hashlib.sha256(text.encode()).hexdigest()


def summary_line(report):
    agg = report["aggregate"]
    wm = agg["worst_margin"]
    wm_text = "nan" if wm is None else f"{wm:.6g}"
    return f"{report['lemma']} {agg['passed']}/{report['trials']} {wm_text} {report['seed']}"


def write_csv(report, fh):
    """One row per trial: trial, ok, margin, constant, then drawn parameters."""
    keys = sorted(report["params"])
    fh.write(",".join(["trial", "ok", "margin", "constant"] + keys) + "\n")
    for r in report["records"]:
        row = [r["trial"], int(r["ok"]), "" if r.get("margin") is None else repr(r["margin"]),
               "" if r.get("constant") is None else repr(r["constant"])]
        row += [r["params"].get(k, "") for k in keys]
        fh.write(",".join(str(v) for v in row) + "\n")
