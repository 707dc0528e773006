"""Unions of m-planes through a common (m-2)-dimensional spine.

Besides the :class:`PlaneCone` container this module holds the pairwise gap
machinery (``sigma``, ``mu``, balancedness), the pruning and layering
algorithms on a :class:`GapMatrix`, and the quantities entering the
separated-region, spine-alignment and shifting estimates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.linalg import expm
from scipy.stats import qmc

from .errors import (DimensionMismatch, HypothesisViolated, InvalidInput,
                     SinglePlane)
from .planes import (AffinePlane, Subspace, graph_subspace,
                     morgan_angles, orthonormalize, unit_ball_hausdorff)

REL_SLACK = 1e-12


def _le(a, b):
    return a <= b + REL_SLACK * max(abs(a), abs(b))


def _eq(a, b):
    return abs(a - b) <= REL_SLACK * max(abs(a), abs(b))


def _intersection_dim(A, B, tol=1e-10):
    s = np.linalg.svd(np.column_stack([A, B]), compute_uv=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return A.shape[1] + B.shape[1] - rank


@dataclass(frozen=True)
class PlaneCone:
    """``offset + (alpha_1 u ... u alpha_N)`` with all planes containing ``spine``.

    Attributes
    ----------
    spine : Subspace
        The common ``(m-2)``-dimensional subspace ``V``.
    planes : tuple of Subspace
        ``N`` distinct ``m``-dimensional subspaces, pairwise meeting in ``V``.
    capacity : int
        Upper bound ``Q`` on ``N``.
    offset : ndarray
        Apex translation (kept orthogonal to ``V``); zero for a linear cone.
    """

    spine: Subspace
    planes: tuple
    capacity: int = None
    offset: np.ndarray = None

    def __post_init__(self):
        planes = tuple(self.planes)
        if not planes:
            raise InvalidInput("a cone needs at least one plane")
        k, m = planes[0].ambient_dim, planes[0].dim
        for p in planes:
            if p.ambient_dim != k or p.dim != m:
                raise DimensionMismatch("all planes must share ambient dimension and dimension")
        if self.spine.ambient_dim != k or self.spine.dim != m - 2:
            raise DimensionMismatch("spine must be an (m-2)-dimensional subspace")
        Q = len(planes) if self.capacity is None else int(self.capacity)
        if len(planes) > Q:
            raise InvalidInput(f"{len(planes)} planes exceed capacity {Q}")
        for i, p in enumerate(planes):
            if self.spine.dim and np.max(p.perp_norm(self.spine.frame.T)) > 1e-10:
                raise InvalidInput(f"spine is not contained in plane {i}")
        for i in range(len(planes)):
            for j in range(i + 1, len(planes)):
                if unit_ball_hausdorff(planes[i], planes[j]) <= 1e-10:
                    raise InvalidInput(f"planes {i} and {j} coincide")
                if _intersection_dim(planes[i].frame, planes[j].frame) != m - 2:
                    raise InvalidInput(f"planes {i} and {j} do not meet exactly in the spine")
        off = np.zeros(k) if self.offset is None else np.asarray(self.offset, float).reshape(-1)
        if off.shape[0] != k:
            raise DimensionMismatch("offset has the wrong length")
        off = off - self.spine.frame @ (self.spine.frame.T @ off)
        off.setflags(write=False)
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "capacity", Q)
        object.__setattr__(self, "offset", off)

    @classmethod
    def from_planes(cls, planes, capacity=None, spine=None, offset=None):
        """Build a cone, computing the spine as the intersection of the first two planes."""
        planes = tuple(planes)
        if spine is None:
            if len(planes) < 2:
                raise InvalidInput("a one-plane cone needs an explicit spine")
            A, B = planes[0].frame, planes[1].frame
            U, s, _ = np.linalg.svd(A.T @ B)
            m = A.shape[1]
            spine = Subspace.span(A @ U[:, : m - 2], ambient=A.shape[0])
        return cls(spine, planes, capacity, offset)

    @property
    def ambient_dim(self):
        return self.spine.ambient_dim

    @property
    def m(self):
        return self.planes[0].dim

    @property
    def n(self):
        return self.ambient_dim - self.m

    @property
    def N(self):
        return len(self.planes)

    @property
    def is_linear(self):
        return not np.any(self.offset)

    def subcone(self, indices):
        return PlaneCone(self.spine, tuple(self.planes[i] for i in indices),
                         self.capacity, self.offset)

    def affine_planes(self):
        return [AffinePlane(p, self.offset) for p in self.planes]

    def distance(self, points):
        """Distance of each point (row) to the cone."""
        P = np.atleast_2d(np.asarray(points, float)) - self.offset
        return np.min([p.perp_norm(P) for p in self.planes], axis=0)

    def spine_distance(self, points):
        P = np.atleast_2d(np.asarray(points, float)) - self.offset
        return self.spine.perp_norm(P)

    def rescale(self, q, r):
        """Image of the cone under ``x -> (x - q) / r``."""
        if not r > 0:
            raise InvalidInput("r must be positive")
        return PlaneCone(self.spine, self.planes, self.capacity,
                         (self.offset - np.asarray(q, float)) / r)

    def normal_part(self, i):
        """``alpha_i & V_perp`` (2-dimensional)."""
        F = self.planes[i].frame
        F = F - self.spine.frame @ (self.spine.frame.T @ F)
        return Subspace(orthonormalize(F))

    def to_dict(self):
        d = {"m": self.m, "ambient": self.ambient_dim, "Q": self.capacity,
             "spine": self.spine.to_dict(),
             "planes": [p.to_dict() for p in self.planes]}
        if not self.is_linear:
            d["offset"] = self.offset.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        planes = [Subspace.from_dict(p) for p in d["planes"]]
        spine = Subspace.from_dict(d["spine"])
        cone = cls(spine, tuple(planes), d.get("Q"), d.get("offset"))
        if cone.m != int(d["m"]) or cone.ambient_dim != int(d["ambient"]):
            raise InvalidInput("cone header does not match its planes")
        return cone

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# constructors


def isoclinic_cone(m, n, phases, capacity=None):
    """Cone whose planes ``V + span(cos t e_a + sin t e_c, cos t e_b + sin t e_d)``.

    Planes with phases ``t_i, t_j`` have both Morgan angles equal to
    ``|t_i - t_j|`` (for differences up to ``pi/2``).  Needs ``n >= 2``.
    """
    if n < 2:
        raise InvalidInput("isoclinic planes need n >= 2")
    k = m + n
    spine = Subspace.coordinate(k, list(range(m - 2)))
    a, b, c, d = m - 2, m - 1, m, m + 1
    planes = []
    for t in phases:
        F = np.zeros((k, m))
        for j in range(m - 2):
            F[j, j] = 1.0
        F[a, m - 2], F[c, m - 2] = math.cos(t), math.sin(t)
        F[b, m - 1], F[d, m - 1] = math.cos(t), math.sin(t)
        planes.append(Subspace(F))
    return PlaneCone(spine, tuple(planes), capacity)


def graph_cone(maps, capacity=None):
    """Cone of graphs of linear maps ``R^m -> R^n`` vanishing on the last ``m-2`` axes.

    Each entry of ``maps`` is an ``(n, 2)`` matrix acting on the first two
    coordinates; the spine is spanned by the remaining ``m-2`` domain axes.
    """
    maps = [np.atleast_2d(np.asarray(L, float)) for L in maps]
    n = maps[0].shape[0]
    m_extra = None
    planes = []
    for L in maps:
        if L.shape[1] != 2 or L.shape[0] != n:
            raise DimensionMismatch("each map must be an (n, 2) matrix")
        planes.append(L)
    return _graph_cone_dim(planes, n, capacity, m_extra)


def _graph_cone_dim(blocks, n, capacity, m):
    m = 2 if m is None else m
    k = m + n
    spine = Subspace.coordinate(k, list(range(2, m)))
    planes = []
    for L in blocks:
        full = np.zeros((n, m))
        full[:, :2] = L
        planes.append(graph_subspace(full))
    return PlaneCone(spine, tuple(planes), capacity)


def graph_cone_m(m, blocks, capacity=None):
    """Like :func:`graph_cone` but in dimension ``m`` (blocks are ``(n, 2)``)."""
    blocks = [np.atleast_2d(np.asarray(L, float)) for L in blocks]
    return _graph_cone_dim(blocks, blocks[0].shape[0], capacity, m)


def rotate_cone(cone, R):
    """Image of the cone under an orthogonal map ``R``."""
    spine = Subspace(orthonormalize(R @ cone.spine.frame)) if cone.spine.dim else cone.spine
    planes = tuple(Subspace(orthonormalize(R @ p.frame)) for p in cone.planes)
    return PlaneCone(spine, planes, cone.capacity, R @ cone.offset)


def haar_orthogonal(k, rng):
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_cone(m, n, N, rng, spread=3.0, capacity=None, rotate=True):
    """Random cone with gaps spread over ``spread`` decades.

    Planes are graphs over a common base plane, grouped around a few random
    centres with log-uniform offsets, then moved by a Haar rotation.
    """
    n_centres = int(rng.integers(1, N + 1))
    centres = rng.standard_normal((n_centres, n, 2)) * 0.5
    blocks = []
    for i in range(N):
        c = centres[int(rng.integers(n_centres))]
        blocks.append(c + 10.0 ** (-spread * rng.random()) * rng.standard_normal((n, 2)))
    cone = graph_cone_m(m, blocks, capacity)
    if rotate:
        cone = rotate_cone(cone, haar_orthogonal(m + n, rng))
    return cone


def random_balanced_cone(m, n, N, M, rng, size=0.3, capacity=None, max_tries=1000):
    """Random ``M``-balanced cone (rejection sampling around conformal graphs)."""
    if n < 2:
        raise InvalidInput("balanced cones are generated for n >= 2")
    for _ in range(max_tries):
        blocks = []
        for _i in range(N):
            z = size * (rng.standard_normal() + 1j * rng.standard_normal())
            conf = np.array([[z.real, -z.imag], [z.imag, z.real]])
            L = np.zeros((n, 2))
            L[:2] = conf
            L += 0.3 * size * rng.standard_normal((n, 2))
            blocks.append(L)
        try:
            cone = graph_cone_m(m, blocks, capacity)
        except InvalidInput:
            continue
        if is_balanced(cone, M)[0]:
            return rotate_cone(cone, haar_orthogonal(m + n, rng))
    raise RuntimeError("could not generate a balanced cone")


# --------------------------------------------------------------------------
# gaps


class GapMatrix:
    """Symmetric matrix of pairwise unit-ball Hausdorff distances."""

    def __init__(self, values, check=True):
        g = np.array(values, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise InvalidInput("gap matrix must be square")
        if check:
            self._validate(g)
        g.setflags(write=False)
        self.values = g

    @staticmethod
    def _validate(g):
        N = g.shape[0]
        if not np.allclose(g, g.T, rtol=0, atol=1e-15 * max(1.0, np.abs(g).max())):
            raise InvalidInput("gap matrix is not symmetric")
        if np.any(np.diag(g) != 0.0):
            raise InvalidInput("gap matrix diagonal must vanish")
        off = g[~np.eye(N, dtype=bool)]
        if np.any(off <= 0.0):
            raise InvalidInput("off-diagonal gaps must be positive")
        tol = 1e-12 * max(1.0, g.max())
        # g_ik <= g_ij + g_jk for all i, j, k
        viol = g[:, None, :] - (g[:, :, None] + g[None, :, :])
        if N > 2 and viol.max() > tol:
            raise InvalidInput("gap matrix violates the triangle inequality")

    @classmethod
    def from_cone(cls, cone):
        N = cone.N
        g = np.zeros((N, N))
        for i in range(N):
            for j in range(i + 1, N):
                g[i, j] = g[j, i] = unit_ball_hausdorff(cone.planes[i], cone.planes[j])
        return cls(g)

    @property
    def N(self):
        return self.values.shape[0]

    def sub(self, idx):
        return self.values[np.ix_(idx, idx)]

    def max_over(self, idx):
        if len(idx) < 2:
            return 0.0
        s = self.sub(idx)
        return float(s[np.triu_indices(len(idx), 1)].max())

    def min_over(self, idx):
        if len(idx) < 2:
            return math.inf
        s = self.sub(idx)
        return float(s[np.triu_indices(len(idx), 1)].min())

    def reach(self, idx, rows=None):
        """``max_{j in rows} min_{i in idx} g_ij`` (``rows`` defaults to everything)."""
        rows = range(self.N) if rows is None else rows
        return float(self.values[np.ix_(list(rows), list(idx))].min(axis=1).max())

    def to_list(self):
        return self.values.tolist()

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls(json.load(fh))


def sigma(cone):
    """Minimal pairwise unit-ball Hausdorff distance between the planes."""
    if cone.N < 2:
        raise SinglePlane("sigma needs at least two planes")
    g = GapMatrix.from_cone(cone)
    return g.min_over(list(range(cone.N)))


def mu(cone):
    """Maximal pairwise unit-ball Hausdorff distance between the planes."""
    if cone.N < 2:
        raise SinglePlane("mu needs at least two planes")
    g = GapMatrix.from_cone(cone)
    return g.max_over(list(range(cone.N)))


def is_balanced(cone, M):
    """Whether ``theta_2 <= M theta_1`` for every pair of planes.

    Returns
    -------
    balanced : bool
    worst_ratio : float
        Largest ``theta_2 / theta_1`` over all pairs (1 for a single plane).
    """
    worst = 1.0
    ok = True
    for i in range(cone.N):
        for j in range(i + 1, cone.N):
            th = morgan_angles(cone.planes[i], cone.planes[j]).angles
            if len(th) != 2:
                # the cone invariant guarantees two angles; be loud otherwise
                raise InvalidInput(f"planes {i}, {j} have {len(th)} Morgan angles, expected 2")
            worst = max(worst, th[1] / th[0])
            ok = ok and bool(th[1] <= M * th[0] + 1e-12)
    return ok, float(worst)


# --------------------------------------------------------------------------
# pruning and layers


@dataclass
class PruneCertificate:
    I: tuple
    Gamma: float
    eps: float
    D: float
    delta: float
    removed: tuple
    checks: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(c["ok"] for c in self.checks.values())

    def as_dict(self, one_based=False):
        shift = 1 if one_based else 0
        return {"I": [i + shift for i in self.I], "Gamma": self.Gamma, "eps": self.eps,
                "D": self.D, "delta": self.delta,
                "removed": [i + shift for i in self.removed],
                "checks": self.checks, "ok": self.ok}


def pruning_constants(N, delta):
    """``(Gamma, eps)`` with ``Gamma = delta**(2-N) (N-1)!`` and ``eps = delta / (1 + Gamma)``."""
    Gamma = delta ** (2 - N) * math.factorial(N - 1)
    return Gamma, delta / (1.0 + Gamma)


def _check(lhs, rhs, kind="le"):
    ok = _le(lhs, rhs) if kind == "le" else _eq(lhs, rhs)
    return {"lhs": float(lhs), "rhs": float(rhs), "ok": bool(ok)}


def _first_extreme_pair(g, idx, largest):
    sub = g[np.ix_(idx, idx)]
    iu = np.triu_indices(len(idx), 1)
    vals = sub[iu]
    target = vals.max() if largest else vals.min()
    hits = np.flatnonzero(np.abs(vals - target) <= REL_SLACK * target)
    return [(idx[iu[0][k]], idx[iu[1][k]]) for k in hits]


def prune(gaps, D, delta):
    """Discard planes until the surviving gaps dominate the scale ``D``.

    While ``|I| >= 3`` and ``D + max_j min_{i in I} g_ij > delta min_{I} g``,
    drop one index of a closest pair that does not belong to the first
    farthest pair (lowest index among such candidates).

    Parameters
    ----------
    gaps : GapMatrix or array-like
    D : float
        Nonnegative scale, at most ``eps * max g`` with
        ``eps = delta / (1 + Gamma)``, ``Gamma = delta**(2-N) (N-1)!``.
    delta : float
        In ``(0, 1]``.

    Returns
    -------
    PruneCertificate
        ``checks`` holds both sides of the three conclusions
        ``reach <= Gamma D``, ``D + reach <= delta min_I g`` and
        ``max_I g == max g``.

    Raises
    ------
    HypothesisViolated
        If ``D > eps * max g``.
    """
    g = gaps if isinstance(gaps, GapMatrix) else GapMatrix(gaps)
    N = g.N
    if N < 2:
        raise SinglePlane("pruning needs at least two planes")
    if not 0.0 < delta <= 1.0:
        raise InvalidInput("delta must lie in (0, 1]")
    if not D >= 0.0:
        raise InvalidInput("D must be nonnegative")
    Gamma, eps = pruning_constants(N, delta)
    everything = list(range(N))
    top = g.max_over(everything)
    if not _le(D, eps * top):
        raise HypothesisViolated(f"D = {D:.6g} exceeds eps * max gap = {eps * top:.6g}")

    I = list(everything)
    removed = []
    vals = g.values
    while len(I) >= 3 and not _le(D + g.reach(I), delta * g.min_over(I)):
        far = set(_first_extreme_pair(vals, I, largest=True)[0])
        candidates = set()
        for pair in _first_extreme_pair(vals, I, largest=False):
            if set(pair) != far:
                candidates |= set(pair) - far
        drop = min(candidates)
        I.remove(drop)
        removed.append(drop)

    reach = g.reach(I)
    checks = {
        "pruning_1": _check(reach, Gamma * D),
        "pruning_2": _check(D + reach, delta * g.min_over(I)),
        "pruning_3": _check(g.max_over(I), top, kind="eq"),
        "size": {"lhs": 2, "rhs": len(I), "ok": len(I) >= 2},
    }
    return PruneCertificate(tuple(I), Gamma, eps, float(D), float(delta), tuple(removed), checks)


@dataclass
class LayerCertificate:
    chain: list
    m: list
    d: list
    M: list
    eta: float
    delta: float
    checks: dict = field(default_factory=dict)

    @property
    def kappa(self):
        return len(self.chain) - 1

    @property
    def ok(self):
        return all(c["ok"] for c in self.checks.values())

    def as_dict(self, one_based=False):
        shift = 1 if one_based else 0
        return {"chain": [[i + shift for i in I] for I in self.chain], "m": self.m,
                "d": self.d, "M": self.M, "eta": self.eta, "delta": self.delta,
                "kappa": self.kappa, "checks": self.checks, "ok": self.ok}


def layer_eta(N, delta):
    """Largest ``eta`` with ``eta <= eps(delta/N)`` and ``N eta <= 1/Gamma(delta/N)``."""
    Gamma, eps = pruning_constants(N, delta / N)
    return min(eps, 1.0 / (N * Gamma))


def layer_subdivide(gaps, delta, eta=None):
    """Nested index sets ``I(0) > I(1) > ... > I(kappa)`` with separated gap scales.

    ``I(s)`` is obtained by pruning ``I(s-1)`` at ``D = m(s-1)`` with parameter
    ``delta / N``, for as long as ``eta M(s-1) > m(s-1)``.

    Returns
    -------
    LayerCertificate
        Per layer ``m(s)`` (min gap), ``d(s)`` (reach of ``I(s)`` from all
        indices), ``M(s)`` (max gap), and checks of ``M(kappa) = M(0)``,
        ``eta M(kappa) <= m(kappa)``, ``d(s) <= delta m(s)``,
        ``eta d(s) <= m(s-1)``, ``m(s-1) <= delta m(s)``.
    """
    g = gaps if isinstance(gaps, GapMatrix) else GapMatrix(gaps)
    N = g.N
    if N < 2:
        raise SinglePlane("layering needs at least two planes")
    if not 0.0 < delta <= 1.0:
        raise InvalidInput("delta must lie in (0, 1]")
    eta = layer_eta(N, delta) if eta is None else float(eta)
    chain = [list(range(N))]
    while not _le(eta * g.max_over(chain[-1]), g.min_over(chain[-1])):
        prev = chain[-1]
        cert = prune(g.sub(prev), g.min_over(prev), delta / N)
        chain.append([prev[i] for i in cert.I])

    ms = [g.min_over(I) for I in chain]
    Ms = [g.max_over(I) for I in chain]
    ds = [g.reach(I) for I in chain]
    checks = {
        "i": _check(Ms[-1], Ms[0], kind="eq"),
        "ii": _check(eta * Ms[-1], ms[-1]),
    }
    for s in range(1, len(chain)):
        checks[f"strict_{s}"] = {"lhs": len(chain[s]), "rhs": len(chain[s - 1]),
                                 "ok": set(chain[s]) < set(chain[s - 1]) and len(chain[s]) >= 2}
        checks[f"iii_a_{s}"] = _check(ds[s], delta * ms[s])
        checks[f"iii_b_{s}"] = _check(eta * ds[s], ms[s - 1])
        checks[f"iv_{s}"] = _check(ms[s - 1], delta * ms[s])
        checks[f"M_{s}"] = _check(Ms[s], Ms[0], kind="eq")
    return LayerCertificate([tuple(I) for I in chain], ms, ds, Ms, eta, delta, checks)


def layer_separations(cert, delta_bar):
    """Layers and separations ``s(k)``, adding a one-plane layer when the last is narrow.

    If ``M(kappa) < delta_bar`` a final layer made of ``min I(kappa)`` is
    appended; one-plane layers get ``s(k) = delta_bar``.
    """
    layers = [tuple(I) for I in cert.chain]
    seps = list(cert.m)
    if cert.M[-1] < delta_bar:
        layers.append((min(layers[-1]),))
        seps.append(delta_bar)
    return layers, seps


def prune_cone(cone, D, delta):
    return prune(GapMatrix.from_cone(cone), D, delta)


def layer_cone(cone, delta, eta=None):
    return layer_subdivide(GapMatrix.from_cone(cone), delta, eta)


# --------------------------------------------------------------------------
# sampling helpers


@lru_cache(maxsize=64)
def _sphere_points_cached(dim, count, seed):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        t = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    u = qmc.Sobol(d=dim, scramble=True, seed=seed).random(count)
    z = stats.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sphere_points(dim, count, seed=0):
    """Deterministic low-discrepancy points on the unit sphere of ``R^dim``."""
    pts = _sphere_points_cached(int(dim), int(count), int(seed))
    return pts


@lru_cache(maxsize=64)
def _ball_points_cached(dim, count, seed):
    """Low-discrepancy points filling the unit ball of ``R^dim``, roughly ``count`` of them."""
    if dim == 0:
        return np.zeros((1, 0))
    vol_ratio = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) / 2.0 ** dim
    n_try = int(2 ** math.ceil(math.log2(max(2, count / vol_ratio))))
    u = qmc.Sobol(d=dim, scramble=True, seed=seed).random(n_try)
    x = 2.0 * u - 1.0
    return x[np.sum(x * x, axis=1) < 1.0]


def ball_points(dim, count, seed=0):
    return _ball_points_cached(int(dim), int(count), int(seed))


def cone_trace_hausdorff(S, T, resolution=4096, seed=0):
    """Hausdorff distance between ``S & B_1`` and ``T & B_1`` for linear cones.

    Exact when both cones are single planes; otherwise the one-sided sups
    are taken over ``resolution`` low-discrepancy directions on each plane's
    unit sphere (the distance to a linear cone is 1-homogeneous, so the sup
    over the ball is reached on the sphere).
    """
    if not (S.is_linear and T.is_linear):
        raise InvalidInput("cone traces are compared for linear cones only")
    if S.N == 1 and T.N == 1:
        return unit_ball_hausdorff(S.planes[0], T.planes[0])
    dirs = sphere_points(S.m, resolution, seed)

    def one_sided(A, B):
        worst = 0.0
        for p in A.planes:
            X = dirs @ p.frame.T
            d = np.min([q.perp_norm(X) for q in B.planes], axis=0)
            worst = max(worst, float(d.max()))
        return worst

    return max(one_sided(S, T), one_sided(T, S))


# --------------------------------------------------------------------------
# separated region


@dataclass
class SeparatedRegion:
    xi: np.ndarray
    c: float
    min_gap: float
    top_directions: np.ndarray
    c_guaranteed: float

    def check(self, alpha, betas, samples=1000, rng=None):
        """Smallest ``min_i dist(zeta, beta_i) / (c * min_gap)`` over sampled ``zeta``."""
        rng = np.random.default_rng(0) if rng is None else rng
        m = alpha.dim
        z = rng.standard_normal((samples, m))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        rad = self.c * rng.random(samples) ** (1.0 / m)
        zeta = self.xi + (z * rad[:, None]) @ alpha.frame.T
        d = np.min([b.perp_norm(zeta) for b in betas], axis=0)
        return float(d.min() / (self.c * self.min_gap))


def separated_region(alpha, betas, grid=4096):
    """A point of ``alpha & dB_{1/2}`` whose ``c``-neighbourhood in ``alpha`` avoids the ``beta_i``.

    With ``e_i`` a top eigenvector of ``dist(., beta_i)**2`` on ``alpha``, the
    point ``xi`` maximizes ``min_i |xi . e_i|`` over a grid of the sphere and
    ``c = min_i |xi . e_i| / 2``; then every ``zeta`` in ``alpha`` with
    ``|zeta - xi| < c`` has ``min_i dist(zeta, beta_i) >= c min_i sin theta_max(alpha, beta_i)``.

    ``c_guaranteed`` is the value that a measure-counting argument secures
    for any family of this size: the band ``|u . e| <= 4c`` of the unit
    sphere has measure fraction below ``1/N``.
    """
    betas = list(betas)
    if not betas:
        raise InvalidInput("need at least one beta")
    tops = []
    gaps = []
    for b in betas:
        if b.ambient_dim != alpha.ambient_dim or b.dim != alpha.dim:
            raise DimensionMismatch("all subspaces must share dimensions")
        gap = unit_ball_hausdorff(alpha, b)
        if gap <= 1e-10:
            raise InvalidInput("some beta coincides with alpha")
        U, s, _ = np.linalg.svd(alpha.frame.T @ b.frame)
        tops.append(alpha.frame @ U[:, -1])
        gaps.append(gap)
    E = np.array(tops)  # (N, ambient)
    m = alpha.dim
    dirs = sphere_points(m, grid)
    cand = 0.5 * dirs @ alpha.frame.T
    score = np.min(np.abs(cand @ E.T), axis=1)
    best = int(np.argmax(score))
    N = len(betas)
    if m == 1:
        guaranteed = 0.25
    else:
        guaranteed = 0.25 * math.sqrt(stats.beta.ppf(1.0 / N, 0.5, (m - 1) / 2.0)) if N > 1 else 0.25 * math.sqrt(stats.beta.ppf(1.0 - 1e-12, 0.5, (m - 1) / 2.0))
    return SeparatedRegion(cand[best], float(score[best] / 2.0), float(min(gaps)), E,
                           float(guaranteed))


def close_to_one_plane_ratio(alpha, cone, resolution=4096):
    """``min_i dist(alpha, beta_i) / dist(alpha & B_1, S & B_1)`` for a linear cone ``S``."""
    single = PlaneCone.from_planes([alpha], spine=_any_subspace_of(alpha, cone.m - 2))
    num = min(unit_ball_hausdorff(alpha, b) for b in cone.planes)
    den = cone_trace_hausdorff(single, cone, resolution)
    return num / den if den > 0 else math.inf


def _any_subspace_of(alpha, d):
    return Subspace(alpha.frame[:, :d]) if d else Subspace.zero(alpha.ambient_dim)


# --------------------------------------------------------------------------
# spine alignment


def spine_gap_ratio(S, S2, M=None, resolution=4096):
    """Both sides of the spine-alignment estimate.

    Returns
    -------
    lhs : float
        ``dist(V(S) & B_1, V(S2) & B_1)``.
    rhs_core : float
        ``dist(S & B_1, S2 & B_1) / min_i dist(S & B_1, alpha_i & B_1)``.
    """
    if S.N < 2 or S2.N < 2:
        raise SinglePlane("spine alignment compares cones with at least two planes")
    if M is not None and not is_balanced(S, M)[0]:
        raise HypothesisViolated(f"first cone is not {M}-balanced")
    if S2 is S or (S.N == S2.N and all(np.array_equal(a.frame, b.frame)
                                       for a, b in zip(S.planes, S2.planes))):
        return 0.0, 0.0
    lhs = unit_ball_hausdorff(S.spine, S2.spine) if S.spine.dim else 0.0
    g = GapMatrix.from_cone(S).values
    # alpha_i is inside S, so dist(S & B_1, alpha_i & B_1) = max_j g_ij
    denom = float(g.max(axis=1).min())
    return lhs, cone_trace_hausdorff(S, S2, resolution) / denom


def small_rotation(k, eta, rng):
    """``expm(eta K)`` for a random unit-Frobenius skew matrix ``K``."""
    A = rng.standard_normal((k, k))
    K = A - A.T
    K /= np.linalg.norm(K)
    return expm(eta * K)


# --------------------------------------------------------------------------
# shifting


@dataclass(frozen=True)
class SpineAnnulus:
    """``{p in B_1 : |p_V p| < spine_radius, inner < |p_{V_perp} p| < outer}``.

    Membership depends only on ``|p_V p|``-coordinates and ``|p_{V_perp} p|``,
    so the region is invariant under rotations fixing ``V``.
    """

    inner: float = 0.25
    outer: float = 0.75
    spine_radius: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.inner < self.outer <= 1.0 or self.spine_radius <= 0.0:
            raise InvalidInput("annulus needs 0 <= inner < outer <= 1 and spine_radius > 0")

    def contains(self, points, spine):
        P = np.atleast_2d(points)
        along = np.linalg.norm(spine.coords(P), axis=1) if spine.dim else np.zeros(len(P))
        radial = spine.perp_norm(P)
        return ((along < self.spine_radius) & (radial > self.inner) & (radial < self.outer)
                & (np.linalg.norm(P, axis=1) < 1.0))


def unit_ball_volume(m):
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0)


def maximizer_sides(S, q):
    """Both sides of the dominant-projection estimate (without ``C_0 M``).

    Returns ``(lhs, max_i |p_{alpha_i}^perp q|, |p_{alpha_1}^perp q|)`` with
    ``lhs = |p_{alpha_1}^perp q| + mu(S) |p_{V_perp & alpha_1} q|``.
    """
    q = np.asarray(q, float)
    perp = np.array([p.perp_norm(q)[0] for p in S.planes])
    par = float(np.linalg.norm(S.normal_part(0).coords(q)))
    lhs = float(perp[0] + mu(S) * par)
    return lhs, float(perp.max()), float(perp[0])


@dataclass
class ShiftReport:
    lhs: float
    fractions: dict
    measures: dict
    plane_for: dict
    calibrated_C: float
    calibrated_plane: int
    target_fraction: float
    maximizer_lhs: float
    maximizer_max_perp: float
    slice_measure: float


def shift_lower_bound(S, q, region=None, samples=10000, candidates=(1.0, 10.0, 100.0),
                      target_fraction=0.05, M=None, seed=0):
    """Sampled check of the shifting lower bound for ``dist(z, q + S)``.

    For each plane ``alpha_j`` the slice ``alpha_j & U`` is sampled uniformly
    (rejection from ``alpha_j & B_1``) and the ratio
    ``lhs / dist(z, q + S)`` is evaluated, with
    ``lhs = |p_{alpha_1}^perp q| + mu(S) |p_{V_perp & alpha_1} q|``.

    Returns
    -------
    ShiftReport
        ``fractions[C]``: largest (over ``j``) sampled fraction of the slice
        on which ``lhs <= C dist(z, q + S)``; ``measures[C]``: the matching
        estimate of the ``H^m`` measure of that set; ``calibrated_C``: the
        smallest ``C`` for which some plane reaches ``target_fraction``.
    """
    q = np.asarray(q, float)
    if np.linalg.norm(q) > 0.5 + 1e-15:
        raise InvalidInput("q must lie in the closed ball of radius 1/2")
    region = SpineAnnulus() if region is None else region
    if not isinstance(region, SpineAnnulus):
        raise InvalidInput("region must be a SpineAnnulus (rotation invariant by construction)")
    if S.N < 2:
        raise SinglePlane("shifting needs at least two planes")
    if M is not None and not is_balanced(S, M)[0]:
        raise HypothesisViolated(f"cone is not {M}-balanced")
    rng = np.random.default_rng(seed)
    lhs, max_perp, _ = maximizer_sides(S, q)
    m = S.m
    z = rng.standard_normal((samples, m))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.random(samples)[:, None] ** (1.0 / m)
    vol = unit_ball_volume(m)

    fractions = {float(C): 0.0 for C in candidates}
    measures = {float(C): 0.0 for C in candidates}
    plane_for = {float(C): 0 for C in candidates}
    best_C, best_j = math.inf, 0
    slice_measure = 0.0
    for j, plane in enumerate(S.planes):
        pts = z @ plane.frame.T
        pts = pts[region.contains(pts, S.spine)]
        if len(pts) == 0:
            continue
        slice_measure = max(slice_measure, vol * len(pts) / samples)
        dist = np.min([p.perp_norm(pts - q) for p in S.planes], axis=0)
        for C in fractions:
            ok = lhs <= C * dist
            frac = float(np.mean(ok))
            if frac > fractions[C]:
                fractions[C] = frac
                measures[C] = vol * float(np.sum(ok)) / samples
                plane_for[C] = j
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, lhs / dist, np.where(lhs > 0, np.inf, 0.0))
        ratio.sort()
        kth = max(0, math.ceil(target_fraction * len(ratio)) - 1)
        if ratio[kth] < best_C:
            best_C, best_j = float(ratio[kth]), j
    return ShiftReport(lhs, fractions, measures, plane_for, best_C, best_j, target_fraction,
                       lhs, max_perp, slice_measure)
