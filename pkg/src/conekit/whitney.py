"""Dyadic Whitney decomposition of a neighbourhood of the spine.

Cubes live in the spine ``V = R^(m-2)`` (coordinates taken in a fixed
orthonormal frame of ``V``).  ``L_0 = [-s, s]^(m-2)`` with ``s = 1/sqrt(m-2)``;
generation ``l`` cubes have side ``2^(1-l) s`` and are indexed by integer
multi-indices.  All combinatorial tests are done with integers or exact
:class:`fractions.Fraction` arithmetic; the irrational factor ``s`` is handled
by comparing squares.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInput
from .planes import Subspace

DEFAULT_RHO_STAR = Fraction(1, 8)


@dataclass(frozen=True, order=True)
class WhitneyCube:
    """Cube of generation ``ell`` with integer multi-index ``index``."""

    ell: int
    index: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.index)
        if self.ell < 0 or not idx:
            raise InvalidInput("need ell >= 0 and a nonempty index")
        if any(not 0 <= i < 2 ** self.ell for i in idx):
            raise InvalidInput("index out of range for this generation")
        object.__setattr__(self, "index", idx)

    @property
    def m(self):
        return len(self.index) + 2

    @property
    def s(self):
        return 1.0 / math.sqrt(self.m - 2)

    @property
    def half_side(self):
        return 2.0 ** (-self.ell) * self.s

    def bounds(self):
        """Exact per-coordinate ``(lo, hi)`` in units of ``s``."""
        w = Fraction(2, 2 ** self.ell)
        return [(-1 + i * w, -1 + (i + 1) * w) for i in self.index]

    def center_units(self):
        return [(lo + hi) / 2 for lo, hi in self.bounds()]

    def center(self):
        """Centre ``y_L`` in spine coordinates."""
        return np.array([float(c) for c in self.center_units()]) * self.s

    def parent(self):
        if self.ell == 0:
            return None
        return WhitneyCube(self.ell - 1, tuple(i // 2 for i in self.index))

    def ancestors(self, include_self=True):
        out = [self] if include_self else []
        L = self.parent()
        while L is not None:
            out.append(L)
            L = L.parent()
        return out

    def children(self):
        return [WhitneyCube(self.ell + 1, tuple(2 * i + b for i, b in zip(self.index, bits)))
                for bits in itertools.product((0, 1), repeat=len(self.index))]

    def intersects(self, other):
        """Whether the closed cubes meet."""
        return all(max(a[0], b[0]) <= min(a[1], b[1])
                   for a, b in zip(self.bounds(), other.bounds()))

    def measure_fraction(self):
        """``H^(m-2)(L) / H^(m-2)(L_0)`` as an exact fraction."""
        return Fraction(1, 2 ** (self.ell * (self.m - 2)))

    def to_dict(self):
        return {"ell": self.ell, "index": list(self.index)}


def root_cube(m):
    if m < 3:
        raise InvalidInput("the Whitney decomposition needs m >= 3")
    return WhitneyCube(0, (0,) * (m - 2))


def cubes_at_generation(ell, m):
    """All ``2^(ell (m-2))`` cubes of generation ``ell``, in lexicographic index order."""
    if m < 3:
        raise InvalidInput("the Whitney decomposition needs m >= 3")
    if ell < 0:
        raise InvalidInput("ell must be nonnegative")
    return [WhitneyCube(ell, idx) for idx in itertools.product(range(2 ** ell), repeat=m - 2)]


def _index_range(lo, hi, ell):
    """Indices at generation ``ell`` of closed intervals meeting ``[lo, hi]`` (units of s)."""
    w = Fraction(2, 2 ** ell)
    first = max(0, math.ceil((lo + 1) / w) - 1)
    last = min(2 ** ell - 1, math.floor((hi + 1) / w))
    return range(first, last + 1)


def cubes_meeting(box, ell):
    """Cubes of generation ``ell`` whose closed cube meets the closed box (units of s)."""
    ranges = [_index_range(lo, hi, ell) for lo, hi in box]
    return [WhitneyCube(ell, idx) for idx in itertools.product(*ranges)]


def neighbors(L, restrict=None):
    """Cubes ``L'`` with ``R(L) & R(L') != {}``: closed cubes meet and ``|ell - ell'| <= 1``.

    ``L`` itself is included.  With ``restrict`` only members of that
    collection are returned.
    """
    out = []
    for ell in (L.ell - 1, L.ell, L.ell + 1):
        if ell < 0:
            continue
        out.extend(cubes_meeting(L.bounds(), ell))
    if restrict is not None:
        keep = set(restrict)
        out = [c for c in out if c in keep]
    return out


# --------------------------------------------------------------------------
# exact point membership


def _sign_vs_scaled(y, c, d):
    """``sign(y - c / sqrt(d))`` exactly, for Fractions ``y``, ``c`` and integer ``d``."""
    if d == 1:
        diff = y - c
        return (diff > 0) - (diff < 0)
    sy, sc = (y > 0) - (y < 0), (c > 0) - (c < 0)
    if sy != sc:
        return 1 if sy > sc else -1
    if sy == 0:
        return 0
    a, b = y * y * d, c * c
    cmp = (a > b) - (a < b)
    return cmp if sy > 0 else -cmp


def spine_coordinates(p, spine):
    """``(y, r2)``: spine coordinates and ``|p_{V_perp} p|^2`` as exact Fractions.

    Exact when ``spine`` is spanned by coordinate axes; otherwise the float
    projection is converted exactly.
    """
    p = np.asarray(p, float).reshape(-1)
    F = spine.frame
    axes = []
    coordinate = np.all((F == 0) | (np.abs(F) == 1)) and np.all(np.abs(F).sum(axis=0) == 1)
    if coordinate:
        for j in range(F.shape[1]):
            a = int(np.flatnonzero(F[:, j])[0])
            axes.append((a, int(np.sign(F[a, j]))))
        y = [Fraction(sgn * p[a]) for a, sgn in axes]
        used = {a for a, _ in axes}
        r2 = sum((Fraction(p[i]) ** 2 for i in range(len(p)) if i not in used), Fraction(0))
        return y, r2
    y = spine.coords(p)[0]
    r2 = float(spine.perp_norm(p)[0] ** 2)
    return [Fraction(v) for v in y], Fraction(r2)


def _coords_in(y, box, d, closed=True):
    for v, (lo, hi) in zip(y, box):
        a, b = _sign_vs_scaled(v, lo, d), _sign_vs_scaled(v, hi, d)
        if closed and (a < 0 or b > 0):
            return False
        if not closed and (a <= 0 or b >= 0):
            return False
    return True


def _scaled_box(L, lam):
    c = L.center_units()
    h = lam * Fraction(1, 2 ** L.ell)
    return [(ci - h, ci + h) for ci in c]


def in_region(y, r2, L, lam=1, closed=True):
    """Exact test of ``(y, r2)`` against ``lam R(L)`` (``R(L)`` for ``lam = 1``).

    ``closed=False`` tests the interior instead.
    """
    lam = Fraction(lam)
    if not 1 <= lam <= Fraction(3, 2):
        raise InvalidInput("lambda must lie in [1, 3/2]")
    d = L.m - 2
    lo2 = Fraction(1, 4 ** (L.ell + 1)) / (lam * lam)
    hi2 = lam * lam * Fraction(1, 4 ** L.ell)
    if closed:
        if not lo2 <= r2 <= hi2:
            return False
    elif not lo2 < r2 < hi2:
        return False
    return _coords_in(y, _scaled_box(L, lam), d, closed)


def region_membership(p, L, lam=1, spine=None):
    """``(p in R(L), p in lam R(L))`` with exact comparisons."""
    spine = default_spine(L.m, len(p)) if spine is None else spine
    y, r2 = spine_coordinates(p, spine)
    return in_region(y, r2, L, 1), in_region(y, r2, L, lam)


def default_spine(m, ambient):
    return Subspace.coordinate(ambient, list(range(m - 2)))


def _generations_for(r2):
    """Generations ``ell`` with ``4^(-ell-1) <= r2 <= 4^(-ell)`` (one or two of them)."""
    if not 0 < r2 <= 1:
        return []
    ell = 0
    while Fraction(1, 4 ** (ell + 1)) > r2:
        ell += 1
    out = [ell]
    if r2 == Fraction(1, 4 ** (ell + 1)):
        out.append(ell + 1)
    return out


def locate(y, r2, m, closed=True):
    """All cubes whose (closed, or open) region contains the point ``(y, r2)``."""
    d = m - 2
    out = []
    for ell in _generations_for(r2):
        ranges = []
        for v in y:
            approx = int(math.floor((float(v) * math.sqrt(d) + 1) * 2 ** (ell - 1)))
            ranges.append([i for i in (approx - 1, approx, approx + 1) if 0 <= i < 2 ** ell])
        for idx in itertools.product(*ranges):
            L = WhitneyCube(ell, idx)
            if in_region(y, r2, L, 1, closed):
                out.append(L)
    return out


def dyadic_region_counts(A, B, K, m):
    """Region counts for dyadic points, in integer arithmetic.

    A point is given by integers ``a`` (spine coordinates ``a s / 2^K``) and
    ``b`` (``|p_{V_perp} p|^2 = b / 4^K``).  Returns, per point, the number of
    cubes ``L`` of generation ``<= K`` whose closed region ``R(L)`` contains
    it and the number whose interior contains it.
    """
    A = np.asarray(A, dtype=np.int64).reshape(len(B), m - 2)
    B = np.asarray(B, dtype=np.int64)
    U = A + 2 ** K
    closed = np.zeros(len(B), dtype=np.int64)
    opened = np.zeros(len(B), dtype=np.int64)
    for ell in range(K + 1):
        hi = 4 ** (K - ell)
        # 4 b compared with 4^(K-ell), avoiding the fractional bound at ell = K
        rad_c = (4 * B >= 4 ** (K - ell)) & (B <= hi)
        rad_o = (4 * B > 4 ** (K - ell)) & (B < hi)
        w = 2 ** (K + 1 - ell)
        n_c = np.ones(len(B), dtype=np.int64)
        n_o = np.ones(len(B), dtype=np.int64)
        for j in range(m - 2):
            u = U[:, j]
            base = np.minimum(u // w, 2 ** ell - 1)
            c_j = np.zeros(len(B), dtype=np.int64)
            o_j = np.zeros(len(B), dtype=np.int64)
            for i in (base - 1, base):
                valid = (i >= 0) & (i < 2 ** ell)
                c_j += valid & (i * w <= u) & (u <= (i + 1) * w)
                o_j += valid & (i * w < u) & (u < (i + 1) * w)
            n_c *= c_j
            n_o *= o_j
        closed += np.where(rad_c, n_c, 0)
        opened += np.where(rad_o, n_o, 0)
    return closed, opened


def in_R(y, r2, m):
    """Membership in ``R = {p_V p in L_0, 0 < |p_{V_perp} p| <= 1}``."""
    return 0 < r2 <= 1 and _coords_in(y, [(-1, 1)] * (m - 2), m - 2)


# --------------------------------------------------------------------------
# geometry constants


def geometry_constants(m, rho_star=DEFAULT_RHO_STAR):
    """Closed-form diameters and distances, in units of ``2^-ell``.

    ``R(L)`` has diameter ``2 sqrt 2`` (cube diagonal ``2`` and antipodal
    points of the outer sphere of radius ``1``) and lies at distance between
    ``1/2`` and ``1`` from ``V``; ``B^h(L)`` has diameter ``8`` and its
    points lie at distance between ``rho_star`` and ``4`` from ``V``.
    ``C`` is the smallest constant bracketing all of them.
    """
    vals = {"diam_R": 2.0 * math.sqrt(2.0), "dist_R_min": 0.5, "dist_R_max": 1.0,
            "diam_Bh": 8.0, "dist_Bh_min": float(rho_star), "dist_Bh_max": 4.0}
    C = max(max(v, 1.0 / v) for v in vals.values())
    vals["C"] = C
    return vals


def bh_intersect(L1, L2, rho_star=DEFAULT_RHO_STAR):
    """Whether ``B^h(L1) & B^h(L2) != {}``.

    Both balls are centred on ``V``; the sets meet iff both radii exceed the
    larger tube radius ``t`` and ``|y1 - y2| < sqrt(R1^2 - t^2) + sqrt(R2^2 - t^2)``.
    """
    R1, R2 = 2.0 ** (2 - L1.ell), 2.0 ** (2 - L2.ell)
    t = float(rho_star) * 2.0 ** (-min(L1.ell, L2.ell))
    if R1 <= t or R2 <= t:
        return False
    return float(np.linalg.norm(L1.center() - L2.center())) < math.sqrt(R1 * R1 - t * t) + math.sqrt(R2 * R2 - t * t)


def max_generation_gap(rho_star=DEFAULT_RHO_STAR):
    """Generation difference beyond which ``B^h`` sets cannot meet: ``2^gap < 4 / rho_star``."""
    return math.ceil(math.log2(4.0 / float(rho_star))) - 1


def overlap_count(L, rho_star=DEFAULT_RHO_STAR):
    """``#{L' : B^h(L) & B^h(L') != {}}``, searching all admissible generations."""
    gap = max_generation_gap(rho_star)
    count = 0
    s = L.s
    c = L.center()
    for ell in range(max(0, L.ell - gap), L.ell + gap + 1):
        reach = 2.0 ** (2 - L.ell) + 2.0 ** (2 - ell)
        box = [(Fraction(ci / s - reach / s - 1e-9), Fraction(ci / s + reach / s + 1e-9)) for ci in c]
        box = [(max(lo, Fraction(-1)), min(hi, Fraction(1))) for lo, hi in box]
        count += sum(bh_intersect(L, L2, rho_star) for L2 in cubes_meeting(box, ell))
    return count


def generation_measure_sum(ell, m):
    """``sum_{L in G_ell} H^(m-2)(L) / H^(m-2)(L_0)`` computed exactly."""
    return sum((L.measure_fraction() for L in cubes_at_generation(ell, m)), Fraction(0))


def geometric_partial_sums(m, kappa, ell_max):
    """Partial sums of ``sum_L 2^(-(m-2+kappa) ell(L))`` for integer ``kappa >= 1``, and the bound.

    The bound is ``1 / (1 - 2^-kappa)`` (generation ``ell`` contributes ``2^(-kappa ell)``).
    """
    kappa = int(kappa)
    if kappa < 1:
        raise InvalidInput("kappa must be a positive integer")
    sums, total = [], Fraction(0)
    for ell in range(ell_max + 1):
        count = 2 ** (ell * (m - 2))
        total += count * Fraction(1, 2 ** ((m - 2 + kappa) * ell))
        sums.append(total)
    return sums, 1 / (1 - Fraction(1, 2 ** kappa))


# --------------------------------------------------------------------------
# classification


class CubeKind(str, Enum):
    OUTER = "Outer"
    CENTRAL = "Central"
    INNER = "Inner"
    DESCENDANT_OF_INNER = "DescendantOfInner"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class CubeLabel:
    kind: CubeKind
    kL: int = None
    E: tuple = None


def classify_cubes(oracle, s, tau, max_depth, m):
    """Label every cube of generation ``<= max_depth``.

    Parameters
    ----------
    oracle : callable
        ``oracle(L, k) -> E(L, k)``.
    s : sequence of float
        Layer separations ``s(0), ..., s(kappa_bar)``.
    tau : float
    max_depth : int
    m : int

    Notes
    -----
    ``L`` is Outer if ``E(L', 0) <= tau^2 s(0)^2`` for all ancestors ``L'``
    (self included); Central if not Outer and ``min_k E(L', k) / s(k)^2 <= tau^2``
    for all ancestors; Inner if neither but the parent is Outer or Central;
    otherwise DescendantOfInner (the oracle is not evaluated there).  The
    root has no parent and is labelled Inner when it fails both tests.
    ``kL`` is the smallest ``k`` with ``E(L, k) <= tau^2 s(k)^2``.
    """
    s = [float(v) for v in s]
    if not s or min(s) <= 0:
        raise InvalidInput("separations must be positive")
    t2 = tau * tau
    labels = {}
    # per cube: (outer chain ok, central chain ok)
    state = {}
    frontier = [root_cube(m)]
    for depth in range(max_depth + 1):
        nxt = []
        for L in frontier:
            P = L.parent()
            if P is not None and labels[P].kind in (CubeKind.INNER, CubeKind.DESCENDANT_OF_INNER):
                labels[L] = CubeLabel(CubeKind.DESCENDANT_OF_INNER)
            else:
                E = tuple(float(oracle(L, k)) for k in range(len(s)))
                passing = [k for k in range(len(s)) if E[k] <= t2 * s[k] ** 2]
                kL = passing[0] if passing else None
                outer_up, central_up = state.get(P, (True, True))
                outer = outer_up and E[0] <= t2 * s[0] ** 2
                central = central_up and kL is not None
                state[L] = (outer, central)
                if outer:
                    labels[L] = CubeLabel(CubeKind.OUTER, kL, E)
                elif central:
                    labels[L] = CubeLabel(CubeKind.CENTRAL, kL, E)
                else:
                    labels[L] = CubeLabel(CubeKind.INNER, kL, E)
            if depth < max_depth:
                nxt.extend(L.children())
        frontier = nxt
    return labels


def label_beyond_depth(L, labels):
    """Label of a cube deeper than the classified range: forced or Unresolved."""
    for A in L.ancestors():
        if A in labels:
            if labels[A].kind in (CubeKind.INNER, CubeKind.DESCENDANT_OF_INNER) and A != L:
                return CubeLabel(CubeKind.DESCENDANT_OF_INNER)
            return labels[A] if A == L else CubeLabel(CubeKind.UNRESOLVED)
    return CubeLabel(CubeKind.UNRESOLVED)


def check_ancestry(labels):
    """Violations of the ancestry rules (empty list when consistent)."""
    bad = []
    for L, lab in labels.items():
        P = L.parent()
        pk = labels[P].kind if P is not None else None
        if lab.kind == CubeKind.OUTER and P is not None and pk != CubeKind.OUTER:
            bad.append((L, "outer cube with non-outer parent"))
        if lab.kind == CubeKind.CENTRAL and P is not None and pk not in (CubeKind.OUTER, CubeKind.CENTRAL):
            bad.append((L, "central cube with inner parent"))
        if lab.kind == CubeKind.INNER and P is not None and pk not in (CubeKind.OUTER, CubeKind.CENTRAL):
            bad.append((L, "inner cube whose parent is not outer or central"))
        if lab.kind == CubeKind.DESCENDANT_OF_INNER and pk not in (CubeKind.INNER, CubeKind.DESCENDANT_OF_INNER):
            bad.append((L, "descendant of inner without inner ancestry"))
    return bad


def dump_labels(labels, fh):
    """Write one JSON object per cube: ``{"ell", "index", "label", "kL", "E"}``."""
    for L in sorted(labels):
        lab = labels[L]
        rec = {"ell": L.ell, "index": list(L.index), "label": lab.kind.value}
        if lab.kL is not None:
            rec["kL"] = lab.kL
        if lab.E is not None:
            rec["E"] = list(lab.E)
        fh.write(json.dumps(rec) + "\n")


# --------------------------------------------------------------------------
# excess oracle


class CurrentExcessOracle:
    """``E(L, k) = 2^((m+2) ell) sum_{p in B^h(L)} w dist(p, S_k)^2`` on a sampled current."""

    def __init__(self, T, layers, rho_star=DEFAULT_RHO_STAR, spine=None):
        from .excess import distances
        self._distances = distances
        if not layers:
            raise InvalidInput("need at least one layer cone")
        self.T = T
        self.layers = list(layers)
        self.m = self.layers[0].m
        self.spine = self.layers[0].spine if spine is None else spine
        self.rho_star = float(rho_star)
        pos = T.weights > 0
        self._pts = T.points[pos]
        self._w = T.weights[pos]
        self._tree = cKDTree(self._pts) if len(self._pts) else None
        self._cache = {}

    def in_bh(self, L):
        """Indices (into the positive-weight samples) of points of ``B^h(L)``."""
        if self._tree is None:
            return np.zeros(0, int)
        y = self.spine.frame @ L.center()
        R = 2.0 ** (2 - L.ell)
        idx = np.asarray(self._tree.query_ball_point(y, R), dtype=int)
        if len(idx) == 0:
            return idx
        P = self._pts[idx]
        d = P - y
        keep = (np.einsum("ij,ij->i", d, d) < R * R) & (self.spine.perp_norm(P) >= self.rho_star * 2.0 ** (-L.ell))
        return idx[keep]

    def __call__(self, L, k):
        key = (L, k)
        if key not in self._cache:
            idx = self.in_bh(L)
            if len(idx) == 0:
                val = 0.0
            else:
                d = self._distances(self._pts[idx], self.layers[k])
                val = 2.0 ** ((self.m + 2) * L.ell) * float(np.dot(self._w[idx], d * d))
            self._cache[key] = val
        return self._cache[key]


def excess_oracle_from_current(T, layers, rho_star=DEFAULT_RHO_STAR, spine=None):
    return CurrentExcessOracle(T, layers, rho_star, spine)
