"""Selection, refinement and splitting of finite point sets.

Three constructive procedures on a set ``P`` of distinct points:

* :func:`cluster_comparable` keeps a subset whose diameter and minimal
  separation are comparable while every discarded point stays close to it;
* :func:`cluster_refine` discards points until a scale ``eps`` is small
  relative to the remaining separation;
* :func:`cluster_split` partitions ``P`` into two parts whose mutual
  distance is at least ``diam(P) / 2**(N-2)``.

Every function returns the chosen index set(s) together with a
:class:`ClusterCertificate` whose inequalities can be re-checked.
Ties are broken towards the lowest index.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInput

REL_SLACK = 1e-12


def _le(a, b):
    return a <= b + REL_SLACK * max(abs(a), abs(b))


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        if P.ndim != 2 or P.shape[0] < 1:
            raise InvalidInput("a point set needs at least one point")
        if P.shape[0] > 1:
            D = cdist(P, P)
            np.fill_diagonal(D, np.inf)
            if D.min() <= 0.0:
                raise InvalidInput("points must be pairwise distinct")
        P.setflags(write=False)
        object.__setattr__(self, "points", P)

    @property
    def ambient_dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def to_dict(self):
        return {"ambient": self.ambient_dim, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, d):
        pts = np.asarray(d["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != int(d["ambient"]):
            raise InvalidInput("points must have `ambient` coordinates")
        return cls(pts)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ClusterCertificate:
    selected: tuple
    removal_order: tuple = ()
    constants: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(c["ok"] for c in self.checks.values())

    def as_dict(self):
        return {
            "selected": list(self.selected),
            "removal_order": list(self.removal_order),
            "constants": self.constants,
            "checks": self.checks,
            "ok": self.ok,
        }


def _as_points(P):
    if isinstance(P, PointSet):
        return P.points
    return PointSet(P).points


def _check(lhs, rhs, kind="le"):
    ok = _le(lhs, rhs) if kind == "le" else abs(lhs - rhs) <= REL_SLACK * max(abs(lhs), abs(rhs), 1e-300)
    return {"lhs": float(lhs), "rhs": float(rhs), "ok": bool(ok)}


def _extreme_pair(D, idx, largest):
    """Lexicographically first pair of ``idx`` realizing the min/max distance."""
    sub = D[np.ix_(idx, idx)]
    iu = np.triu_indices(len(idx), 1)
    vals = sub[iu]
    target = vals.max() if largest else vals.min()
    hit = np.abs(vals - target) <= REL_SLACK * target
    k = int(np.argmax(hit))
    return (idx[iu[0][k]], idx[iu[1][k]]), float(target)


def _min_sep(D, idx):
    if len(idx) < 2:
        return np.inf
    sub = D[np.ix_(idx, idx)]
    return float(sub[np.triu_indices(len(idx), 1)].min())


def _diam(D, idx):
    if len(idx) < 2:
        return 0.0
    sub = D[np.ix_(idx, idx)]
    return float(sub.max())


def _dist_to(D, idx):
    """``dist(p, P[idx])`` for every point p."""
    return D[:, idx].min(axis=1)


def cluster_comparable(P, delta_bar):
    """Subset with comparable diameter and separation that stays close to all of ``P``.

    Points are removed one at a time: at each step the removed point belongs
    to a closest pair but not to the (first) farthest pair.  The process stops
    at the first ``j`` with ``M_j <= lam**(N-2-j) * m_j``, where ``M_j``/``m_j``
    are the diameter/minimal separation of the current set and
    ``lam = 1 + 1/delta_bar``.

    Returns
    -------
    selected : tuple of int
    cert : ClusterCertificate
        Checks ``ratio``: diam/sep of the selection ``<= lam**(N-2)``;
        ``closeness``: ``max_p dist(p, P') <= delta_bar * sep(P')``;
        ``removal_j``: ``dist(p_j, P_j) == sep(P_{j-1})`` for each removal.
    """
    X = _as_points(P)
    N = X.shape[0]
    if N < 2:
        raise InvalidInput("need at least two points")
    if not 0.0 < delta_bar <= 0.5:
        raise InvalidInput("delta_bar must lie in (0, 1/2]")
    lam = 1.0 + 1.0 / delta_bar
    D = cdist(X, X)
    current = list(range(N))
    removed = []
    history = [list(current)]
    while True:
        j = len(removed)
        M_j, m_j = _diam(D, current), _min_sep(D, current)
        if len(current) == 2 or _le(M_j, lam ** (N - 2 - j) * m_j):
            break
        (p, q), _ = _extreme_pair(D, current, largest=False)
        (pp, qq), _ = _extreme_pair(D, current, largest=True)
        if {p, q} == {pp, qq}:
            # all points equidistant
            drop = min(current)
        else:
            drop = min({p, q} - {pp, qq})
        current.remove(drop)
        removed.append(drop)
        history.append(list(current))

    sel = tuple(current)
    sep = _min_sep(D, current)
    checks = {
        "ratio": _check(_diam(D, current) / sep, lam ** (N - 2)),
        "closeness": _check(float(_dist_to(D, current).max()), delta_bar * sep),
    }
    for j, pj in enumerate(removed, start=1):
        lhs = float(D[pj, history[j]].min())
        checks[f"removal_{j}"] = _check(lhs, _min_sep(D, history[j - 1]), kind="eq")
    cert = ClusterCertificate(
        selected=sel,
        removal_order=tuple(removed),
        constants={"lambda": lam, "C_bar": lam ** (N - 2), "delta_bar": delta_bar,
                   "achieved_ratio": _diam(D, current) / sep},
        checks=checks,
    )
    return sel, cert


def cluster_refine(P, delta, eps):
    """Discard points until ``eps`` is small relative to the remaining separation.

    Starting from ``t_0 = eps``, while ``t_J > delta * sep(P_J)`` one point of
    the closest pair is dropped and the threshold grows to
    ``t_J = delta**-1 (1 + delta**-1)**(J-1) eps``.  Stops at a singleton.

    Returns
    -------
    selected : tuple of int
    cert : ClusterCertificate
        Checks ``reach``: ``max_p dist(p, P~) <= delta**-1 (1+delta**-1)**(N-2) eps``
        and ``separation``: ``max(eps, max_p dist(p, P~)) <= delta * sep(P~)``
        (vacuous for a singleton).
    """
    X = _as_points(P)
    N = X.shape[0]
    if N < 2:
        raise InvalidInput("need at least two points")
    if not 0.0 < delta <= 0.5:
        raise InvalidInput("delta must lie in (0, 1/2]")
    if not eps > 0.0:
        raise InvalidInput("eps must be positive")
    D = cdist(X, X)
    current = list(range(N))
    removed = []
    threshold = eps
    while len(current) > 1 and not _le(threshold, delta * _min_sep(D, current)):
        (p, q), _ = _extreme_pair(D, current, largest=False)
        drop = min(p, q)
        current.remove(drop)
        removed.append(drop)
        J = len(removed)
        threshold = eps / delta * (1.0 + 1.0 / delta) ** (J - 1)

    reach = float(_dist_to(D, current).max())
    bound = eps / delta * (1.0 + 1.0 / delta) ** (N - 2)
    checks = {"reach": _check(reach, bound)}
    if len(current) > 1:
        checks["separation"] = _check(max(eps, reach), delta * _min_sep(D, current))
    else:
        checks["separation"] = {"lhs": max(eps, reach), "rhs": float("inf"), "ok": True,
                                "singleton": True}
    cert = ClusterCertificate(
        selected=tuple(current),
        removal_order=tuple(removed),
        constants={"delta": delta, "eps": eps, "final_threshold": threshold,
                   "reach_bound": bound},
        checks=checks,
    )
    return tuple(current), cert


def _split(D, idx):
    if len(idx) == 2:
        return [idx[0]], [idx[1]]
    M = _diam(D, idx)
    for p in idx:
        rest = [i for i in idx if i != p]
        if _le(M, _diam(D, rest)):
            break
    A, B = _split(D, rest)
    dA, dB = D[p, A].min(), D[p, B].min()
    # join the nearer part; the farther one is at distance >= M / 2**(len-2)
    if dA <= dB:
        A = sorted(A + [p])
    else:
        B = sorted(B + [p])
    return A, B


def cluster_split(P):
    """Split ``P`` into two parts at mutual distance ``>= diam(P) / 2**(N-2)``.

    Recursive: remove the lowest-index point whose removal keeps the
    diameter, split the rest, and attach the removed point to the part it
    is closer to.
    """
    X = _as_points(P)
    N = X.shape[0]
    if N < 2:
        raise InvalidInput("need at least two points")
    D = cdist(X, X)
    A, B = _split(D, list(range(N)))
    M = _diam(D, list(range(N)))
    cross = float(D[np.ix_(A, B)].min())
    bound = M / 2.0 ** (N - 2)
    cert = ClusterCertificate(
        selected=(tuple(A), tuple(B)),
        constants={"diameter": M, "bound": bound, "separation": cross},
        checks={"separation": _check(bound, cross)},
    )
    return tuple(A), tuple(B), cert
