"""Weighted point clouds and the L2 excess functionals measured on them.

A :class:`SampledCurrent` is a finite weighted point cloud standing in for the
mass measure of an ``m``-dimensional current, optionally with an oriented
tangent frame at every point.  Distances are Euclidean; the ambient space is
flat.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .cones import PlaneCone, ball_points
from .errors import DimensionMismatch, InvalidInput, RankDeficient
from .planes import AffinePlane, Subspace

DEFAULT_SPINE_CUTOFF = 1.0 / 16.0


@lru_cache(maxsize=None)
def omega(m):
    """Volume of the unit ``m``-ball."""
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampledCurrent:
    """Weighted points, optionally carrying oriented ``m``-frames.

    Attributes
    ----------
    points : ndarray, shape (K, ambient)
    weights : ndarray, shape (K,)
    m : int
        Dimension of the current (sets the mass scaling under dilations).
    frames : ndarray, shape (K, ambient, m), optional
        Orthonormal columns; the orientation is the order of the columns
        times ``signs``.
    signs : ndarray, shape (K,), optional
        ``+1`` or ``-1``; defaults to all ``+1`` when frames are given.
    """

    points: np.ndarray
    weights: np.ndarray
    m: int
    frames: np.ndarray = None
    signs: np.ndarray = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, float))
        w = np.asarray(self.weights, float).reshape(-1)
        if P.shape[0] != w.shape[0]:
            raise DimensionMismatch("one weight per point is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidInput("weights must be finite and nonnegative")
        if not 1 <= int(self.m) <= P.shape[1]:
            raise InvalidInput("m must lie between 1 and the ambient dimension")
        object.__setattr__(self, "points", _frozen(P))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "m", int(self.m))
        if self.frames is None:
            if self.signs is not None:
                raise InvalidInput("signs given without frames")
            return
        F = np.asarray(self.frames, float)
        if F.shape != (P.shape[0], P.shape[1], self.m):
            raise DimensionMismatch("frames must have shape (K, ambient, m)")
        gram = np.einsum("kai,kaj->kij", F, F)
        if len(F) and np.abs(gram - np.eye(self.m)).max() > 1e-10:
            raise InvalidInput("frames must be orthonormal")
        s = np.ones(P.shape[0]) if self.signs is None else np.asarray(self.signs, float).reshape(-1)
        if s.shape[0] != P.shape[0] or not np.all(np.abs(s) == 1.0):
            raise InvalidInput("signs must be +1 or -1, one per point")
        object.__setattr__(self, "frames", _frozen(F))
        object.__setattr__(self, "signs", _frozen(s))

    @property
    def ambient_dim(self):
        return self.points.shape[1]

    @property
    def has_frames(self):
        return self.frames is not None

    def __len__(self):
        return self.points.shape[0]

    @property
    def mass(self):
        return float(self.weights.sum())

    def mass_in(self, ball):
        return float(self.weights[ball.contains(self.points)].sum())

    # -- file format: one JSON header line, then a CSV or binary body --------

    def _rows(self):
        cols = [self.points, self.weights[:, None]]
        if self.has_frames:
            F = np.array(self.frames)
            F[:, :, 0] *= self.signs[:, None]
            cols.append(F.transpose(0, 2, 1).reshape(len(self), -1))
        return np.hstack(cols)

    def save(self, path, fmt="csv"):
        """Write to ``path``; orientation signs are folded into the first frame vector."""
        if fmt not in ("csv", "binary"):
            raise InvalidInput("format must be csv or binary")
        header = {"ambient": self.ambient_dim, "m": self.m, "has_frames": self.has_frames,
                  "format": fmt, "count": len(self)}
        rows = self._rows()
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode())
            if fmt == "csv":
                buf = io.StringIO()
                np.savetxt(buf, rows, delimiter=",", fmt="%.17g")
                fh.write(buf.getvalue().encode())
            else:
                fh.write(rows.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            body = fh.read()
        k, m, count = int(header["ambient"]), int(header["m"]), int(header["count"])
        width = k + 1 + (k * m if header["has_frames"] else 0)
        if header.get("format", "csv") == "binary":
            rows = np.frombuffer(body, dtype="<f8")
        else:
            text = body.decode().strip()
            rows = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2) if text else np.zeros((0, width))
        rows = np.asarray(rows, float).reshape(-1, width) if rows.size else np.zeros((0, width))
        if rows.shape[0] != count:
            raise InvalidInput(f"expected {count} rows, found {rows.shape[0]}")
        frames = None
        if header["has_frames"]:
            frames = rows[:, k + 1:].reshape(count, m, k).transpose(0, 2, 1)
        return cls(rows[:, :k], rows[:, k], m, frames)


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInput("ball radius must be positive")
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, float).reshape(-1)))

    def contains(self, points):
        d = np.atleast_2d(points) - self.center
        return np.einsum("ij,ij->i", d, d) < self.radius ** 2


@dataclass(frozen=True)
class Cylinder:
    """``{x : |p_plane(x - center)| < radius}``, unbounded along the plane's complement."""

    center: np.ndarray
    radius: float
    plane: Subspace

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInput("cylinder radius must be positive")
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, float).reshape(-1)))

    def contains(self, points):
        c = self.plane.coords(np.atleast_2d(points) - self.center)
        return np.einsum("ij,ij->i", c, c) < self.radius ** 2


def _affine_planes(S):
    if isinstance(S, PlaneCone):
        return S.affine_planes()
    if isinstance(S, AffinePlane):
        return [S]
    if isinstance(S, Subspace):
        return [AffinePlane(S)]
    planes = [p if isinstance(p, AffinePlane) else AffinePlane(p) for p in S]
    if not planes:
        raise InvalidInput("empty plane list")
    return planes


def _dim_of(S):
    return _affine_planes(S)[0].dim


def distances(points, S):
    """Distance from each row of ``points`` to the union of planes ``S``."""
    planes = _affine_planes(S)
    P = np.atleast_2d(np.asarray(points, float))
    if P.shape[1] != planes[0].ambient_dim:
        raise DimensionMismatch("points and planes live in different spaces")
    return np.min([pl.distance(P) for pl in planes], axis=0)


def dist_to_cone(p, S):
    """Distance from a single point to a cone or list of affine planes."""
    return float(distances(np.asarray(p, float)[None, :], S)[0])


def one_sided_excess(T, S, ball):
    """``r**-(m+2) * sum_{|p - q| < r} w dist(p, S)**2`` with ``m`` the dimension of ``S``."""
    m = _dim_of(S)
    inside = ball.contains(T.points)
    if not np.any(inside):
        return 0.0
    d = distances(T.points[inside], S)
    return float(np.dot(T.weights[inside], d * d) / ball.radius ** (m + 2))


@dataclass
class ReverseExcess:
    value: float
    mesh: float
    bound: float
    nodes: int


def reverse_excess(S, T, ball, a=DEFAULT_SPINE_CUTOFF, resolution=4096, with_bound=False):
    """Quadrature of ``dist(x, spt T)**2`` over ``S & B_r(q)`` minus the tube ``B_{ar}(V)``.

    Every plane's disk ``S_i & B_r(q)`` is covered by the affine image of one
    fixed low-discrepancy point set of the unit ``m``-ball, so the rule
    commutes exactly with dilations.  Nodes closer than ``a r`` to the spine
    are dropped, the distance to the support is the distance to the nearest
    positive-weight sample, and each node carries mass
    ``omega_m rho**m / (#nodes)``.

    Returns the normalized value, or a :class:`ReverseExcess` with the
    largest node-to-sample distance and the bound ``mesh**2 * H^m / r**(m+2)``
    when ``with_bound`` is set.
    """
    if not 0.0 < a < 1.0:
        raise InvalidInput("a must lie in (0, 1)")
    if not isinstance(S, PlaneCone):
        raise InvalidInput("reverse excess needs a PlaneCone")
    support = T.points[T.weights > 0]
    if len(support) == 0:
        raise InvalidInput("the current has no support")
    tree = cKDTree(support)
    m, r, q = S.m, ball.radius, ball.center
    ref = ball_points(m, resolution)
    total, measure, mesh, used = 0.0, 0.0, 0.0, 0
    for plane in S.planes:
        rel = q - S.offset
        h2 = float(plane.perp_norm(rel)[0] ** 2)
        if h2 >= r * r:
            continue
        rho = math.sqrt(r * r - h2)
        centre = S.offset + plane.frame @ (plane.frame.T @ rel)
        nodes = centre + rho * ref @ plane.frame.T
        keep = S.spine_distance(nodes) >= a * r
        nodes = nodes[keep]
        if len(nodes) == 0:
            continue
        cell = omega(m) * rho ** m / len(ref)
        d, _ = tree.query(nodes)
        total += cell * float(np.dot(d, d))
        measure += cell * len(nodes)
        mesh = max(mesh, float(d.max()))
        used += len(nodes)
    value = total / r ** (m + 2)
    if with_bound:
        return ReverseExcess(value, mesh, mesh * mesh * measure / r ** (m + 2), used)
    return value


def two_sided_excess(T, S, ball, a=DEFAULT_SPINE_CUTOFF, resolution=4096):
    """One-sided plus reverse excess."""
    return one_sided_excess(T, S, ball) + reverse_excess(S, T, ball, a, resolution)


def planar_excess(T, ball, m):
    """Best single ``m``-plane through the ball centre (weighted principal subspace).

    Returns
    -------
    value : float
        ``r**-(m+2) * sum w |p_pi^perp (p - q)|**2`` for the optimal ``pi``.
    plane : AffinePlane
        Spanned by the top ``m`` eigenvectors of ``sum w (p-q)(p-q)^T``
        (``numpy.linalg.eigh`` order on ties) through the centre.

    Raises
    ------
    RankDeficient
        Fewer than ``m`` positive-weight samples in the ball.
    """
    inside = ball.contains(T.points) & (T.weights > 0)
    if int(inside.sum()) < m:
        raise RankDeficient(f"need at least {m} weighted samples in the ball")
    X = T.points[inside] - ball.center
    w = T.weights[inside]
    moment = (X * w[:, None]).T @ X
    _, vecs = np.linalg.eigh(moment)
    pi = Subspace(vecs[:, ::-1][:, :m])
    plane = AffinePlane(pi, ball.center)
    d = pi.perp_norm(X)
    return float(np.dot(w, d * d) / ball.radius ** (m + 2)), plane


def _tilt_terms(T, cyl):
    if not T.has_frames:
        raise InvalidInput("tilt excess needs frames")
    inside = cyl.contains(T.points)
    return inside, T.frames[inside], T.weights[inside], T.signs[inside]


def tilt_excess_oriented(T, cyl, pi, pi_sign=1.0):
    """``(2 omega_m r**m)**-1 * sum w |T - pi|**2`` over the cylinder (oriented m-vectors).

    For unit simple ``m``-vectors, ``|U - W|**2 = 2 - 2 <U, W>`` and
    ``<U, W> = det(U^T W)`` times the orientation signs.
    """
    _, F, w, s = _tilt_terms(T, cyl)
    if len(w) == 0:
        return 0.0
    inner = s * pi_sign * np.linalg.det(np.einsum("kai,aj->kij", F, pi.frame))
    return float(np.dot(w, 2.0 - 2.0 * inner) / (2.0 * omega(pi.dim) * cyl.radius ** pi.dim))


def tilt_excess_nonoriented(T, cyl, pi):
    """``(2 omega_m r**m)**-1 * sum w |p_T - p_pi|**2`` (Frobenius norm of projector difference)."""
    _, F, w, _ = _tilt_terms(T, cyl)
    if len(w) == 0:
        return 0.0
    cross = np.einsum("kai,aj->kij", F, pi.frame)
    sq = 2.0 * pi.dim - 2.0 * np.einsum("kij,kij->k", cross, cross)
    return float(np.dot(w, np.maximum(sq, 0.0)) / (2.0 * omega(pi.dim) * cyl.radius ** pi.dim))


def tilt_comparison_constant(m):
    """``C`` with ``|p_U - p_W|**2 <= C |U - W|**2`` for oriented ``m``-planes.

    With principal angles ``t_i``: ``|p_U - p_W|**2 = 2 sum sin(t_i)**2 <= 2m sin(t_max)**2``
    and ``|U - W|**2 >= 2 - 2 prod cos(t_i) >= 1 - cos(t_max)**2``, hence ``C = 2m``.
    """
    return 2.0 * m


def rescale(T, q, r):
    """Push forward by ``x -> (x - q) / r``; weights scale by ``r**-m``."""
    if not r > 0:
        raise InvalidInput("r must be positive")
    return SampledCurrent((T.points - np.asarray(q, float)) / r, T.weights * r ** (-T.m),
                          T.m, T.frames, T.signs)


def _fourier_field(rng, m, n, modes=6, freq=2.0):
    omegas = freq * rng.standard_normal((modes, m))
    phases = 2.0 * np.pi * rng.random(modes)
    amps = rng.standard_normal((modes, n))
    scale = np.abs(amps).sum(axis=0).max() if modes else 1.0

    def field(u):
        arg = u @ omegas.T + phases
        return np.cos(arg) @ amps / scale

    def grad(u):
        # d f_c / d u_i = -sum_k amps[k, c] sin(arg_k) omegas[k, i]
        arg = u @ omegas.T + phases
        return -np.einsum("pk,kc,ki->pci", np.sin(arg), amps, omegas) / scale

    return field, grad


def synth_cone_sample(S, h=0.0, noise=0.0, density=2000, rho=0.0, seed=0, frames=False):
    """Noisy graph-like sample of ``S & B_1`` away from the spine.

    Each plane gets ``density`` points drawn uniformly from
    ``(alpha_i & B_1) minus B_rho(V)``, displaced normally to the plane by a
    smooth random field with ``sup |f| <= h`` and by Gaussian noise of
    standard deviation ``noise``.  Weights are uniform, equal to the exact
    area ``omega_m (1 - rho**2)**(m/2)`` of the region divided by ``density``.
    With ``frames`` set, the tangent frames of the displaced graph are
    attached (noise does not tilt them).
    """
    if h < 0 or noise < 0:
        raise InvalidInput("h and noise must be nonnegative")
    if not 0.0 <= rho < 1.0:
        raise InvalidInput("rho must lie in [0, 1)")
    if int(density) < 1:
        raise InvalidInput("density must be a positive integer")
    rng = np.random.default_rng(seed)
    m, k = S.m, S.ambient_dim
    weight = omega(m) * (1.0 - rho * rho) ** (m / 2.0) / density
    pts, fr = [], []
    for plane in S.planes:
        normal = plane.complement().frame
        field, grad = _fourier_field(rng, m, k - m)
        chosen = np.zeros((0, m))
        while len(chosen) < density:
            u = rng.standard_normal((2 * density, m))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            u *= rng.random(2 * density)[:, None] ** (1.0 / m)
            ok = S.spine.perp_norm(u @ plane.frame.T) >= rho if rho > 0 else np.ones(len(u), bool)
            chosen = np.vstack([chosen, u[ok]])
        u = chosen[:density]
        x = S.offset + u @ plane.frame.T + h * field(u) @ normal.T
        x += noise * rng.standard_normal((density, k - m)) @ normal.T
        pts.append(x)
        if frames:
            tang = plane.frame[None, :, :] + h * np.einsum("ac,pci->pai", normal, grad(u))
            Q, R = np.linalg.qr(tang)
            Q = Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :]
            fr.append(Q)
    P = np.vstack(pts)
    F = np.concatenate(fr) if frames else None
    return SampledCurrent(P, np.full(len(P), weight), m, F)
