"""Linear and affine subspaces, Morgan angles and canonical rotations.

Subspaces are stored as orthonormal frames (``ambient x dim`` arrays with
orthonormal columns).  Every angle computation goes through singular values
of frame products, clamped before any ``arcsin``/``arccos``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePair, DimensionMismatch, InvalidInput, RankMismatch

ORTHO_TOL = 1e-10
RANK_TOL = 1e-10
# Angles this close to pi/2 make the canonical rotation ill defined.
ORTHOGONAL_MARGIN = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def orthonormalize(vectors, tol=RANK_TOL):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Parameters
    ----------
    vectors : array-like, (ambient, k)
        Columns span the subspace.
    tol : float
        Relative rank tolerance; a column whose residual norm falls below
        ``tol * max column norm`` is dropped as dependent.

    Returns
    -------
    ndarray, (ambient, r)
        Orthonormal frame of the span, ``r <= k``.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.ndim != 2:
        raise InvalidInput("vectors must be a 2-d array")
    if V.shape[1] == 0:
        return np.zeros((V.shape[0], 0))
    scale = np.max(np.linalg.norm(V, axis=0))
    if scale == 0.0:
        return np.zeros((V.shape[0], 0))
    basis = []
    for j in range(V.shape[1]):
        w = V[:, j].copy()
        for _ in range(2):
            for q in basis:
                w -= (q @ w) * q
        nrm = np.linalg.norm(w)
        if nrm > tol * scale:
            basis.append(w / nrm)
    if not basis:
        return np.zeros((V.shape[0], 0))
    return np.column_stack(basis)


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of ``R^ambient`` held as an orthonormal frame."""

    frame: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.frame, dtype=float)
        if F.ndim == 1:
            F = F.reshape(-1, 1)
        if F.ndim != 2 or F.shape[0] < 1:
            raise InvalidInput("frame must be an (ambient, dim) array")
        if F.shape[1] > F.shape[0]:
            raise InvalidInput("dim exceeds ambient dimension")
        gram = F.T @ F
        if F.shape[1] and np.max(np.abs(gram - np.eye(F.shape[1]))) > ORTHO_TOL:
            raise InvalidInput("frame columns are not orthonormal")
        object.__setattr__(self, "frame", _frozen(F))

    @classmethod
    def span(cls, vectors, ambient=None):
        """Subspace spanned by the columns of ``vectors`` (dependent ones dropped)."""
        V = np.asarray(vectors, dtype=float)
        if V.size == 0:
            if ambient is None:
                raise InvalidInput("ambient dimension needed for the zero subspace")
            return cls(np.zeros((ambient, 0)))
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        return cls(orthonormalize(V))

    @classmethod
    def zero(cls, ambient):
        return cls(np.zeros((ambient, 0)))

    @classmethod
    def coordinate(cls, ambient, axes):
        """Span of the standard basis vectors listed in ``axes``."""
        F = np.zeros((ambient, len(axes)))
        for j, a in enumerate(axes):
            F[a, j] = 1.0
        return cls(F)

    @property
    def ambient_dim(self):
        return self.frame.shape[0]

    @property
    def dim(self):
        return self.frame.shape[1]

    @property
    def projector(self):
        return self.frame @ self.frame.T

    def complement(self):
        """Orthogonal complement, as a Subspace."""
        k, d = self.frame.shape
        if d == 0:
            return Subspace(np.eye(k))
        q, _ = np.linalg.qr(self.frame, mode="complete")
        comp = q[:, d:]
        # re-project to kill round-off leakage into the subspace
        comp = comp - self.frame @ (self.frame.T @ comp)
        return Subspace(orthonormalize(comp))

    def coords(self, points):
        """Coordinates of the orthogonal projections in this frame."""
        return np.asarray(points, dtype=float) @ self.frame

    def perp_norm(self, points):
        """Distance of each point (row) from the subspace."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        par = (P @ self.frame) @ self.frame.T
        return np.linalg.norm(P - par, axis=-1)

    def contains(self, v, tol=1e-9):
        return bool(np.all(self.perp_norm(v) <= tol * max(1.0, float(np.max(np.abs(v))))))

    def same_as(self, other, tol=1e-9):
        return self.dim == other.dim and unit_ball_hausdorff_any(self, other) <= tol

    def to_dict(self):
        return {"ambient": self.ambient_dim, "frame": self.frame.T.tolist()}

    @classmethod
    def from_dict(cls, d):
        ambient = int(d["ambient"])
        vecs = np.asarray(d.get("frame", []), dtype=float)
        if vecs.size == 0:
            return cls.zero(ambient)
        if vecs.ndim != 2 or vecs.shape[1] != ambient:
            raise InvalidInput("frame vectors must have `ambient` entries")
        return cls(vecs.T)


@dataclass(frozen=True)
class AffinePlane:
    """``offset + base``; offset is kept orthogonal to ``base``."""

    base: Subspace
    offset: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.offset is None:
            off = np.zeros(self.base.ambient_dim)
        else:
            off = np.asarray(self.offset, dtype=float).reshape(-1)
        if off.shape[0] != self.base.ambient_dim:
            raise DimensionMismatch("offset has the wrong length")
        off = off - self.base.frame @ (self.base.frame.T @ off)
        object.__setattr__(self, "offset", _frozen(off))

    @property
    def ambient_dim(self):
        return self.base.ambient_dim

    @property
    def dim(self):
        return self.base.dim

    def distance(self, points):
        return self.base.perp_norm(np.atleast_2d(points) - self.offset)

    def to_dict(self):
        d = self.base.to_dict()
        d["offset"] = self.offset.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(Subspace.from_dict(d), d.get("offset"))


@dataclass(frozen=True)
class AngleSpectrum:
    """Ascending Morgan angles (the positive ones only)."""

    angles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", _frozen(np.sort(np.asarray(self.angles, float))))

    def __len__(self):
        return len(self.angles)

    def __iter__(self):
        return iter(self.angles.tolist())

    def __getitem__(self, i):
        return float(self.angles[i])

    @property
    def max(self):
        return float(self.angles[-1]) if len(self.angles) else 0.0

    @property
    def min(self):
        return float(self.angles[0]) if len(self.angles) else 0.0


def load_subspace(path):
    with open(path) as fh:
        d = json.load(fh)
    if "offset" in d:
        return AffinePlane.from_dict(d)
    return Subspace.from_dict(d)


def _check_pair(alpha, beta):
    if alpha.ambient_dim != beta.ambient_dim:
        raise DimensionMismatch(
            f"ambient dimensions differ: {alpha.ambient_dim} vs {beta.ambient_dim}")
    if alpha.dim != beta.dim:
        raise DimensionMismatch(f"subspace dimensions differ: {alpha.dim} vs {beta.dim}")


def project(S, v):
    """Split ``v`` into its components parallel and perpendicular to ``S``."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != S.ambient_dim:
        raise DimensionMismatch("vector length does not match the ambient dimension")
    par = (v @ S.frame) @ S.frame.T
    return par, v - par


def _all_angles(alpha, beta):
    """All ``dim`` principal angles, ascending (zeros included)."""
    A, B = alpha.frame, beta.frame
    m = A.shape[1]
    if m == 0:
        return np.zeros(0)
    cos = np.clip(np.linalg.svd(A.T @ B, compute_uv=False), 0.0, 1.0)  # descending
    perp = A - B @ (B.T @ A)
    sin = np.clip(np.linalg.svd(perp, compute_uv=False), 0.0, 1.0)[::-1]  # ascending
    # arcsin is accurate for small angles, arccos for angles near pi/2
    theta = np.where(sin ** 2 < 0.5, np.arcsin(sin), np.arccos(cos))
    return np.sort(theta)


def morgan_angles(alpha, beta, tol=RANK_TOL):
    """Morgan angles of a pair of equidimensional subspaces.

    These are ``arcsin(sqrt(lambda))`` for the positive eigenvalues ``lambda``
    of the quadratic form ``v -> dist(v, beta)**2`` on ``alpha``; directions
    in ``alpha & beta`` (zero eigenvalue) are omitted.

    Parameters
    ----------
    alpha, beta : Subspace
        Same ambient dimension and same dimension ``m >= 1``.
    tol : float
        Sines at or below ``tol`` are treated as zero eigenvalues.

    Returns
    -------
    AngleSpectrum
    """
    _check_pair(alpha, beta)
    if alpha.dim < 1:
        raise DimensionMismatch("Morgan angles need subspaces of dimension >= 1")
    theta = _all_angles(alpha, beta)
    return AngleSpectrum(theta[np.sin(theta) > tol])


def unit_ball_hausdorff_any(alpha, beta):
    _check_pair(alpha, beta)
    if alpha.dim == 0:
        return 0.0
    perp = alpha.frame - beta.frame @ (beta.frame.T @ alpha.frame)
    return float(min(1.0, np.linalg.norm(perp, 2)))


def unit_ball_hausdorff(alpha, beta):
    """Hausdorff distance between ``alpha & B_1`` and ``beta & B_1``.

    Equals ``sin`` of the largest Morgan angle, i.e. the spectral norm of
    the part of ``alpha``'s frame orthogonal to ``beta``.  Zero-dimensional
    subspaces are at distance 0.
    """
    return unit_ball_hausdorff_any(alpha, beta)


def _principal_vectors(alpha, beta):
    U, s, Yt = np.linalg.svd(alpha.frame.T @ beta.frame)
    return alpha.frame @ U, np.clip(s, 0.0, 1.0), beta.frame @ Yt.T


def rotation_from_eigenbases(alpha, beta, v_alpha, v_perp):
    """Canonical rotation built from given eigenbases.

    ``v_alpha`` (columns) must be an orthonormal eigenbasis of
    ``dist(., beta)**2`` on ``alpha`` and ``v_perp`` one of
    ``dist(., beta_perp)**2`` on ``alpha_perp``.  Each basis vector is sent to
    its normalized projection onto ``beta`` (resp. ``beta_perp``).
    """
    Pb = beta.projector
    Pbp = np.eye(beta.ambient_dim) - Pb
    V = np.column_stack([v_alpha, v_perp])
    W = np.column_stack([Pb @ v_alpha, Pbp @ v_perp])
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms <= math.sin(ORTHOGONAL_MARGIN)):
        raise DegeneratePair("alpha meets beta_perp nontrivially")
    W = W / norms
    return W @ V.T


def canonical_rotation(alpha, beta):
    """The canonical rotation ``R(alpha, beta)`` in ``SO(ambient)``.

    ``R`` maps ``alpha`` onto ``beta``, is the identity on ``alpha & beta``
    and on ``alpha_perp & beta_perp``, does not depend on the choice of
    diagonalizing bases, and ``R(beta, alpha) = R(alpha, beta)^-1``.

    Raises
    ------
    DegeneratePair
        If some Morgan angle is within ``1e-8`` of ``pi/2``.
    """
    _check_pair(alpha, beta)
    k = alpha.ambient_dim
    if alpha.dim == 0 or alpha.dim == k:
        return np.eye(k)
    theta = _all_angles(alpha, beta)
    if theta[-1] >= math.pi / 2 - ORTHOGONAL_MARGIN:
        raise DegeneratePair(f"largest Morgan angle {theta[-1]:.3g} is too close to pi/2")
    va, _, wa = _principal_vectors(alpha, beta)
    vp, _, wp = _principal_vectors(alpha.complement(), beta.complement())
    V = np.column_stack([va, vp])
    W = np.column_stack([wa, wp])
    # principal pairs come out of the SVD with v_i . w_i = s_i >= 0
    return W @ V.T


def graph_subspace(L):
    """Graph ``{(x, L x)}`` of a linear map given as an ``(n, m)`` matrix."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n, m = L.shape
    return Subspace.span(np.vstack([np.eye(m), L]))


def half_difference_singular_values(L1, L2, tol=RANK_TOL):
    """The two nonzero singular values of ``(L1 - L2) / 2``, ascending.

    Raises
    ------
    RankMismatch
        If ``L1 - L2`` does not have rank exactly 2.
    """
    L1 = np.atleast_2d(np.asarray(L1, dtype=float))
    L2 = np.atleast_2d(np.asarray(L2, dtype=float))
    if L1.shape != L2.shape:
        raise DimensionMismatch("L1 and L2 must have the same shape")
    s = np.linalg.svd((L1 - L2) / 2.0, compute_uv=False)
    if len(s) < 2 or s[0] == 0.0 or s[1] <= tol * s[0]:
        raise RankMismatch("rank(L1 - L2) < 2")
    if len(s) > 2 and s[2] > tol * s[0]:
        raise RankMismatch("rank(L1 - L2) > 2")
    return float(s[1]), float(s[0])


def quasiconformality_ratio(B):
    """``max |Bx| / min |Bx|`` over unit ``x`` for a 2x2 map.

    Returns ``inf`` when the smallest singular value is below ``1e-14``
    (a degenerate, non-quasiconformal map).
    """
    B = np.asarray(B, dtype=float)
    if B.shape != (2, 2):
        raise DimensionMismatch("B must be 2x2")
    s = np.linalg.svd(B, compute_uv=False)
    if s[0] == 0.0:
        raise InvalidInput("B is the zero map")
    if s[1] < 1e-14:
        return math.inf
    return float(s[0] / s[1])


def random_subspace(ambient, dim, rng):
    """Haar-distributed random subspace."""
    G = rng.standard_normal((ambient, dim))
    q, _ = np.linalg.qr(G)
    return Subspace(q[:, :dim])
