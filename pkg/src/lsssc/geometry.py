"""Inradius and incoherence of symmetrized convex hulls.

For a symmetric polytope ``SC(P) = conv(+-p_1, ..., +-p_k)`` spanning a
carrier subspace ``S``, the restricted inradius is

    r_S = min_{u in S, |u| = 1} max_i |<p_i, u>| = 1 / R_S(SC(P)° ∩ S),

so it can be read off the farthest vertex of the polar polytope
``{v in S : |<p_i, v>| <= 1}``.  Vertex enumeration is exact and cheap in
dimension <= 4; beyond that a randomized search gives an upper bound.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .core import DimensionMismatchError, InvalidParameterError, SubspaceEnsemble, _as_matrix
from .solver import DEFAULT_OPTIONS, solve_lsssc

EXACT_MAX_DIM = 4
_CHUNK = 20_000
_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SymmetricPolytope:
    """``conv(+-p_1, ..., +-p_k)`` with generators stored as columns."""

    generators: np.ndarray
    carrier: np.ndarray | None = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if P.ndim != 2:
            raise DimensionMismatchError(f"generators must be a matrix, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise InvalidParameterError("generators must be finite")
        P = P.copy()
        P.setflags(write=False)
        object.__setattr__(self, "generators", P)
        if self.carrier is not None:
            S = np.atleast_2d(np.asarray(self.carrier, dtype=float))
            if S.shape[0] != P.shape[0]:
                raise DimensionMismatchError(
                    f"carrier has {S.shape[0]} rows, generators have {P.shape[0]}")
            if P.shape[1]:
                off = np.linalg.norm(P - S @ (S.T @ P), axis=0).max()
                if off > 1e-10 * max(1.0, np.abs(P).max()):
                    raise InvalidParameterError(
                        f"generators leave the carrier subspace (distance {off:.3g})")
            S = S.copy()
            S.setflags(write=False)
            object.__setattr__(self, "carrier", S)

    @property
    def k(self):
        return self.generators.shape[1]

    def coordinates(self, carrier=None):
        """Generators expressed in an orthonormal basis of the carrier."""
        S = self.carrier if carrier is None else np.asarray(carrier, dtype=float)
        if S is None:
            return self.generators
        return S.T @ self.generators


@dataclass(frozen=True)
class InradiusResult:
    value: float
    mode: str
    degenerate: bool = False
    lower_bound: float = 0.0  # certified lower bound (exact mode: == value)

    @property
    def gap(self):
        if self.value == 0:
            return 0.0
        return (self.value - self.lower_bound) / self.value


def _polytope(P, carrier):
    if isinstance(P, SymmetricPolytope):
        if carrier is not None and P.carrier is None:
            P = SymmetricPolytope(P.generators, carrier)
        return P
    return SymmetricPolytope(np.asarray(P, dtype=float), carrier)


def _spans(coords):
    d = coords.shape[0]
    if coords.shape[1] < d:
        return False
    sv = np.linalg.svd(coords, compute_uv=False)
    return sv[-1] > _RANK_TOL * max(1.0, sv[0])


def polar_vertices(coords):
    """Vertices of ``{v : |<p_i, v>| <= 1 for all i}`` (coords is d x k).

    Each vertex is where ``d`` linearly independent constraints are tight;
    both signs of a vertex are returned.
    """
    d, k = coords.shape
    signs = np.array([(1.0,) + s for s in itertools.product((1.0, -1.0), repeat=d - 1)])
    scale = max(1.0, np.abs(coords).max())
    found = []
    combos = itertools.combinations(range(k), d)
    while True:
        chunk = np.array(list(itertools.islice(combos, _CHUNK)), dtype=int)
        if chunk.size == 0:
            break
        M = np.transpose(coords[:, chunk], (1, 2, 0))  # (m, d, d): rows are p_j
        det = np.linalg.det(M)
        ok = np.abs(det) > 1e-12 * scale ** d
        if not np.any(ok):
            continue
        M = M[ok]
        V = np.linalg.solve(M, np.broadcast_to(signs.T, (M.shape[0], d, signs.shape[0])))
        V = np.transpose(V, (0, 2, 1)).reshape(-1, d)
        feas = np.abs(V @ coords).max(axis=1) <= 1.0 + 1e-9
        found.append(V[feas])
    if not found:
        return np.zeros((0, d))
    V = np.vstack(found)
    return np.vstack([V, -V])


def polar_circumradius(P, carrier=None):
    """Largest vertex norm of the polar polytope restricted to the carrier."""
    poly = _polytope(P, carrier)
    coords = poly.coordinates()
    if not _spans(coords):
        return np.inf
    V = polar_vertices(coords)
    return float(np.linalg.norm(V, axis=1).max())


def facet_inradius(P, carrier=None):
    """Inradius from the facets of the primal hull (qhull), an independent route."""
    poly = _polytope(P, carrier)
    coords = poly.coordinates()
    if not _spans(coords):
        return 0.0
    d = coords.shape[0]
    if d == 1:
        return float(np.abs(coords).max())
    pts = np.vstack([coords.T, -coords.T])
    hull = ConvexHull(pts)
    # equations are [unit normal, offset] with normal.x + offset <= 0 inside
    return float(np.min(-hull.equations[:, -1]))


def _support_value(coords, U):
    """max_i |<p_i, u>| for each column u of U."""
    return np.abs(coords.T @ U).max(axis=0)


def _snap_to_vertex(coords, u):
    """Solve the tight system at the ``d`` most active constraints around ``u``."""
    d = coords.shape[0]
    vals = coords.T @ u
    order = np.argsort(-np.abs(vals))[:d]
    M = coords[:, order].T
    if abs(np.linalg.det(M)) < 1e-12:
        return None
    v = np.linalg.solve(M, np.sign(vals[order]))
    if np.abs(coords.T @ v).max() > 1.0 + 1e-9:
        return None
    return v / np.linalg.norm(v)


def _randomized(coords, seed, restarts=None, steps=500):
    d, k = coords.shape
    restarts = restarts or 64 * d
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((d, restarts))
    U /= np.linalg.norm(U, axis=0)
    best_val = _support_value(coords, U)
    best_U = U.copy()
    for t in range(1, steps + 1):
        vals = coords.T @ U
        j = np.argmax(np.abs(vals), axis=0)
        g = coords[:, j] * np.sign(vals[j, np.arange(restarts)])
        g -= U * np.sum(U * g, axis=0)  # tangent part
        U = U - g / t
        U /= np.linalg.norm(U, axis=0)
        val = _support_value(coords, U)
        better = val < best_val
        best_val[better] = val[better]
        best_U[:, better] = U[:, better]
    value = float(best_val.min())
    for col in np.argsort(best_val)[: min(restarts, 8)]:
        u = _snap_to_vertex(coords, best_U[:, col])
        if u is not None:
            value = min(value, float(_support_value(coords, u[:, None])[0]))
    return value


def restricted_inradius_info(P, carrier=None, mode="auto", seed=0) -> InradiusResult:
    """Restricted inradius of ``SC(P)`` within its carrier, with diagnostics.

    ``mode`` is ``"exact"`` (polar vertex enumeration, dimension <= 4),
    ``"randomized"`` (projected subgradient descent over the sphere, an
    upper bound) or ``"auto"``.  Generators that fail to span the carrier
    give ``value = 0`` with ``degenerate = True``.
    """
    poly = _polytope(P, carrier)
    if poly.k == 0:
        raise InvalidParameterError("empty generator set")
    coords = poly.coordinates()
    d = coords.shape[0]
    if mode == "auto":
        mode = "exact" if d <= EXACT_MAX_DIM else "randomized"
    if mode not in ("exact", "randomized"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    if not _spans(coords):
        return InradiusResult(0.0, mode, degenerate=True)
    if mode == "exact":
        if d > EXACT_MAX_DIM:
            raise InvalidParameterError(
                f"exact mode supports carrier dimension <= {EXACT_MAX_DIM}, got {d}")
        R = float(np.linalg.norm(polar_vertices(coords), axis=1).max())
        return InradiusResult(1.0 / R, mode, lower_bound=1.0 / R)
    value = _randomized(coords, seed)
    # |P^T u|_inf >= |P^T u|_2 / sqrt(k) >= sigma_min / sqrt(k)
    lower = float(np.linalg.svd(coords, compute_uv=False)[-1] / np.sqrt(coords.shape[1]))
    return InradiusResult(value, mode, lower_bound=min(lower, value))


def restricted_inradius(P, carrier=None, mode="auto", seed=0) -> float:
    return restricted_inradius_info(P, carrier, mode, seed).value


@dataclass(frozen=True, eq=False)
class InradiusProfile:
    """Leave-one-out restricted inradii of every sample within its subspace."""

    per_column: np.ndarray  # r_{S_l}(Q_{-i}^{(l)}) for every column i
    r_ell: tuple
    r: float
    degenerate: tuple  # columns whose leave-one-out hull does not span S_l


def compute_r(Y, truth: SubspaceEnsemble, mode="auto", seed=0) -> InradiusProfile:
    Y = _as_matrix(Y)
    if Y.shape[1] != truth.N:
        raise DimensionMismatchError(
            f"Y has shape {Y.shape} but labels have length {truth.N}")
    per_col = np.zeros(truth.N)
    degenerate = []
    r_ell = []
    for ell in range(1, truth.L + 1):
        cols = truth.members(ell)
        U = truth.bases[ell - 1]
        coords = U.T @ Y[:, cols]
        for pos, i in enumerate(cols):
            sub = np.delete(coords, pos, axis=1)
            if sub.shape[1] == 0:
                res = InradiusResult(0.0, mode, degenerate=True)
            else:
                res = restricted_inradius_info(sub, None, mode, seed)
            per_col[i] = res.value
            if res.degenerate:
                degenerate.append(int(i))
        r_ell.append(float(per_col[cols].min()) if cols.size else 0.0)
    return InradiusProfile(per_col, tuple(r_ell), float(min(r_ell)), tuple(degenerate))


@dataclass(frozen=True, eq=False)
class Incoherence:
    mu_ell: tuple
    mu: float
    nu: np.ndarray  # n x N; column i is the same-subspace dual of sample i
    skipped: int  # columns with a zero dual
    flags: tuple = ()


def compute_incoherence(X, Y, truth: SubspaceEnsemble, lam, opts=DEFAULT_OPTIONS) -> Incoherence:
    """``mu_l = max |<v_i^(l), y>|`` over foreign clean points ``y``.

    ``v_i^(l)`` is the dual direction of ``P(x_i, X_{-i}^{(l)}, lam)``: only
    same-subspace columns enter the solve.
    """
    X = _as_matrix(X)
    Y = _as_matrix(Y)
    if X.shape != Y.shape or X.shape[1] != truth.N:
        raise DimensionMismatchError(
            f"X {X.shape}, Y {Y.shape} and labels ({truth.N}) disagree")
    n, N = X.shape
    nus = np.zeros((n, N))
    mu_ell = []
    skipped = 0
    flags = []
    if truth.L == 1:
        flags.append("single subspace: incoherence undefined, reported as 0")
    for ell in range(1, truth.L + 1):
        cols = truth.members(ell)
        foreign = np.flatnonzero(truth.labels != ell)
        if cols.size < 2:
            skipped += cols.size
            mu_ell.append(0.0)
            continue
        sol = solve_lsssc(X[:, cols], lam, opts)
        V = []
        for pos, i in enumerate(cols):
            nu = sol.columns[pos].nu
            nus[:, i] = nu
            nrm = np.linalg.norm(nu)
            if nrm == 0.0:
                skipped += 1
                continue
            V.append(nu / nrm)
        if foreign.size and V:
            mu_ell.append(float(np.abs(np.column_stack(V).T @ Y[:, foreign]).max()))
        else:
            mu_ell.append(0.0)
    if skipped:
        warnings.warn(f"{skipped} column(s) had a zero dual and were skipped", stacklevel=2)
    mu = max(mu_ell) if truth.L > 1 else 0.0
    return Incoherence(tuple(mu_ell) if truth.L > 1 else (), float(mu), nus, skipped,
                       tuple(flags))


def perturbation_inradius_bound(q_inradius, delta):
    """``r(T) >= r(Q) - delta`` for a hull perturbed by at most ``delta``.

    Returns None when ``r(Q) <= delta`` and the bound says nothing.
    """
    if q_inradius <= delta:
        return None
    return q_inradius - delta


def polar_duality_check(P, carrier=None):
    """``|r_S(T) * R_S(T° ∩ S) - 1|`` with ``r`` from qhull facets and ``R``
    from polar vertex enumeration."""
    poly = _polytope(P, carrier)
    coords = poly.coordinates()
    if coords.shape[0] > EXACT_MAX_DIM:
        raise InvalidParameterError(
            f"duality check needs carrier dimension <= {EXACT_MAX_DIM}")
    r = facet_inradius(poly)
    R = polar_circumradius(poly)
    return abs(r * R - 1.0)
