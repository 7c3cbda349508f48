"""Per-column LS-SSC solves with exact dual recovery.

The primal ``min ||c||_1 + lam/2 ||x - A c||^2`` is solved by ADMM on the
splitting ``c = z`` (``z`` carries the l1 term).  Every few iterations the
sign pattern of ``z`` is used to solve the reduced stationarity system
exactly; if the resulting point satisfies all KKT conditions the solve stops
there.  The dual is always read off the primal as ``nu = lam * e``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .core import (ColumnSolution, ConvergenceError, DegenerateDualError,
                   DimensionMismatchError, InfeasibleError, InvalidParameterError)

# Acceptance threshold for the exact active-set step; far below DUAL_TOL.
_POLISH_TOL = 1e-10
# Fallback search over near-active sets once ADMM has nearly settled.
_NEAR_ACTIVE = 1e-3
_NEAR_CONVERGED = 1e-5
_MAX_NEAR_ACTIVE = 10


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 50_000
    eps_primal: float = 1e-10
    eps_dual: float = 1e-10
    rho: float = 1.0
    support_rel: float = 1e-6
    check_every: int = 10
    polish: bool = True
    init_seed: int | None = None  # None starts ADMM from zero

    def __post_init__(self):
        if self.eps_primal <= 0 or self.eps_dual <= 0 or self.support_rel <= 0:
            raise InvalidParameterError("solver tolerances must be positive")
        if self.rho <= 0:
            raise InvalidParameterError("rho must be positive")
        if self.max_iterations < 1 or self.check_every < 1:
            raise InvalidParameterError("iteration counts must be positive")


DEFAULT_OPTIONS = SolverOptions()


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def support_threshold(c, rel=1e-6):
    """``tau_supp = rel * max(1, ||c||_inf)``."""
    cmax = float(np.abs(c).max()) if np.size(c) else 0.0
    return rel * max(1.0, cmax)


def objective(x, A, c, lam):
    e = np.asarray(x) - np.asarray(A) @ c
    return float(np.abs(c).sum() + 0.5 * lam * e @ e)


def _polish(G, b, z, lam, allowed):
    """Exact KKT point on the sign pattern of ``z``, or None.

    Works in Gram form: ``A^T nu = lam (b - G c)``.  ``allowed`` masks the
    coordinates that belong to the problem (a pinned-zero column is excluded
    from the dual-feasibility check).
    """
    S = np.flatnonzero(z)
    return _polish_on(G, b, S, np.sign(z[S]), lam, allowed)


def _polish_near_active(G, b, z, lam, allowed):
    """Try small sign-consistent subsets of the nearly active set.

    Degenerate problems (many columns in a low-dimensional span) leave ADMM
    with spurious coordinates that shrink very slowly; the exact solution
    then lives on a subset of the columns whose correlation is close to 1.
    """
    corr = lam * (b - G @ z)
    near = np.flatnonzero(allowed & (np.abs(corr) >= 1.0 - _NEAR_ACTIVE))
    near = near[np.argsort(-np.abs(corr[near]), kind="stable")][:_MAX_NEAR_ACTIVE]
    rank = np.linalg.matrix_rank(G[np.ix_(near, near)]) if near.size else 0
    for k in range(1, rank + 1):
        for S in combinations(near.tolist(), k):
            S = np.array(S)
            c = _polish_on(G, b, S, np.sign(corr[S]), lam, allowed)
            if c is not None:
                return c
    return None


def _polish_on(G, b, S, s, lam, allowed):
    c = np.zeros(G.shape[0])
    if S.size:
        G_SS = G[np.ix_(S, S)]
        rhs = b[S] - s / lam
        try:
            cS = np.linalg.solve(G_SS, rhs)
        except np.linalg.LinAlgError:
            cS = np.linalg.lstsq(G_SS, rhs, rcond=None)[0]
        if np.abs(G_SS @ cS - rhs).max() > _POLISH_TOL * max(1.0, np.abs(rhs).max()):
            return None
        if np.any(np.sign(cS) != s):
            return None
        c[S] = cS
    corr = lam * (b - G @ c)
    if np.abs(corr[allowed]).max(initial=0.0) > 1.0 + _POLISH_TOL:
        return None
    return c


def _admm(G, B, lam, opts, forbid=None, xnorm2=None):
    """Batched ADMM over the columns of ``B = A^T X``.

    Returns ``(C, iterations, polished, histories)``; column ``j`` of ``C``
    solves the problem with right-hand side ``B[:, j]`` and entries where
    ``forbid[:, j]`` is True pinned at zero.
    """
    k, m = B.shape
    if forbid is None:
        forbid = np.zeros((k, m), dtype=bool)
    allowed = ~forbid
    w, Q = np.linalg.eigh(G)
    w = np.clip(w, 0.0, None)
    rho = opts.rho
    scale = 1.0 / (lam * w + rho)

    if opts.init_seed is None:
        Z = np.zeros((k, m))
        U = np.zeros((k, m))
    else:
        rng = np.random.default_rng(opts.init_seed)
        Z = rng.standard_normal((k, m))
        U = rng.standard_normal((k, m)) / rho
        Z[forbid] = 0.0

    out = np.zeros((k, m))
    iters = np.zeros(m, dtype=int)
    polished = np.zeros(m, dtype=bool)
    histories = [[] for _ in range(m)]
    act = np.arange(m)
    LB = lam * B
    rp = rd = np.full(m, np.inf)

    for it in range(1, opts.max_iterations + 1):
        Za, Ua = Z[:, act], U[:, act]
        rhs = LB[:, act] + rho * (Za - Ua)
        C = Q @ (scale[:, None] * (Q.T @ rhs))
        Zn = soft_threshold(C + Ua, 1.0 / rho)
        Zn[forbid[:, act]] = 0.0
        U[:, act] = Ua + C - Zn
        rp = np.abs(C - Zn).max(axis=0)
        rd = rho * np.abs(Zn - Za).max(axis=0)
        Z[:, act] = Zn

        if it % opts.check_every and it != opts.max_iterations:
            continue
        finished = []
        for pos, j in enumerate(act):
            z = Z[:, j]
            if xnorm2 is not None:
                histories[j].append(
                    float(np.abs(z).sum()
                          + 0.5 * lam * (xnorm2[j] - 2 * B[:, j] @ z + z @ G @ z)))
            c = None
            if opts.polish:
                c = _polish(G, B[:, j], z, lam, allowed[:, j])
                near = max(rp[pos], rd[pos]) < _NEAR_CONVERGED
                if c is None and near and it % (10 * opts.check_every) == 0:
                    c = _polish_near_active(G, B[:, j], z, lam, allowed[:, j])
            if c is not None:
                out[:, j] = c
                polished[j] = True
            elif rp[pos] <= opts.eps_primal and rd[pos] <= opts.eps_dual:
                out[:, j] = z
            else:
                continue
            iters[j] = it
            finished.append(pos)
        if finished:
            keep = np.ones(act.size, dtype=bool)
            keep[finished] = False
            act = act[keep]
        if act.size == 0:
            break
    if act.size:
        j = int(act[0])
        pos = 0
        raise ConvergenceError(
            f"ADMM did not converge in {opts.max_iterations} iterations "
            f"({act.size} column(s) unfinished)",
            residuals={"primal": float(rp[pos]), "dual": float(rd[pos])},
            column=j)
    return out, iters, polished, histories


def _finish(x, A, c, lam, opts, iterations=0, polished=False, history=()):
    e = x - A @ c
    nu = lam * e
    tau = support_threshold(c, opts.support_rel)
    support = np.flatnonzero(np.abs(c) > tau)
    obj = float(np.abs(c).sum() + 0.5 * lam * e @ e)
    return ColumnSolution(c, e, nu, tuple(support), obj, float(lam), int(iterations),
                          bool(polished), False, tuple(history))


def _zero_solution(k, n, lam):
    return ColumnSolution(np.zeros(k), np.zeros(n), np.zeros(n), (), 0.0, float(lam),
                          0, True, True, ())


def _check_lam(lam):
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")


def solve_column(x, A, lam, opts: SolverOptions = DEFAULT_OPTIONS) -> ColumnSolution:
    """Solve ``P(x, A, lam)``: ``min ||c||_1 + lam/2 ||e||^2`` s.t. ``e = x - A c``.

    Raises ``ConvergenceError`` (carrying the final residuals) when the
    iteration budget runs out.  ``x = 0`` returns the zero solution with the
    ``degenerate`` flag set.
    """
    _check_lam(lam)
    x = np.asarray(x, dtype=float).ravel()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] < 1:
        raise DimensionMismatchError(f"A must be a matrix with >= 1 column, got shape {A.shape}")
    if A.shape[0] != x.size:
        raise DimensionMismatchError(f"x has length {x.size} but A has shape {A.shape}")
    if not np.any(x):
        return _zero_solution(A.shape[1], x.size, lam)
    G = A.T @ A
    b = A.T @ x
    C, iters, pol, hist = _admm(G, b[:, None], lam, opts, xnorm2=np.array([x @ x]))
    return _finish(x, A, C[:, 0], lam, opts, iters[0], pol[0], hist[0])


@dataclass(frozen=True, eq=False)
class LSSSCSolution:
    C: np.ndarray
    columns: tuple
    lam: float

    @property
    def objective(self):
        return float(sum(col.objective for col in self.columns))


def lsssc_objective(X, C, lam):
    """Full-matrix objective ``||C||_1 + lam/2 ||X C - X||_F^2``."""
    X = np.asarray(X, dtype=float)
    R = X @ C - X
    return float(np.abs(C).sum() + 0.5 * lam * np.sum(R * R))


def solve_lsssc(X, lam, opts: SolverOptions = DEFAULT_OPTIONS) -> LSSSCSolution:
    """Coefficient matrix of LS-SSC, one ``P(x_i, X_{-i}, lam)`` per column.

    Column ``i`` of ``C`` is the solution for sample ``i`` with a zero
    inserted at position ``i``; the per-column solutions (indexed against
    ``X_{-i}``) are returned alongside.
    """
    _check_lam(lam)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DimensionMismatchError(f"need an n x N matrix with N >= 2, got shape {X.shape}")
    n, N = X.shape
    xnorm2 = np.einsum("ij,ij->j", X, X)
    live = np.flatnonzero(xnorm2 > 0)
    G = X.T @ X
    C = np.zeros((N, N))
    iters = np.zeros(N, dtype=int)
    pol = np.zeros(N, dtype=bool)
    hist = [[] for _ in range(N)]
    if live.size:
        forbid = np.zeros((N, live.size), dtype=bool)
        forbid[live, np.arange(live.size)] = True
        try:
            Cl, it_l, pol_l, hist_l = _admm(G, G[:, live], lam, opts, forbid, xnorm2[live])
        except ConvergenceError as err:
            err.column = int(live[err.column])
            raise
        C[:, live] = Cl
        iters[live], pol[live] = it_l, pol_l
        for pos, j in enumerate(live):
            hist[j] = hist_l[pos]
    np.fill_diagonal(C, 0.0)

    columns = []
    for i in range(N):
        A = np.delete(X, i, axis=1)
        if i not in set(live.tolist()):
            columns.append(_zero_solution(N - 1, n, lam))
            continue
        columns.append(_finish(X[:, i], A, np.delete(C[:, i], i), lam, opts,
                               iters[i], pol[i], hist[i]))
    return LSSSCSolution(C, tuple(columns), float(lam))


def dual_direction(x, A, lam, opts: SolverOptions = DEFAULT_OPTIONS, solution=None):
    """Unit dual direction ``nu / ||nu||`` of ``P(x, A, lam)``."""
    sol = solution if solution is not None else solve_column(x, A, lam, opts)
    nrm = np.linalg.norm(sol.nu)
    if sol.degenerate or nrm == 0.0:
        raise DegenerateDualError("dual variable is zero (x = 0); no dual direction")
    return sol.nu / nrm


@dataclass(frozen=True, eq=False)
class NoiselessSolution:
    c: np.ndarray
    nu: np.ndarray
    l1: float


def solve_noiseless_l1(y, B) -> NoiselessSolution:
    """``min ||c||_1`` s.t. ``B c = y`` with its minimal-norm dual optimum.

    The LP dual ``max <y, nu>`` s.t. ``||B^T nu||_inf <= 1`` is read from the
    equality marginals and projected onto ``span(B)``, which keeps it optimal
    because ``y`` and every column of ``B`` live there.
    """
    y = np.asarray(y, dtype=float).ravel()
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != y.size:
        raise DimensionMismatchError(f"y has length {y.size} but B has shape {B.shape}")
    k = B.shape[1]
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    gap = np.linalg.norm(B @ coef - y)
    if gap > 1e-10 * max(1.0, np.linalg.norm(y)):
        raise InfeasibleError(f"y is not in span(B): residual {gap:.3g}")
    res = linprog(np.ones(2 * k), A_eq=np.hstack([B, -B]), b_eq=y,
                  bounds=[(0, None)] * (2 * k), method="highs")
    if res.status != 0:  # pragma: no cover - feasibility was checked above
        raise InfeasibleError(f"LP failed: {res.message}")
    c = res.x[:k] - res.x[k:]
    nu = np.asarray(res.eqlin.marginals, dtype=float)
    # HiGHS marginals are d(objective)/d(b_eq), which is the dual nu here.
    Ub, sv, _ = np.linalg.svd(B, full_matrices=False)
    rank = int(np.sum(sv > 1e-12 * sv.max())) if sv.size else 0
    Ub = Ub[:, :rank]
    nu = Ub @ (Ub.T @ nu)
    return NoiselessSolution(c, nu, float(np.abs(c).sum()))
