"""Independent reference computations used by the tests.

None of these share code with the library: they are brute-force
enumerations or closed forms, slow but easy to trust at tiny sizes.
"""
import itertools

import numpy as np


def lasso_sign_oracle(x, A, lam, tol=1e-9):
    """Exact minimizer of ``|c|_1 + lam/2 |x - A c|^2`` by sign-pattern enumeration.

    Every optimum satisfies ``G_SS c_S = b_S - s/lam`` on its support ``S``
    with signs ``s``, plus ``|lam (b - G c)| <= 1`` off the support.  All
    ``3^k`` patterns are tried and the best KKT point is returned as
    ``(c, objective)``.
    """
    x = np.asarray(x, dtype=float)
    A = np.asarray(A, dtype=float)
    k = A.shape[1]
    G = A.T @ A
    b = A.T @ x
    best_c, best_obj = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=k):
        s = np.array(pattern, dtype=float)
        S = np.flatnonzero(s)
        c = np.zeros(k)
        if S.size:
            M = G[np.ix_(S, S)]
            if np.linalg.matrix_rank(M) < S.size:
                continue
            c[S] = np.linalg.solve(M, b[S] - s[S] / lam)
            if np.any(np.sign(c[S]) != s[S]):
                continue
        grad = lam * (b - G @ c)
        if np.abs(grad).max(initial=0.0) > 1 + tol:
            continue
        e = x - A @ c
        obj = np.abs(c).sum() + 0.5 * lam * e @ e
        if obj < best_obj:
            best_c, best_obj = c, obj
    return best_c, float(best_obj)


def l1_vertex_oracle(y, B):
    """``min |c|_1 s.t. B c = y`` over all basic feasible solutions.

    Writes ``c = u - v`` with ``u, v >= 0`` and enumerates every choice of
    ``rank(B)`` columns of ``[B, -B]``; the LP optimum sits at one of them.
    """
    y = np.asarray(y, dtype=float)
    B = np.asarray(B, dtype=float)
    k = B.shape[1]
    M = np.hstack([B, -B])
    rank = np.linalg.matrix_rank(B)
    best = np.inf
    for cols in itertools.combinations(range(2 * k), rank):
        sub = M[:, cols]
        if np.linalg.matrix_rank(sub) < rank:
            continue
        w, *_ = np.linalg.lstsq(sub, y, rcond=None)
        if np.linalg.norm(sub @ w - y) > 1e-9 or np.any(w < -1e-12):
            continue
        best = min(best, float(w.sum()))
    return best


def sweep_inradius(coords, n_directions=1_000_000, seed=0):
    """Brute-force ``min_u max_i |<p_i, u>|`` over a fixed budget of unit directions.

    In two dimensions the directions are an even grid of half-circle angles.
    In three, half the budget is a Fibonacci sphere and the rest goes to
    successively finer caps around the best directions found so far.
    """
    coords = np.asarray(coords, dtype=float)
    d = coords.shape[0]

    def support(U):
        return np.abs(coords.T @ U).max(axis=0)

    if d == 1:
        return float(np.abs(coords).max())
    if d == 2:
        theta = np.linspace(0.0, np.pi, n_directions, endpoint=False)
        best = np.inf
        for chunk in np.array_split(theta, max(1, n_directions // 100_000)):
            best = min(best, float(support(np.vstack([np.cos(chunk), np.sin(chunk)])).min()))
        return best
    if d != 3:
        raise ValueError("direction sweep implemented for d <= 3")
    coarse = n_directions // 2
    i = np.arange(coarse) + 0.5
    z = 1.0 - 2.0 * i / coarse
    phi = np.pi * (1.0 + 5 ** 0.5) * i
    rad = np.sqrt(1.0 - z * z)
    U = np.vstack([rad * np.cos(phi), rad * np.sin(phi), z])
    vals = np.concatenate([support(Uc) for Uc in np.array_split(U, 10, axis=1)])
    order = np.argsort(vals)[:8]
    centers = U[:, order]
    best = float(vals[order[0]])
    width = 3.0 * np.sqrt(4.0 * np.pi / coarse)
    rng = np.random.default_rng(seed)
    rounds = 5
    per_center = (n_directions - coarse) // rounds // centers.shape[1]
    for _ in range(rounds):
        cand = []
        for c in centers.T:
            pts = c[:, None] + width * rng.uniform(-1.0, 1.0, (3, per_center))
            cand.append(pts / np.linalg.norm(pts, axis=0))
        C = np.hstack(cand)
        v = support(C)
        order = np.argsort(v)[:8]
        centers = C[:, order]
        best = min(best, float(v[order[0]]))
        width /= 8.0
    return best


def complete_graph_spectrum(N):
    """Normalized-Laplacian eigenvalues of K_N with unit weights, descending."""
    return np.array([N / (N - 1)] * (N - 1) + [0.0])


def random_block_affinity(rng, sizes, density=0.6):
    """Block-diagonal symmetric affinity whose blocks are connected random graphs."""
    N = sum(sizes)
    W = np.zeros((N, N))
    start = 0
    for s in sizes:
        idx = np.arange(start, start + s)
        B = rng.uniform(0.1, 1.0, (s, s)) * (rng.random((s, s)) < density)
        # a path keeps every block connected
        for a, b in zip(idx[:-1] - start, idx[1:] - start):
            B[a, b] = max(B[a, b], 0.5)
        B = np.triu(B, 1)
        W[np.ix_(idx, idx)] = B + B.T
        start += s
    return W
