"""Affinity graph, eigengap cluster count and spectral clustering."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

from .core import DimensionMismatchError, InvalidParameterError
from .solver import DEFAULT_OPTIONS, solve_lsssc

ISOLATED_DEGREE = 1e-12
_GAP_TIE_TOL = 1e-10
ZERO_EIG_TOL = 1e-8
GAP_RULES = ("relative", "absolute")


class DegenerateGraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Symmetric affinity with the spectrum of its normalized Laplacian.

    ``eigenvalues`` are sorted nonincreasing; ``eigenvectors[:, k]`` belongs
    to ``eigenvalues[k]``.  ``isolated`` lists zero-degree vertices, which
    were given degree ``ISOLATED_DEGREE`` for the normalization.
    """

    W: np.ndarray
    degrees: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    isolated: tuple
    trivial: bool

    @property
    def N(self):
        return self.W.shape[0]


def normalized_laplacian(W, degrees):
    s = 1.0 / np.sqrt(degrees)
    return np.eye(W.shape[0]) - s[:, None] * W * s[None, :]


def build_affinity(C) -> AffinityGraph:
    """``W = |C| + |C|^T`` and the spectrum of ``I - D^{-1/2} W D^{-1/2}``."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatchError(f"C must be square, got shape {C.shape}")
    A = np.abs(C)
    return affinity_from_weights(A + A.T)


def affinity_from_weights(W) -> AffinityGraph:
    """Graph for a symmetric nonnegative weight matrix (the diagonal is ignored)."""
    W = np.array(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionMismatchError(f"W must be square, got shape {W.shape}")
    if np.any(W < 0) or not np.array_equal(W, W.T):
        raise InvalidParameterError("W must be symmetric and nonnegative")
    np.fill_diagonal(W, 0.0)
    deg = W.sum(axis=1)
    isolated = tuple(int(i) for i in np.flatnonzero(deg <= 0))
    deg = np.where(deg > 0, deg, ISOLATED_DEGREE)
    Lap = normalized_laplacian(W, deg)
    Lap = 0.5 * (Lap + Lap.T)
    vals, vecs = np.linalg.eigh(Lap)
    vals = np.clip(vals, 0.0, 2.0)
    order = np.argsort(-vals, kind="stable")
    for arr in (W, deg):
        arr.setflags(write=False)
    return AffinityGraph(W, deg, vals[order], vecs[:, order], isolated,
                         trivial=not np.any(W))


def _gaps(vals, rule):
    if rule == "absolute":
        return vals[:-1] - vals[1:]
    # Eigenvalues within ZERO_EIG_TOL of zero count as exact zeros, so that
    # each connected component contributes one clean zero.
    vals = np.where(vals < ZERO_EIG_TOL, 0.0, vals)
    num = vals[:-1] - vals[1:]
    return np.divide(num, vals[:-1], out=np.zeros_like(num), where=vals[:-1] > 0)


def estimate_num_clusters(G: AffinityGraph, rule="relative") -> int:
    """``N - argmax_i gap_i`` over the descending spectrum ``sigma``.

    ``rule="absolute"`` uses ``gap_i = sigma_i - sigma_{i+1}``.  The default
    ``rule="relative"`` uses ``(sigma_i - sigma_{i+1}) / sigma_i``, which
    keeps the large gaps that sparse graphs show near the top of the
    spectrum from outvoting the jump above the near-zero eigenvalues.  Both
    give the number of connected components on a disconnected graph whose
    bottom gap dominates.  Ties within ``1e-10`` go to the smallest ``i``,
    i.e. the largest count.
    """
    if rule not in GAP_RULES:
        raise InvalidParameterError(f"rule must be one of {GAP_RULES}, got {rule!r}")
    if G.N < 2:
        raise InvalidParameterError("need at least two vertices")
    if G.trivial:
        raise DegenerateGraphError("all-zero affinity: no cluster structure")
    gaps = _gaps(G.eigenvalues, rule)
    i = int(np.flatnonzero(gaps >= gaps.max() - _GAP_TIE_TOL)[0]) + 1
    return G.N - i


def spectral_cluster(G: AffinityGraph, k, seed=0, n_init=20):
    """Normalized spectral clustering into ``k`` groups; labels are 1-based.

    Rows of the eigenvectors of the ``k`` smallest Laplacian eigenvalues are
    scaled to unit length and grouped by k-means (seeded, ``n_init``
    restarts).
    """
    k = int(k)
    N = G.N
    if not 1 <= k <= N:
        raise InvalidParameterError(f"cluster count must lie in [1, {N}], got {k}")
    if k == 1:
        return np.ones(N, dtype=np.int64)
    emb = G.eigenvectors[:, N - k:]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb / np.where(norms > 0, norms, 1.0)
    distinct = np.unique(np.round(emb, 10), axis=0).shape[0]
    if distinct < k:
        warnings.warn(f"embedding has {distinct} distinct rows for {k} clusters; "
                      "some clusters will merge", stacklevel=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=k, n_init=n_init, random_state=seed).fit(emb)
    # relabel by first appearance so the output does not depend on k-means ids
    _, first = np.unique(km.labels_, return_index=True)
    rank = {lab: r + 1 for r, lab in enumerate(km.labels_[np.sort(first)])}
    return np.array([rank[lab] for lab in km.labels_], dtype=np.int64)


def clustering_error(pred, truth, force_wrong=()):
    """Fraction of mislabeled points under the best matching of cluster ids.

    Points listed in ``force_wrong`` (e.g. isolated vertices) count as
    errors whatever their label.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionMismatchError(
            f"prediction has shape {pred.shape}, truth has shape {truth.shape}")
    if pred.size == 0:
        return 0.0
    p_ids, p_idx = np.unique(pred, return_inverse=True)
    t_ids, t_idx = np.unique(truth, return_inverse=True)
    counts = np.zeros((p_ids.size, t_ids.size))
    np.add.at(counts, (p_idx, t_idx), 1)
    rows, cols = linear_sum_assignment(-counts)
    correct = np.zeros(pred.size, dtype=bool)
    match = dict(zip(rows, cols))
    for i in range(pred.size):
        correct[i] = match.get(p_idx[i], -1) == t_idx[i]
    correct[list(force_wrong)] = False
    return float(1.0 - correct.mean())


@dataclass(frozen=True, eq=False)
class LSSSCResult:
    C: np.ndarray
    graph: AffinityGraph
    n_clusters: int
    labels: np.ndarray
    solution: object


def lsssc(X, lam, opts=DEFAULT_OPTIONS, seed=0, n_clusters=None, rule="relative"):
    """Run the full pipeline: coefficients, affinity, cluster count, clustering.

    ``n_clusters`` overrides the eigengap estimate when given.  An all-zero
    coefficient matrix raises ``DegenerateGraphError`` unless ``n_clusters``
    is given.
    """
    sol = solve_lsssc(X, lam, opts)
    G = build_affinity(sol.C)
    k = estimate_num_clusters(G, rule) if n_clusters is None else int(n_clusters)
    labels = spectral_cluster(G, k, seed)
    return LSSSCResult(sol.C, G, k, labels, sol)
