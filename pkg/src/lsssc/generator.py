"""Synthetic data from the union-of-random-subspaces model.

Every random draw comes from a stream keyed on ``(seed, purpose, index)``
where the index is a subspace or column number.  Nothing here ever looks at
sample values when choosing noise directions or mask positions, so the mask
for column ``j`` is the same whatever ``Y`` holds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (DataMatrix, DimensionMismatchError, InvalidParameterError,
                   MaskMatrix, SubspaceEnsemble)

_SUBSPACE, _POINTS, _NOISE, _MASK, _ADVERSARY = range(5)

NOISE_KINDS = ("none", "ball", "adversarial", "missing", "explicit")


def stream(seed, purpose, index):
    """Independent generator for one (purpose, index) pair under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    delta: float = 0.0
    missing: tuple = ()  # per-subspace missing-entry counts m_l
    Z: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidParameterError(f"noise kind must be one of {NOISE_KINDS}")
        if self.delta < 0:
            raise InvalidParameterError(f"delta must be >= 0, got {self.delta}")
        object.__setattr__(self, "missing", tuple(int(m) for m in self.missing))
        if self.kind == "explicit" and self.Z is None:
            raise InvalidParameterError("explicit noise needs a Z matrix")


@dataclass(frozen=True)
class GeneratorConfig:
    """Random union-of-subspaces model (dimensions, sampling densities) plus a corruption model."""

    n: int
    dims: tuple
    kappas: tuple
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        kappas = tuple(float(k) for k in self.kappas)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "kappas", kappas)
        if len(dims) != len(kappas):
            raise DimensionMismatchError(
                f"{len(dims)} subspace dimensions but {len(kappas)} kappas")
        if not dims:
            raise InvalidParameterError("need at least one subspace")
        for d, N_l in zip(dims, self.counts):
            if not 1 <= d <= self.n:
                raise InvalidParameterError(f"subspace dimension {d} outside [1, n={self.n}]")
            if N_l < d + 1:
                raise InvalidParameterError(
                    f"round(kappa*d) = {N_l} samples for d = {d}; need at least d + 1")
        if self.noise.kind == "missing":
            if len(self.noise.missing) != len(dims):
                raise DimensionMismatchError(
                    f"{len(self.noise.missing)} missing counts for {len(dims)} subspaces")
            for m in self.noise.missing:
                if not 0 <= m < self.n:
                    raise InvalidParameterError(f"missing count {m} outside [0, n)")

    @property
    def L(self):
        return len(self.dims)

    @property
    def counts(self):
        return [int(round(k * d)) for k, d in zip(self.kappas, self.dims)]

    @property
    def N(self):
        return sum(self.counts)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: DataMatrix
    Y: DataMatrix
    Z: np.ndarray
    truth: SubspaceEnsemble
    mask: MaskMatrix | None = None

    @property
    def delta(self):
        """Largest column norm of the corruption."""
        return float(np.linalg.norm(self.Z, axis=0).max())


def haar_basis(rng, n, d):
    """Orthonormal basis of a uniformly random d-dimensional subspace of R^n."""
    G = rng.standard_normal((n, d))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def sample_subspaces(n, dims, seed):
    """Draw one Haar-random basis per entry of ``dims``."""
    bases = []
    for ell, d in enumerate(dims):
        if d > n or d < 1:
            raise InvalidParameterError(f"cannot draw a {d}-dimensional subspace of R^{n}")
        bases.append(haar_basis(stream(seed, _SUBSPACE, ell), n, int(d)))
    return bases


def sample_points(bases, kappas, seed):
    """Uniform unit-sphere samples from each subspace.

    Returns the clean matrix ``Y`` (role ``clean``) and 1-based labels; the
    samples of subspace 1 come first, then subspace 2, and so on.
    """
    if len(bases) != len(kappas):
        raise DimensionMismatchError(f"{len(bases)} bases but {len(kappas)} kappas")
    cols, labels = [], []
    j = 0
    for ell, (U, kappa) in enumerate(zip(bases, kappas), start=1):
        U = np.asarray(U, dtype=float)
        d = U.shape[1]
        for _ in range(int(round(kappa * d))):
            rng = stream(seed, _POINTS, j)
            g = rng.standard_normal(d)
            nrm = np.linalg.norm(g)
            while nrm == 0.0:  # pragma: no cover - probability zero
                g = rng.standard_normal(d)
                nrm = np.linalg.norm(g)
            y = U @ (g / nrm)
            cols.append(y / np.linalg.norm(y))
            labels.append(ell)
            j += 1
    Y = np.column_stack(cols)
    return DataMatrix(Y, role="clean"), np.asarray(labels, dtype=np.int64)


def add_bounded_noise(Y, delta, seed, mode="ball", truth=None):
    """Corrupt each column with ``z_i`` of norm at most ``delta``.

    ``mode="ball"`` draws ``z_i`` uniformly from the radius-``delta`` ball.
    ``mode="adversarial"`` points ``z_i`` (norm exactly ``delta``) along the
    projection of ``y_i`` onto a randomly chosen *other* subspace, which
    needs ``truth``.  Returns ``(Z, X)``.
    """
    if delta < 0:
        raise InvalidParameterError(f"delta must be >= 0, got {delta}")
    Yv = np.asarray(Y, dtype=float)
    n, N = Yv.shape
    Z = np.zeros((n, N))
    if delta > 0:
        if mode == "ball":
            for j in range(N):
                rng = stream(seed, _NOISE, j)
                g = rng.standard_normal(n)
                radius = delta * rng.random() ** (1.0 / n)
                Z[:, j] = radius * g / np.linalg.norm(g)
        elif mode == "adversarial":
            if truth is None or truth.L < 2:
                raise InvalidParameterError("adversarial noise needs a truth with L >= 2")
            for j in range(N):
                own = truth.labels[j]
                others = [k for k in range(1, truth.L + 1) if k != own]
                k = others[stream(seed, _ADVERSARY, j).integers(len(others))]
                U = truth.bases[k - 1]
                direction = U @ (U.T @ Yv[:, j])
                nrm = np.linalg.norm(direction)
                if nrm < 1e-14:
                    direction = U[:, 0]
                    nrm = 1.0
                Z[:, j] = delta * direction / nrm
        else:
            raise InvalidParameterError(f"unknown noise mode {mode!r}")
    return Z, Yv + Z


def mask_for_column(n, m, seed, j):
    """Boolean observation vector with exactly ``m`` missing positions.

    Positions are the first ``m`` of a column-keyed random permutation, so
    masks for increasing ``m`` are nested.
    """
    observed = np.ones(n, dtype=bool)
    if m:
        observed[stream(seed, _MASK, j).permutation(n)[:m]] = False
    return observed


def apply_missing(Y, labels, m, seed):
    """Zero-fill ``m_l`` uniformly placed entries of every column of subspace ``l``.

    ``m`` is a single count or one count per subspace.  Returns
    ``(X, mask, Z)`` with ``X = Y * mask`` and ``Z = X - Y``.
    """
    Yv = np.asarray(Y, dtype=float)
    n, N = Yv.shape
    labels = np.asarray(labels)
    if labels.shape != (N,):
        raise DimensionMismatchError(f"Y has shape {Yv.shape} but labels have shape {labels.shape}")
    L = int(labels.max())
    caps = [int(m)] * L if np.ndim(m) == 0 else [int(v) for v in m]
    if len(caps) < L:
        raise DimensionMismatchError(f"{len(caps)} missing counts for {L} subspaces")
    for cap in caps:
        if not 0 <= cap < n:
            raise InvalidParameterError(f"missing count {cap} outside [0, n={n})")
    # Mask is fixed before Y's values are touched.
    omega = np.column_stack([mask_for_column(n, caps[labels[j] - 1], seed, j)
                             for j in range(N)])
    X = Yv * omega
    return X, MaskMatrix(omega), X - Yv


def generate(config: GeneratorConfig) -> Dataset:
    """Full draw: subspaces, clean points, then the configured corruption."""
    bases = sample_subspaces(config.n, config.dims, config.seed)
    Y, labels = sample_points(bases, config.kappas, config.seed)
    truth = SubspaceEnsemble(tuple(bases), labels)
    noise = config.noise
    mask = None
    if noise.kind == "none":
        Z, X = np.zeros(Y.shape), np.array(Y.values)
    elif noise.kind in ("ball", "adversarial"):
        Z, X = add_bounded_noise(Y, noise.delta, config.seed, mode=noise.kind, truth=truth)
    elif noise.kind == "missing":
        X, mask, Z = apply_missing(Y, labels, noise.missing, config.seed)
    else:
        Z = np.asarray(noise.Z, dtype=float)
        if Z.shape != Y.shape:
            raise DimensionMismatchError(f"Z has shape {Z.shape}, Y has shape {Y.shape}")
        X = Y.values + Z
    return Dataset(DataMatrix(X, role="observed"), Y, Z, truth, mask)
