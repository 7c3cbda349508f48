"""Shared domain types, tolerances and dataset validation.

Samples are stored as the columns of an ``n x N`` array.  Subspace labels
are 1-based at every public boundary (``1..L``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-8
DUAL_TOL = 1e-6
ORTHO_TOL = 1e-10
UNIT_TOL = 1e-12

ROLES = ("observed", "clean", "noise")


class DimensionMismatchError(ValueError):
    """Raised when two inputs disagree on a shared dimension."""


class InvalidParameterError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """The iterative solver ran out of iterations.

    ``residuals`` holds the final primal/dual residuals so callers can log
    how far from convergence the run ended.
    """

    def __init__(self, message, residuals=None, column=None):
        super().__init__(message)
        self.residuals = residuals or {}
        self.column = column


class DegenerateDualError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _as_matrix(X):
    if isinstance(X, DataMatrix):
        return X.values
    return np.asarray(X, dtype=float)


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """Dense ``n x N`` sample matrix with a role tag (observed, clean or noise)."""

    values: np.ndarray
    role: str = "observed"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise DimensionMismatchError(f"expected a 2-d matrix, got shape {vals.shape}")
        if self.role not in ROLES:
            raise InvalidParameterError(f"role must be one of {ROLES}, got {self.role!r}")
        problems = _matrix_problems(vals, self.role)
        if problems:
            raise InvalidParameterError("; ".join(problems))
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def column(self, i):
        return self.values[:, i]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def to_dict(self):
        return {"role": self.role, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["values"], dtype=float), role=d["role"])


@dataclass(frozen=True, eq=False)
class SubspaceEnsemble:
    """Ground truth: orthonormal bases ``U_l`` (n x d_l) and 1-based labels."""

    bases: tuple
    labels: np.ndarray

    def __post_init__(self):
        bases = tuple(_frozen(np.atleast_2d(np.asarray(U, dtype=float))) for U in self.bases)
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise DimensionMismatchError(f"labels must be 1-d, got shape {labels.shape}")
        if len(bases) == 0:
            raise InvalidParameterError("need at least one subspace")
        n = bases[0].shape[0]
        for k, U in enumerate(bases, start=1):
            if U.shape[0] != n:
                raise DimensionMismatchError(
                    f"basis {k} has {U.shape[0]} rows, basis 1 has {n}")
            if U.shape[1] < 1:
                raise InvalidParameterError(f"basis {k} is empty")
            err = np.abs(U.T @ U - np.eye(U.shape[1])).max()
            if err > ORTHO_TOL:
                raise InvalidParameterError(
                    f"basis {k} is not orthonormal (max |U^T U - I| = {err:.3g})")
        if labels.size and not np.all(np.equal(np.mod(labels, 1), 0)):
            raise InvalidParameterError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size and (labels.min() < 1 or labels.max() > len(bases)):
            raise InvalidParameterError(
                f"labels must lie in [1, {len(bases)}], got range "
                f"[{labels.min()}, {labels.max()}]")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "labels", _frozen(labels, dtype=np.int64))

    @property
    def L(self) -> int:
        return len(self.bases)

    @property
    def n(self) -> int:
        return self.bases[0].shape[0]

    @property
    def N(self) -> int:
        return self.labels.size

    @property
    def dims(self):
        return [U.shape[1] for U in self.bases]

    @property
    def counts(self):
        return [int(np.sum(self.labels == k)) for k in range(1, self.L + 1)]

    @property
    def kappas(self):
        return [c / d for c, d in zip(self.counts, self.dims)]

    def members(self, ell):
        """0-based column indices of samples with label ``ell`` (1-based)."""
        return np.flatnonzero(self.labels == ell)

    def to_dict(self):
        return {"bases": [U.tolist() for U in self.bases],
                "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(np.array(U, dtype=float) for U in d["bases"]),
                   np.array(d["labels"], dtype=np.int64))


@dataclass(frozen=True, eq=False)
class MaskMatrix:
    """Boolean observation pattern; ``True`` marks an observed entry."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 2:
            raise DimensionMismatchError(f"mask must be 2-d, got shape {e.shape}")
        object.__setattr__(self, "entries", _frozen(e, dtype=bool))

    @property
    def missing_per_column(self):
        return (~self.entries).sum(axis=0)

    def to_dict(self):
        return {"entries": self.entries.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["entries"], dtype=bool))


@dataclass(frozen=True, eq=False)
class ColumnSolution:
    """Primal/dual triple ``(c, e, nu)`` of one per-column problem.

    ``nu`` is always recovered as ``lam * e`` at the returned primal point.
    """

    c: np.ndarray
    e: np.ndarray
    nu: np.ndarray
    support: tuple
    objective: float
    lam: float
    iterations: int = 0
    polished: bool = False
    degenerate: bool = False
    history: tuple = ()

    def __post_init__(self):
        for name in ("c", "e", "nu"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "support", tuple(int(j) for j in self.support))
        object.__setattr__(self, "history", tuple(float(h) for h in self.history))

    def residuals(self, x, A):
        """KKT residuals of this triple against ``P(x, A, lam)``."""
        x = np.asarray(x, dtype=float)
        A = np.asarray(A, dtype=float)
        corr = A.T @ self.nu
        S = list(self.support)
        sign_res = float(np.abs(corr[S] - np.sign(self.c[S])).max()) if S else 0.0
        return {
            "feasibility": float(np.abs(self.e - (x - A @ self.c)).max()) if x.size else 0.0,
            "slackness": float(np.abs(self.nu - self.lam * self.e).max()) if x.size else 0.0,
            "dual_inf": float(np.abs(corr).max()) if corr.size else 0.0,
            "sign": sign_res,
        }

    def to_dict(self):
        return {"c": self.c.tolist(), "e": self.e.tolist(), "nu": self.nu.tolist(),
                "support": list(self.support), "objective": self.objective,
                "lam": self.lam, "iterations": self.iterations,
                "polished": self.polished, "degenerate": self.degenerate,
                "history": list(self.history)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["c"], dtype=float), np.array(d["e"], dtype=float),
                   np.array(d["nu"], dtype=float), tuple(d["support"]),
                   float(d["objective"]), float(d["lam"]), int(d["iterations"]),
                   bool(d["polished"]), bool(d["degenerate"]), tuple(d["history"]))


@dataclass(frozen=True)
class GeometrySummary:
    r_ell: tuple
    r: float
    mu_ell: tuple
    mu: float
    delta: float
    lam_lo: float
    lam_hi: float
    criterion_holds: bool
    flags: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "r_ell", tuple(float(v) for v in self.r_ell))
        object.__setattr__(self, "mu_ell", tuple(float(v) for v in self.mu_ell))
        object.__setattr__(self, "flags", tuple(str(f) for f in self.flags))
        if self.delta < 0 or self.mu < 0 or any(m < 0 for m in self.mu_ell):
            raise InvalidParameterError("delta and incoherence values must be nonnegative")
        if self.criterion_holds and not self.lam_lo < self.lam_hi:
            raise InvalidParameterError("criterion holds but the lambda interval is empty")

    def to_dict(self):
        return {"r_ell": list(self.r_ell), "r": self.r, "mu_ell": list(self.mu_ell),
                "mu": self.mu, "delta": self.delta, "lam_lo": self.lam_lo,
                "lam_hi": self.lam_hi, "criterion_holds": self.criterion_holds,
                "flags": list(self.flags)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["r_ell"]), float(d["r"]), tuple(d["mu_ell"]), float(d["mu"]),
                   float(d["delta"]), float(d["lam_lo"]), float(d["lam_hi"]),
                   bool(d["criterion_holds"]), tuple(d.get("flags", ())))


def _matrix_problems(vals, role="observed"):
    problems = []
    n, N = vals.shape
    if n < 1:
        problems.append(f"need n >= 1 rows, got {n}")
    if N < 2:
        problems.append(f"need N >= 2 columns, got {N}")
    bad = np.argwhere(~np.isfinite(vals))
    for i, j in bad:
        problems.append(f"non-finite entry at ({i},{j})")
    if role == "clean" and not bad.size and N:
        norms = np.linalg.norm(vals, axis=0)
        off = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
        for j in off:
            problems.append(f"clean column {j} has norm {norms[j]!r}, expected 1")
    return problems


def validate_dataset(X, truth):
    """List the invariants violated by ``(X, truth)``; an empty list means valid.

    A label vector whose length disagrees with the number of columns is a
    contract error rather than a finding and raises ``DimensionMismatchError``.
    """
    role = X.role if isinstance(X, DataMatrix) else "observed"
    vals = np.asarray(_as_matrix(X), dtype=float)
    if vals.ndim != 2:
        raise DimensionMismatchError(f"X must be 2-d, got shape {vals.shape}")
    labels = np.asarray(truth.labels)
    if labels.shape[0] != vals.shape[1]:
        raise DimensionMismatchError(
            f"X has shape {vals.shape} (N={vals.shape[1]}) but labels have shape "
            f"{labels.shape}")
    if truth.n != vals.shape[0]:
        raise DimensionMismatchError(
            f"X has shape {vals.shape} (n={vals.shape[0]}) but bases have "
            f"{truth.n} rows")

    report = _matrix_problems(vals, role)
    finite = np.isfinite(vals)
    zero_cols = np.flatnonzero(np.all((vals == 0) & finite, axis=0))
    for j in zero_cols:
        report.append(f"column {j} is identically zero")
    for k, cnt in enumerate(truth.counts, start=1):
        if cnt == 0:
            report.append(f"subspace {k} has no samples")
    if role == "clean" and not np.any(~finite):
        for k, U in enumerate(truth.bases, start=1):
            cols = truth.members(k)
            if cols.size:
                resid = vals[:, cols] - U @ (U.T @ vals[:, cols])
                worst = np.linalg.norm(resid, axis=0)
                for j, w in zip(cols, worst):
                    if w > 1e-10:
                        report.append(f"clean column {j} is off subspace {k} by {w:.3g}")
    return report
