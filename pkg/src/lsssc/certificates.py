"""Optimality certificates, detection checks and closed-form criteria.

Every criterion returns a ``CriterionReport``.  When a criterion's own
hypotheses fail (for instance ``r <= 0``) the report says so through
``hypotheses_hold = False`` and carries ``verdict = False`` without implying
anything about the data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DUAL_TOL, FEAS_TOL, InvalidParameterError, _as_matrix
from .solver import DEFAULT_OPTIONS, solve_column, support_threshold

DEFAULT_C_KAPPA = 1.0 / math.sqrt(8.0)
C1 = 1.0 / 48.0
C2 = 1.0 / (10.0 * math.sqrt(2.0))
C3 = C2 ** 2 / 4.0


@dataclass(frozen=True)
class CriterionReport:
    name: str
    hypotheses_hold: bool
    verdict: bool
    margin: float
    inputs: dict = field(default_factory=dict)
    interval: tuple | None = None
    bound: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict and not self.hypotheses_hold:
            raise ValueError("a criterion cannot hold when its hypotheses fail")

    def to_dict(self):
        return {"name": self.name, "hypotheses_hold": self.hypotheses_hold,
                "verdict": self.verdict, "margin": self.margin, "inputs": dict(self.inputs),
                "interval": list(self.interval) if self.interval is not None else None,
                "bound": self.bound, "details": dict(self.details)}

    @classmethod
    def from_dict(cls, d):
        iv = d.get("interval")
        return cls(d["name"], bool(d["hypotheses_hold"]), bool(d["verdict"]),
                   float(d["margin"]), dict(d.get("inputs", {})),
                   tuple(iv) if iv is not None else None, d.get("bound"),
                   dict(d.get("details", {})))


# -- dual certificates -------------------------------------------------------

@dataclass(frozen=True)
class CertificateCheck:
    sign_match: bool        # A_S^T nu = sign(c_S)
    slackness: bool         # nu = lam e
    inner_feasible: bool    # ||A_{T minus S}^T nu||_inf <= 1
    outer_strict: bool      # ||A_{T^c}^T nu||_inf < 1
    margins: dict

    @property
    def holds(self):
        return self.sign_match and self.slackness and self.inner_feasible and self.outer_strict


def check_optimality_certificate(A, x, c, e, nu, lam, S, T) -> CertificateCheck:
    """Check the four dual-certificate conditions for ``P(x, A, lam)``.

    ``S`` is the support of ``c`` and ``T`` a superset of it (the columns
    from the sample's own subspace).  When all four hold, every optimal
    solution vanishes outside ``T``.  The last condition is strict: it
    counts as satisfied only with slack of at least ``DUAL_TOL``.
    """
    A = np.asarray(A, dtype=float)
    x, c, e, nu = (np.asarray(v, dtype=float) for v in (x, c, e, nu))
    k = A.shape[1]
    S = sorted(int(j) for j in S)
    T = sorted(int(j) for j in T)
    if not set(S) <= set(T):
        raise InvalidParameterError(f"support {S} is not contained in T {T}")
    if any(j < 0 or j >= k for j in T):
        raise InvalidParameterError(f"T has indices outside [0, {k})")
    feas = float(np.abs(e - (x - A @ c)).max(initial=0.0))
    if feas > FEAS_TOL * max(1.0, float(np.abs(x).max(initial=0.0))):
        raise InvalidParameterError(f"(c, e) is not feasible: |e - (x - Ac)| = {feas:.3g}")
    corr = A.T @ nu
    rest = [j for j in T if j not in S]
    outside = [j for j in range(k) if j not in set(T)]
    sign_res = float(np.abs(corr[S] - np.sign(c[S])).max(initial=0.0))
    slack_res = float(np.linalg.norm(nu - lam * e))
    inner = float(np.abs(corr[rest]).max(initial=0.0))
    outer = float(np.abs(corr[outside]).max(initial=0.0))
    margins = {"sign": sign_res, "slackness": slack_res,
               "inner": 1.0 - inner, "outer": 1.0 - outer}
    return CertificateCheck(
        sign_match=sign_res <= DUAL_TOL,
        slackness=slack_res <= FEAS_TOL * (1.0 + float(np.linalg.norm(nu))),
        inner_feasible=inner <= 1.0 + DUAL_TOL,
        outer_strict=outer < 1.0 - DUAL_TOL,
        margins=margins,
    )


@dataclass(frozen=True, eq=False)
class DualCertificate:
    A: np.ndarray
    x: np.ndarray
    c: np.ndarray
    e: np.ndarray
    nu: np.ndarray
    lam: float
    S: tuple
    T: tuple

    def check(self):
        return check_optimality_certificate(self.A, self.x, self.c, self.e, self.nu,
                                            self.lam, self.S, self.T)


def construct_dual_certificate(X, labels, i, lam, opts=DEFAULT_OPTIONS) -> DualCertificate:
    """Candidate certificate for column ``i`` built from its own subspace.

    Solves ``P(x_i, X_{-i}^{(l)}, lam)`` on same-label columns only, embeds
    the coefficients into ``X_{-i}`` coordinates (zero elsewhere) and uses
    that problem's dual as ``nu``.
    """
    X = _as_matrix(X)
    labels = np.asarray(labels)
    N = X.shape[1]
    others = np.array([j for j in range(N) if j != i])
    A = X[:, others]
    T = np.flatnonzero(labels[others] == labels[i])
    sol = solve_column(X[:, i], A[:, T], lam, opts)
    c = np.zeros(N - 1)
    c[T] = sol.c
    S = tuple(int(T[j]) for j in sol.support)
    c_exact = np.zeros(N - 1)
    c_exact[list(S)] = c[list(S)]
    e = X[:, i] - A @ c_exact
    return DualCertificate(A, X[:, i].copy(), c_exact, e, lam * e, float(lam), S,
                           tuple(int(t) for t in T))


# -- properties of C ---------------------------------------------------------

def _column_thresholds(C, tau):
    if tau is not None:
        return np.full(C.shape[1], float(tau))
    return np.array([support_threshold(C[:, i]) for i in range(C.shape[1])])


def check_subspace_detection(C, labels, tau=None):
    """No coefficient links samples from different subspaces.

    Returns ``(holds, false_positives)`` where each false positive is
    ``(i, j, C[j, i])``: sample ``j`` used to represent sample ``i``.
    """
    C = np.asarray(C, dtype=float)
    labels = np.asarray(labels)
    taus = _column_thresholds(C, tau)
    cross = labels[:, None] != labels[None, :]
    hits = np.argwhere(cross & (np.abs(C) > taus[None, :]))
    fps = [(int(i), int(j), float(C[j, i])) for j, i in hits]
    fps.sort()
    return not fps, fps


def check_nontrivial(C, tau=None):
    """Every column carries at least one coefficient above the threshold."""
    C = np.asarray(C, dtype=float)
    taus = _column_thresholds(C, tau)
    zero = [int(i) for i in range(C.shape[1]) if not np.any(np.abs(C[:, i]) > taus[i])]
    return not zero, zero


# -- deterministic criteria --------------------------------------------------

def deterministic_lambda_interval(r, mu):
    return 5.0 / (2.0 * r + 3.0 * mu), 15.0 / (2.0 * r + 8.0 * mu)


def deterministic_criterion(r, mu, delta) -> CriterionReport:
    """Geometric separation ``delta < (r - mu)/5`` and its lambda window."""
    inputs = {"r": r, "mu": mu, "delta": delta}
    hyp = r > 0 and mu >= 0 and delta >= 0
    if not hyp:
        return CriterionReport("deterministic", False, False, float("nan"), inputs)
    margin = (r - mu) / 5.0 - delta
    return CriterionReport("deterministic", True, margin > 0, margin, inputs,
                           interval=deterministic_lambda_interval(r, mu))


def lambda_in_interval(lam, interval):
    lo, hi = interval
    return lo < lam < hi


def intermediate_detection_criterion(r_ell, mu_ell, delta, lam) -> CriterionReport:
    """Per-subspace ``2 lam delta < (r_l - mu_l - 2 delta)/(mu_l + delta)``."""
    r_ell = list(np.atleast_1d(r_ell).astype(float))
    mu_ell = list(np.atleast_1d(mu_ell).astype(float))
    per, margins, vacuous = [], [], []
    for r, mu in zip(r_ell, mu_ell):
        denom = mu + delta
        if denom <= 0:
            ok = r > 0
            per.append(ok)
            margins.append(math.inf if ok else -math.inf)
            vacuous.append(True)
            continue
        rhs = (r - mu - 2.0 * delta) / denom
        lhs = 2.0 * lam * delta
        per.append(lhs < rhs)
        margins.append(rhs - lhs)
        vacuous.append(False)
    return CriterionReport("intermediate_detection", True, all(per), min(margins),
                           {"r_ell": r_ell, "mu_ell": mu_ell, "delta": delta, "lam": lam},
                           details={"per_subspace": per, "margins": margins,
                                    "vacuous": vacuous})


def nontriviality_lambda_lower(r_ell, delta):
    """``1/(r_l - 2 delta - delta^2)``, or None if the denominator is not positive."""
    denom = r_ell - 2.0 * delta - delta ** 2
    if denom <= 0:
        return None
    return 1.0 / denom


def perturbation_interval_chain(r, mu, delta):
    """The ordered chain that places the lambda window between the detection and nontriviality thresholds.

    Returns the six values ``0, 1/(r-2d-d^2), 1/(r-3d), 5/(2r+3mu),
    15/(2r+8mu), (r-mu-2d)/(2d(mu+d))``; they should be strictly increasing
    whenever ``delta < (r - mu)/5``.
    """
    upper = math.inf if delta == 0 else (r - mu - 2 * delta) / (2 * delta * (mu + delta))
    return (0.0, 1.0 / (r - 2 * delta - delta ** 2), 1.0 / (r - 3 * delta),
            5.0 / (2 * r + 3 * mu), 15.0 / (2 * r + 8 * mu), upper)


@dataclass(frozen=True)
class NuBounds:
    nu1: float
    nu2: float
    nu: float


def nu_norm_diagnostics(r, delta, lam):
    """Bounds on the in-subspace part, orthogonal part and full norm of the dual.

    ``r`` is the leave-one-out restricted inradius of the column.  Returns
    None outside ``0 < delta < r``.  With ``delta = 0`` the limits
    ``(1/r, 0, 1/r)`` are returned.
    """
    if not 0 <= delta < r:
        return None
    nu2 = lam * delta / r + lam * delta
    nu1 = (1.0 + delta * nu2) / (r - delta)
    nu = (1.0 + lam * delta * (1.0 + r)) / (r - delta)
    return NuBounds(nu1, nu2, nu)


# -- random-model criteria ---------------------------------------------------

def inradius_lower_bound(d, kappa, c_kappa=DEFAULT_C_KAPPA):
    """High-probability lower bound ``c(kappa) sqrt(log kappa) / sqrt(2 d)``."""
    return c_kappa * math.sqrt(math.log(kappa)) / math.sqrt(2.0 * d)


def incoherence_upper_bound(n, N):
    """High-probability upper bound ``sqrt(6 log N / n)``."""
    return math.sqrt(6.0 * math.log(N) / n)


def spherical_cap_tail(n, eps):
    """``P(|<a, y>| > eps) <= 2 exp(-n eps^2 / 2)`` for uniform ``y`` on the sphere."""
    return 2.0 * math.exp(-n * eps ** 2 / 2.0)


def projection_norm_threshold(m, n, eps):
    """Norm level ``sqrt(m/n)/(1 - eps)`` in the projection tail bound."""
    return math.sqrt(m / n) / (1.0 - eps)


def projection_tail_bound(m, eps):
    """``P(|proj_S y| >= sqrt(m/n)/(1-eps)) <= 2 exp(-eps^2 m / 4)``."""
    return 2.0 * math.exp(-eps ** 2 * m / 4.0)


def random_lambda_interval(n, N):
    base = math.sqrt(n / (6.0 * math.log(N)))
    return 5.0 / 7.0 * base, 10.0 / 3.0 * base


def default_lambda(n, N):
    """``2 sqrt(n / (6 log N))``, inside the random-model lambda window."""
    return 2.0 * math.sqrt(n / (6.0 * math.log(N)))


def _c(c_kappa, kappa):
    return c_kappa(kappa) if callable(c_kappa) else float(c_kappa)


def _check_kappas(kappas):
    for k in kappas:
        if k <= 1:
            raise InvalidParameterError(f"kappa must exceed 1, got {k}")


def random_success_probability(N, dims, kappas, counts=None):
    counts = counts or [k * d for k, d in zip(kappas, dims)]
    return 1.0 - 2.0 / N - sum(Nl * math.exp(-math.sqrt(k) * d)
                               for Nl, k, d in zip(counts, kappas, dims))


def random_model_criteria(n, N, dims, kappas, delta, c_kappa=DEFAULT_C_KAPPA) -> CriterionReport:
    """Dimension and noise conditions for the random model with their lambda window."""
    dims, kappas = list(dims), list(kappas)
    _check_kappas(kappas)
    d_ok, delta_ok, d_caps, delta_caps = [], [], [], []
    for d, k in zip(dims, kappas):
        ck = _c(c_kappa, k)
        d_cap = C1 * ck ** 2 * math.log(k) / math.log(N) * n
        delta_cap = C2 * ck * math.sqrt(math.log(k) / d)
        d_caps.append(d_cap)
        delta_caps.append(delta_cap)
        d_ok.append(d < d_cap)
        delta_ok.append(delta < delta_cap)
    margin = min(min(dc - d for dc, d in zip(d_caps, dims)),
                 min(dc - delta for dc in delta_caps))
    verdict = all(d_ok) and all(delta_ok)
    return CriterionReport(
        "random_model", True, verdict, margin,
        {"n": n, "N": N, "dims": dims, "kappas": kappas, "delta": delta},
        interval=random_lambda_interval(n, N),
        details={"dimension_ok": d_ok, "delta_ok": delta_ok, "dimension_caps": d_caps,
                 "delta_caps": delta_caps,
                 "probability": random_success_probability(N, dims, kappas)})


def missing_entry_cap(n, d, kappa, c_kappa=DEFAULT_C_KAPPA):
    """``M_l = c3 c(kappa)^2 log(kappa) n / d``."""
    return C3 * _c(c_kappa, kappa) ** 2 * math.log(kappa) * n / d


def missing_data_criteria(n, N, dims, kappas, c_kappa=DEFAULT_C_KAPPA, missing=None) -> CriterionReport:
    """Per-subspace caps on missing entries per column, plus the success bound.

    If ``missing`` (one count per subspace) is given the verdict also
    requires each count to stay within its cap.
    """
    dims, kappas = list(dims), list(kappas)
    _check_kappas(kappas)
    caps = [missing_entry_cap(n, d, k, c_kappa) for d, k in zip(dims, kappas)]
    d_caps = [C1 * _c(c_kappa, k) ** 2 * math.log(k) / math.log(N) * n for k in kappas]
    d_ok = [d < dc for d, dc in zip(dims, d_caps)]
    counts = [k * d for k, d in zip(kappas, dims)]
    prob = random_success_probability(N, dims, kappas) - 2.0 * sum(
        Nl * math.exp(-M / 16.0) for Nl, M in zip(counts, caps))
    margin = min(dc - d for dc, d in zip(d_caps, dims))
    verdict = all(d_ok)
    if missing is not None:
        within = [m <= M for m, M in zip(missing, caps)]
        verdict = verdict and all(within)
        margin = min(margin, min(M - m for m, M in zip(missing, caps)))
    return CriterionReport(
        "missing_data", all(d_ok), verdict and all(d_ok), margin,
        {"n": n, "N": N, "dims": dims, "kappas": kappas, "missing": missing},
        interval=random_lambda_interval(n, N), bound=min(caps),
        details={"caps": caps, "caps_floor": [math.floor(M) for M in caps],
                 "dimension_ok": d_ok, "probability": prob})
