"""Exact model quantities for quasi-Bayesian IV variable selection.

Everything in this module is a direct, cache-free evaluation on dense
arrays: the moment-based quasi-likelihood, the spike-and-slab priors, the
unnormalized posterior, the closed-form marginal over coefficient vectors,
and the restricted-eigenvalue diagnostics. The incremental sampler in
:mod:`ivselect.sampler` is validated against these functions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateDesign,
    DimensionMismatch,
    EmptyPattern,
    SingularSystem,
    ZeroColumn,
)

# Columns whose norm is already within this tolerance of 1 are left
# bit-identical by normalize_instruments (their recorded scale is exactly 1).
UNIT_NORM_TOL = 1e-12

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass
class DesignData:
    """Observed triple (response, regressors, instruments).

    Attributes
    ----------
    y : ndarray, shape (n,)
        Response vector.
    X : ndarray, shape (n, p)
        Regressor matrix; some columns may be endogenous.
    W : ndarray, shape (n, q)
        Instrument matrix.
    normalized : bool
        True once every instrument column has unit Euclidean norm.
    instrument_scales : ndarray, shape (q,)
        Pre-normalization column norms (ones if never normalized).
    """

    y: np.ndarray
    X: np.ndarray
    W: np.ndarray
    normalized: bool = False
    instrument_scales: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=float)
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.W = np.ascontiguousarray(self.W, dtype=float)
        if self.y.ndim != 1:
            raise DimensionMismatch("y must be one-dimensional")
        if self.X.ndim != 2 or self.W.ndim != 2:
            raise DimensionMismatch("X and W must be two-dimensional")
        n = self.y.shape[0]
        if n < 1 or self.X.shape[1] < 1 or self.W.shape[1] < 1:
            raise DimensionMismatch("need n >= 1, p >= 1, q >= 1")
        if self.X.shape[0] != n or self.W.shape[0] != n:
            raise DimensionMismatch(
                f"row counts disagree: y has {n}, X has {self.X.shape[0]}, "
                f"W has {self.W.shape[0]}"
            )
        for name, arr in (("y", self.y), ("X", self.X), ("W", self.W)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if self.instrument_scales is None:
            self.instrument_scales = np.ones(self.q)
        else:
            self.instrument_scales = np.asarray(self.instrument_scales, dtype=float)
            if self.instrument_scales.shape != (self.q,):
                raise DimensionMismatch("instrument_scales must have length q")
        if self.normalized:
            norms = np.linalg.norm(self.W, axis=0)
            if not np.all(np.abs(norms - 1.0) <= 1e-9):
                raise ValueError("normalized=True but some instrument columns "
                                 "do not have unit norm")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.W.shape[1]


def normalize_instruments(data: DesignData) -> DesignData:
    """Scale every instrument column to unit Euclidean norm.

    Columns already within ``UNIT_NORM_TOL`` of unit norm are left
    bit-identical and their scale is recorded as exactly 1, so writing a
    normalized dataset to disk and loading it back is an identity.

    Raises
    ------
    ZeroColumn
        If some column of W has zero norm.
    """
    norms = np.linalg.norm(data.W, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroColumn(int(zero[0]))
    scales = np.where(np.abs(norms - 1.0) <= UNIT_NORM_TOL, 1.0, norms)
    W = data.W / scales
    return DesignData(
        y=data.y,
        X=data.X,
        W=W,
        normalized=True,
        instrument_scales=scales,
    )


@dataclass
class InstrumentMap:
    """Per-regressor instrument groups.

    ``groups[j]`` lists the instrument columns (0-based) that enter the
    moment criterion whenever regressor ``j`` is active. Groups may overlap;
    the selected instrument set for a pattern is the union over active
    regressors.
    """

    groups: list[np.ndarray]
    q: int

    def __post_init__(self):
        if not self.groups:
            raise DimensionMismatch("instrument map needs at least one group")
        cleaned = []
        for j, g in enumerate(self.groups):
            g = np.unique(np.asarray(g, dtype=np.intp))
            if g.size == 0:
                raise ValueError(f"instrument group {j} is empty")
            if g[0] < 0 or g[-1] >= self.q:
                raise ValueError(f"instrument group {j} has out-of-range indices")
            cleaned.append(g)
        self.groups = cleaned

    @property
    def p(self) -> int:
        return len(self.groups)

    def membership(self) -> np.ndarray:
        """0/1 matrix of shape (p, q); row j marks the instruments in group j."""
        out = np.zeros((self.p, self.q), dtype=np.int8)
        for j, g in enumerate(self.groups):
            out[j, g] = 1
        return out


@dataclass
class SparsityPattern:
    """A binary inclusion pattern over the p regressors."""

    bits: np.ndarray
    count: int = field(init=False)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 1:
            raise DimensionMismatch("pattern bits must be one-dimensional")
        self.count = int(self.bits.sum())

    @classmethod
    def from_support(cls, p: int, support) -> "SparsityPattern":
        bits = np.zeros(p, dtype=bool)
        bits[np.asarray(support, dtype=np.intp)] = True
        return cls(bits)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.bits)


def _bits(delta, p: int | None = None) -> np.ndarray:
    """Coerce a SparsityPattern or array-like into a boolean vector."""
    bits = delta.bits if isinstance(delta, SparsityPattern) else np.asarray(delta, dtype=bool)
    if p is not None and bits.shape != (p,):
        raise DimensionMismatch(f"pattern has length {bits.shape}, expected ({p},)")
    return bits


@dataclass
class HyperParams:
    """Tuning constants of the quasi-posterior.

    lam
        Scale of the moment criterion (larger means a flatter
        quasi-likelihood).
    rho_sq
        Slab precision; active coefficients have prior variance 1/rho_sq.
    gamma
        Spike variance of inactive coefficients.
    u
        Sparsity-prior exponent; the prior inclusion probability is
        p**-(u+1).
    s_bar
        Hard cap on the number of active regressors.
    """

    lam: float
    rho_sq: float
    gamma: float
    u: float = 1.0
    s_bar: int = 1

    def __post_init__(self):
        if not (self.lam > 0 and self.rho_sq > 0 and self.gamma > 0):
            raise ValueError("lam, rho_sq and gamma must all be positive")
        if self.u <= 0:
            raise ValueError("prior exponent u must be positive")
        if self.s_bar < 1:
            raise ValueError("s_bar must be at least 1")

    def q_prior(self, p: int) -> float:
        """Prior inclusion probability p**-(u+1); lies in (0, 1/2] for p >= 2."""
        q = float(p) ** -(self.u + 1.0)
        if not 0.0 < q <= 0.5:
            raise ValueError(f"prior inclusion probability {q} outside (0, 1/2]; "
                             "increase p or u")
        return q


def default_s_bar(n: int, p: int) -> int:
    """Sample-size-driven cap on active regressors: min(p, floor(n / log p))."""
    if p <= 2:
        return p
    return max(1, min(p, int(n / math.log(p))))


@dataclass
class EigenDiagnostics:
    """Identifiability diagnostics and the contraction radius.

    For :func:`contraction_radius`, ``v_low`` holds the estimated lower
    restricted eigenvalue over admissible patterns and ``v_high`` the
    largest per-coordinate instrument score max_j ||W_T' X_j|| / sqrt(n).
    """

    v_low: float
    v_high: float
    t_bar: int
    epsilon: float

    def __post_init__(self):
        if self.v_low < 0 or self.t_bar < 0 or self.epsilon < 0:
            raise ValueError("diagnostics must be nonnegative")


# ---------------------------------------------------------------------------
# Densities and priors
# ---------------------------------------------------------------------------

def instrument_set(delta, imap: InstrumentMap) -> np.ndarray:
    """Boolean instrument-selection vector: union of active groups."""
    bits = _bits(delta, imap.p)
    selected = np.zeros(imap.q, dtype=bool)
    for j in np.flatnonzero(bits):
        selected[imap.groups[j]] = True
    return selected


def masked_coefficients(theta: np.ndarray, delta) -> np.ndarray:
    """Coefficient vector with inactive coordinates set to zero."""
    theta = np.asarray(theta, dtype=float)
    return np.where(_bits(delta, theta.shape[0]), theta, 0.0)


def log_quasi_likelihood(data: DesignData, delta, theta, hyper: HyperParams,
                         imap: InstrumentMap) -> float:
    """Log of the moment-based quasi-likelihood at the masked coefficients.

    Equals -(1/(2*lam)) * sum over selected instruments of the squared
    inner product between the instrument column *at its original scale*
    and the residual y - X theta_delta. Unit-norm storage is a
    representation choice; the recorded instrument_scales undo it here, so
    the criterion is invariant to whether the caller normalized first.
    Always <= 0; exactly 0 when no instrument is selected or the residual
    is orthogonal to every selected column.
    """
    if not data.normalized:
        raise ValueError("instruments must be normalized before evaluating "
                         "the quasi-likelihood")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (data.p,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({data.p},)")
    bits = _bits(delta, data.p)
    selected = instrument_set(bits, imap)
    if not selected.any():
        return 0.0
    residual = data.y - data.X @ masked_coefficients(theta, bits)
    scores = (data.W[:, selected].T @ residual) * data.instrument_scales[selected]
    return -0.5 * float(scores @ scores) / hyper.lam


def log_prior_sparsity(delta, hyper: HyperParams, p: int) -> float:
    """Unnormalized log prior of an inclusion pattern.

    Returns -inf when the pattern exceeds the cap s_bar (prior exclusion).
    """
    bits = _bits(delta, p)
    k = int(bits.sum())
    if k > hyper.s_bar:
        return -math.inf
    q = hyper.q_prior(p)
    return k * math.log(q) + (p - k) * math.log1p(-q)


def log_prior_coefficients(theta, delta, hyper: HyperParams) -> float:
    """Log density of theta under the spike-and-slab Gaussian prior.

    Normalizing constants are included; they differ across patterns and are
    load-bearing in flip acceptance ratios.
    """
    theta = np.asarray(theta, dtype=float)
    bits = _bits(delta)
    if theta.shape != bits.shape:
        raise DimensionMismatch("theta and pattern lengths disagree")
    variances = np.where(bits, 1.0 / hyper.rho_sq, hyper.gamma)
    return float(-0.5 * np.sum(LOG_2PI + np.log(variances) + theta**2 / variances))


def log_posterior_unnormalized(data: DesignData, delta, theta,
                               hyper: HyperParams, imap: InstrumentMap) -> float:
    """Joint unnormalized log posterior of (pattern, coefficients)."""
    lp = log_prior_sparsity(delta, hyper, data.p)
    if lp == -math.inf:
        return -math.inf
    return (lp
            + log_quasi_likelihood(data, delta, theta, hyper, imap)
            + log_prior_coefficients(theta, delta, hyper))


def log_marginal_delta(data: DesignData, delta, hyper: HyperParams,
                       imap: InstrumentMap) -> float:
    """Unnormalized log posterior of a pattern with coefficients integrated out.

    The quasi-likelihood is Gaussian in the active coefficients, so with
    W_T the selected instrument columns at their original scale,
    A = (1/lam) X_a' W_T W_T' X_a + rho_sq I and
    b = (1/lam) X_a' W_T W_T' y the integral is closed-form:

        log w_delta - ||W_T' y||^2 / (2 lam) + b' A^{-1} b / 2
        - log det(A) / 2 + k log(rho_sq) / 2,

    where k is the number of active coordinates. Inactive coordinates
    integrate to one. Intended for enumeration tests and diagnostics only;
    cost grows with the selected instrument count.
    """
    if not data.normalized:
        raise ValueError("instruments must be normalized")
    bits = _bits(delta, data.p)
    log_w = log_prior_sparsity(bits, hyper, data.p)
    if log_w == -math.inf:
        return -math.inf
    active = np.flatnonzero(bits)
    k = active.size
    if k == 0:
        return log_w
    selected = instrument_set(bits, imap)
    scales = data.instrument_scales[selected]
    Wt = data.W[:, selected]
    G = scales[:, None] * (Wt.T @ data.X[:, active])
    wty = scales * (Wt.T @ data.y)
    A = G.T @ G / hyper.lam
    A[np.diag_indices_from(A)] += hyper.rho_sq
    b = G.T @ wty / hyper.lam
    try:
        cho = scipy.linalg.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - requires corrupt input
        raise SingularSystem(str(exc)) from exc
    quad = float(b @ scipy.linalg.cho_solve(cho, b))
    log_det = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return (log_w
            - 0.5 * float(wty @ wty) / hyper.lam
            + 0.5 * quad
            - 0.5 * log_det
            + 0.5 * k * math.log(hyper.rho_sq))


def admissible_patterns(p: int, s_bar: int, min_size: int = 0):
    """Yield every inclusion pattern with min_size <= size <= s_bar."""
    for k in range(min_size, s_bar + 1):
        for support in itertools.combinations(range(p), k):
            bits = np.zeros(p, dtype=bool)
            bits[list(support)] = True
            yield bits


def enumerate_delta_posterior(data: DesignData, hyper: HyperParams,
                              imap: InstrumentMap):
    """Exact pattern posterior by exhaustive enumeration.

    Returns (patterns, probs) with patterns a (m, p) boolean array over all
    admissible patterns and probs the normalized posterior masses. Only
    feasible for small p.
    """
    patterns = list(admissible_patterns(data.p, min(hyper.s_bar, data.p)))
    log_ws = np.array([log_marginal_delta(data, b, hyper, imap) for b in patterns])
    log_ws -= log_ws.max()
    probs = np.exp(log_ws)
    probs /= probs.sum()
    return np.array(patterns), probs


# ---------------------------------------------------------------------------
# Restricted-eigenvalue diagnostics
# ---------------------------------------------------------------------------

def restricted_eigen_diagnostics(data: DesignData, delta,
                                 imap: InstrumentMap) -> tuple[float, float]:
    """Extreme eigenvalues of the moment cross-product on a pattern's support.

    With M = W_T' X restricted to the active columns, returns the smallest
    and largest eigenvalues of M'M / n, i.e. the extreme values of
    u'(M'M)u / (n ||u||^2) over vectors supported on the pattern.
    """
    bits = _bits(delta, data.p)
    active = np.flatnonzero(bits)
    if active.size == 0:
        raise EmptyPattern("need at least one active coordinate")
    selected = instrument_set(bits, imap)
    M = data.W[:, selected].T @ data.X[:, active]
    eigs = np.linalg.eigvalsh(M.T @ M / data.n)
    return float(eigs[0]), float(eigs[-1])


def _sample_pattern(rng: np.random.Generator, p: int, s_bar: int) -> np.ndarray:
    k = int(rng.integers(1, s_bar + 1))
    bits = np.zeros(p, dtype=bool)
    bits[rng.choice(p, size=k, replace=False)] = True
    return bits


def contraction_radius(data: DesignData, hyper: HyperParams, imap: InstrumentMap,
                       s_star: int, sigma0: float = 1.0, n_patterns: int = 200,
                       seed: int = 0, exhaustive: bool | None = None) -> EigenDiagnostics:
    """Contraction-radius diagnostic for the pattern-restricted posterior.

    The radius is

        eps = 2 sqrt(2) sigma0 (k_high / k_low)
              * sqrt((s_bar + s_star) t_bar log(p q) / n)

    where t_bar bounds the number of instruments any admissible pattern can
    select (sum of the s_bar largest group sizes; exact for disjoint
    groups), k_high is the largest per-coordinate instrument score
    max ||W_T' X_j||_2 / sqrt(n), and k_low the smallest restricted
    eigenvalue, both over admissible patterns. The extremes are estimated
    from ``n_patterns`` sampled patterns unless ``exhaustive`` (default for
    p <= 12) enumerates all of them.
    """
    if s_star < 1:
        raise ValueError("s_star must be at least 1")
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive")
    p, q, n = data.p, data.q, data.n
    s_bar = min(hyper.s_bar, p)
    sizes = sorted((g.size for g in imap.groups), reverse=True)
    t_bar = int(sum(sizes[:s_bar]))

    if exhaustive is None:
        exhaustive = p <= 12
    if exhaustive:
        patterns = admissible_patterns(p, s_bar, min_size=1)
    else:
        rng = np.random.default_rng(seed)
        patterns = (_sample_pattern(rng, p, s_bar) for _ in range(n_patterns))

    WtX = data.W.T @ data.X
    sqrt_n = math.sqrt(n)
    kappa_low = math.inf
    kappa_high = 0.0
    for bits in patterns:
        selected = instrument_set(bits, imap)
        rows = WtX[selected]
        kappa_high = max(kappa_high, float(np.linalg.norm(rows, axis=0).max()) / sqrt_n)
        sub = rows[:, bits]
        kappa_low = min(kappa_low, float(np.linalg.eigvalsh(sub.T @ sub / n)[0]))

    if kappa_low <= np.finfo(float).eps:
        raise DegenerateDesign(f"lower restricted eigenvalue estimate {kappa_low} "
                               "is numerically zero")
    epsilon = (2.0 * math.sqrt(2.0) * sigma0 * (kappa_high / kappa_low)
               * math.sqrt((s_bar + s_star) * t_bar * math.log(p * q) / n))
    return EigenDiagnostics(v_low=kappa_low, v_high=kappa_high,
                            t_bar=t_bar, epsilon=epsilon)


def theorem_scalings(n: int, p: int, q: int, c: float = 1.0) -> dict[str, float]:
    """Suggested tuning scalings: lam ~ c log(pq), rho = c (n/log(pq))^(1/4),
    gamma = c/p."""
    lpq = math.log(p * q)
    return {
        "lam": c * lpq,
        "rho": c * (n / lpq) ** 0.25,
        "gamma": c / p,
    }
