"""Metropolis-Hastings-within-Gibbs sampler for the pattern/coefficient posterior.

One sweep is: a pattern flip move (single flip toggling one inclusion bit, or
double flip swapping an active bit against an inactive one), a Gaussian
redraw of the active coefficients, and an independent spike redraw of the
inactive ones. Flip ratios are evaluated incrementally from cached
instrument scores; the caches are re-derived from scratch on a fixed
schedule and the observed drift is recorded.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import model
from .errors import CacheDriftWarning, SingularSystem
from .model import DesignData, HyperParams, InstrumentMap

MOVE_SINGLE = 0
MOVE_DOUBLE = 1


@dataclass
class ChainConfig:
    """Run-length, seeding, and bookkeeping knobs for one chain."""

    n_sweeps: int = 10_000
    burn_in: int = 5_000
    thin: int = 5
    seed: int = 0
    refresh_every: int = 1_000
    flip_mix: float = 0.5
    record_theta: bool = True
    record_theta_raw: bool = False

    def __post_init__(self):
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be positive")
        if not 0 <= self.burn_in < self.n_sweeps:
            raise ValueError("need 0 <= burn_in < n_sweeps")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0.0 <= self.flip_mix <= 1.0:
            raise ValueError("flip_mix must lie in [0, 1]")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be at least 1")


class _DesignCache:
    """Per-dataset precomputations shared by every sweep of a chain."""

    def __init__(self, data: DesignData, hyper: HyperParams, imap: InstrumentMap):
        if not data.normalized:
            raise ValueError("instruments must be normalized before sampling")
        if imap.p != data.p or imap.q != data.q:
            raise ValueError("instrument map does not match the data dimensions")
        # moment scores live at the instruments' original column scale
        self.scales = data.instrument_scales
        self.WtX = self.scales[:, None] * (data.W.T @ data.X)   # (q, p)
        self.Wty = self.scales * (data.W.T @ data.y)            # (q,)
        self.group_counts = imap.membership()   # (p, q) int8
        q_prior = hyper.q_prior(data.p)
        self.log_q = math.log(q_prior)
        self.log_1mq = math.log1p(-q_prior)
        # spike/slab log-density constants: logpdf(x) = const - x^2 / (2 var)
        self.slab_var = 1.0 / hyper.rho_sq
        self.slab_const = -0.5 * (model.LOG_2PI + math.log(self.slab_var))
        self.spike_const = -0.5 * (model.LOG_2PI + math.log(hyper.gamma))

    def log_slab(self, x: float) -> float:
        return self.slab_const - 0.5 * x * x / self.slab_var

    def log_spike(self, x: float, gamma: float) -> float:
        return self.spike_const - 0.5 * x * x / gamma


@dataclass
class FlipProposal:
    """A candidate pattern move plus everything needed to commit it."""

    kind: int
    j_off: int | None
    j_on: int | None
    log_ratio: float
    scores_new: np.ndarray | None = None
    cover_new: np.ndarray | None = None
    selected_new: np.ndarray | None = None
    log_ql_new: float = 0.0
    d_sparsity: float = 0.0
    d_coeff: float = 0.0


@dataclass
class SamplerState:
    """Current chain position plus incremental caches.

    residual is y - X theta_delta with inactive coordinates masked; scores
    holds the inner product of every instrument column (at its original
    scale) with the residual; cover counts how many active groups select
    each instrument.
    """

    delta: np.ndarray
    theta: np.ndarray
    residual: np.ndarray
    scores: np.ndarray
    cover: np.ndarray
    selected: np.ndarray
    log_ql: float
    log_sparsity: float
    log_coeff: float
    sweep_index: int = 0
    n_single_prop: int = 0
    n_single_acc: int = 0
    n_double_prop: int = 0
    n_double_acc: int = 0
    last_refresh_drift: float = 0.0
    max_logpost_drift: float = 0.0
    max_cache_drift: float = 0.0
    cache: _DesignCache | None = field(default=None, repr=False)

    @property
    def count(self) -> int:
        return int(self.delta.sum())

    @property
    def log_post(self) -> float:
        return self.log_ql + self.log_sparsity + self.log_coeff


@dataclass
class ChainResult:
    """Recorded draws and summary statistics of one chain."""

    delta_draws: np.ndarray                 # (draws, p) bool
    theta_draws: np.ndarray | None          # (draws, p) masked coefficients
    theta_raw_draws: np.ndarray | None      # (draws, p) unmasked coefficients
    inclusion_prob: np.ndarray              # (p,)
    accept_rate_single: float
    accept_rate_double: float
    n_single_prop: int
    n_double_prop: int
    log_post_trace: np.ndarray              # (n_sweeps,)
    delta_size_trace: np.ndarray            # (n_sweeps,) int
    move_trace: np.ndarray                  # (n_sweeps,) MOVE_SINGLE / MOVE_DOUBLE
    accept_trace: np.ndarray                # (n_sweeps,) bool
    max_logpost_drift: float
    max_cache_drift: float
    seeds_used: dict

    @property
    def n_draws(self) -> int:
        return self.delta_draws.shape[0]


# ---------------------------------------------------------------------------
# State construction and refresh
# ---------------------------------------------------------------------------

def init_state(data: DesignData, hyper: HyperParams, imap: InstrumentMap,
               theta0: np.ndarray) -> SamplerState:
    """Build a state from an initial coefficient vector.

    The starting pattern is the nonzero pattern of theta0; if it exceeds
    s_bar only the s_bar largest-magnitude coordinates stay active. All
    caches are built by full computation.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (data.p,):
        raise ValueError(f"theta0 has shape {theta0.shape}, expected ({data.p},)")
    delta = theta0 != 0.0
    if delta.sum() > hyper.s_bar:
        order = np.argsort(-np.abs(theta0))
        delta = np.zeros(data.p, dtype=bool)
        delta[order[:hyper.s_bar]] = True
    cache = _DesignCache(data, hyper, imap)
    state = SamplerState(
        delta=delta,
        theta=theta0.copy(),
        residual=np.empty(data.n),
        scores=np.empty(data.q),
        cover=np.empty(data.q, dtype=np.int32),
        selected=np.empty(data.q, dtype=bool),
        log_ql=0.0,
        log_sparsity=0.0,
        log_coeff=0.0,
        cache=cache,
    )
    _rebuild_caches(state, data, hyper, imap)
    return state


def _rebuild_caches(state: SamplerState, data: DesignData, hyper: HyperParams,
                    imap: InstrumentMap) -> None:
    """Recompute every cache from scratch (shared by init and refresh)."""
    theta_masked = np.where(state.delta, state.theta, 0.0)
    state.residual = data.y - data.X @ theta_masked
    state.scores = state.cache.scales * (data.W.T @ state.residual)
    state.cover = state.cache.group_counts[state.delta].sum(axis=0, dtype=np.int32)
    state.selected = state.cover > 0
    sel_scores = state.scores[state.selected]
    state.log_ql = -0.5 * float(sel_scores @ sel_scores) / hyper.lam
    state.log_sparsity = model.log_prior_sparsity(state.delta, hyper, data.p)
    state.log_coeff = model.log_prior_coefficients(state.theta, state.delta, hyper)


def refresh_caches(state: SamplerState, data: DesignData, hyper: HyperParams,
                   imap: InstrumentMap, tol: float = 1e-6) -> SamplerState:
    """Recompute caches from scratch, recording and repairing any drift."""
    old_residual = state.residual
    old_scores = state.scores
    old_log_post = state.log_post
    _rebuild_caches(state, data, hyper, imap)
    cache_drift = max(
        float(np.max(np.abs(old_residual - state.residual))),
        float(np.max(np.abs(old_scores - state.scores))),
    )
    logpost_drift = abs(old_log_post - state.log_post)
    state.last_refresh_drift = max(cache_drift, logpost_drift)
    state.max_cache_drift = max(state.max_cache_drift, cache_drift)
    state.max_logpost_drift = max(state.max_logpost_drift, logpost_drift)
    if state.last_refresh_drift > tol:
        warnings.warn(
            f"sampler caches drifted by {state.last_refresh_drift:.3e} "
            f"(> {tol:.1e}); repaired from scratch",
            CacheDriftWarning,
        )
    return state


# ---------------------------------------------------------------------------
# Flip proposals
# ---------------------------------------------------------------------------

def propose_single_flip(state: SamplerState, data: DesignData, hyper: HyperParams,
                        imap: InstrumentMap, rng: np.random.Generator,
                        j: int | None = None) -> FlipProposal:
    """Toggle one uniformly chosen inclusion bit.

    The log acceptance ratio is the posterior log-density difference at the
    current coefficients, assembled incrementally from the cached scores.
    Activating beyond s_bar yields -inf. The proposal is symmetric, so no
    Hastings correction appears.
    """
    cache = state.cache
    if j is None:
        j = int(rng.integers(data.p))
    activating = not state.delta[j]
    if activating and state.count >= hyper.s_bar:
        return FlipProposal(kind=MOVE_SINGLE, j_off=None, j_on=j, log_ratio=-math.inf)

    theta_j = state.theta[j]
    sign = -1.0 if activating else 1.0
    if theta_j != 0.0:
        scores_new = state.scores + sign * theta_j * cache.WtX[:, j]
    else:
        scores_new = state.scores.copy()
    if activating:
        cover_new = state.cover + cache.group_counts[j]
        d_sparsity = cache.log_q - cache.log_1mq
        d_coeff = cache.log_slab(theta_j) - cache.log_spike(theta_j, hyper.gamma)
    else:
        cover_new = state.cover - cache.group_counts[j]
        d_sparsity = cache.log_1mq - cache.log_q
        d_coeff = cache.log_spike(theta_j, hyper.gamma) - cache.log_slab(theta_j)
    selected_new = cover_new > 0
    sel = scores_new[selected_new]
    log_ql_new = -0.5 * float(sel @ sel) / hyper.lam
    log_ratio = d_sparsity + d_coeff + (log_ql_new - state.log_ql)
    return FlipProposal(
        kind=MOVE_SINGLE,
        j_off=None if activating else j,
        j_on=j if activating else None,
        log_ratio=log_ratio,
        scores_new=scores_new,
        cover_new=cover_new,
        selected_new=selected_new,
        log_ql_new=log_ql_new,
        d_sparsity=d_sparsity,
        d_coeff=d_coeff,
    )


def propose_double_flip(state: SamplerState, data: DesignData, hyper: HyperParams,
                        imap: InstrumentMap, rng: np.random.Generator,
                        pair: tuple[int, int] | None = None) -> FlipProposal:
    """Swap a uniformly chosen active bit against an inactive one.

    Preserves the active count, so the cap never binds. When either index
    set is empty the swap is undefined; the kernel then acts as the
    identity (an always-rejected proposal), which keeps it reversible.
    Substituting a single flip instead would double the proposal rate out
    of the empty pattern relative to the rate back in and visibly skew the
    stationary pattern distribution. The proposal is symmetric over the
    product set (the swap leaves both set sizes unchanged).
    """
    cache = state.cache
    if pair is None:
        active = np.flatnonzero(state.delta)
        inactive = np.flatnonzero(~state.delta)
        if active.size == 0 or inactive.size == 0:
            return FlipProposal(kind=MOVE_DOUBLE, j_off=None, j_on=None,
                                log_ratio=-math.inf)
        j_off = int(active[rng.integers(active.size)])
        j_on = int(inactive[rng.integers(inactive.size)])
    else:
        j_off, j_on = pair
        if not state.delta[j_off] or state.delta[j_on]:
            raise ValueError("pair must be (active, inactive)")

    th_off = state.theta[j_off]
    th_on = state.theta[j_on]
    scores_new = state.scores + th_off * cache.WtX[:, j_off] - th_on * cache.WtX[:, j_on]
    cover_new = state.cover - cache.group_counts[j_off] + cache.group_counts[j_on]
    selected_new = cover_new > 0
    sel = scores_new[selected_new]
    log_ql_new = -0.5 * float(sel @ sel) / hyper.lam
    d_coeff = (cache.log_slab(th_on) - cache.log_spike(th_on, hyper.gamma)
               + cache.log_spike(th_off, hyper.gamma) - cache.log_slab(th_off))
    log_ratio = d_coeff + (log_ql_new - state.log_ql)
    return FlipProposal(
        kind=MOVE_DOUBLE,
        j_off=j_off,
        j_on=j_on,
        log_ratio=log_ratio,
        scores_new=scores_new,
        cover_new=cover_new,
        selected_new=selected_new,
        log_ql_new=log_ql_new,
        d_sparsity=0.0,
        d_coeff=d_coeff,
    )


def metropolis_accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(log_ratio))."""
    if log_ratio >= 0.0:
        return True
    if log_ratio == -math.inf:
        return False
    return math.log(rng.random()) < log_ratio


def accept_reject(state: SamplerState, proposal: FlipProposal, data: DesignData,
                  rng: np.random.Generator) -> bool:
    """Run the Metropolis step and commit the caches on acceptance."""
    accepted = metropolis_accept(proposal.log_ratio, rng)
    if proposal.kind == MOVE_SINGLE:
        state.n_single_prop += 1
        state.n_single_acc += accepted
    else:
        state.n_double_prop += 1
        state.n_double_acc += accepted
    if not accepted:
        return False

    if proposal.j_on is not None:
        state.delta[proposal.j_on] = True
        th = state.theta[proposal.j_on]
        if th != 0.0:
            state.residual -= data.X[:, proposal.j_on] * th
    if proposal.j_off is not None:
        state.delta[proposal.j_off] = False
        th = state.theta[proposal.j_off]
        if th != 0.0:
            state.residual += data.X[:, proposal.j_off] * th
    state.scores = proposal.scores_new
    state.cover = proposal.cover_new
    state.selected = proposal.selected_new
    state.log_ql = proposal.log_ql_new
    state.log_sparsity += proposal.d_sparsity
    state.log_coeff += proposal.d_coeff
    return True


# ---------------------------------------------------------------------------
# Coefficient draws
# ---------------------------------------------------------------------------

def draw_active_coefficients(state: SamplerState, data: DesignData,
                             hyper: HyperParams, imap: InstrumentMap,
                             rng: np.random.Generator) -> SamplerState:
    """Gibbs draw of the active block from its Gaussian full conditional.

    With W_T the selected instruments at original scale, the conditional
    has precision A = (1/lam) X_a' W_T W_T' X_a + rho_sq I and mean
    A^{-1} (1/lam) X_a' W_T W_T' y. Residual, scores, and log density are
    refreshed for the new coefficients.
    """
    active = np.flatnonzero(state.delta)
    k = active.size
    if k == 0:
        return state
    cache = state.cache
    t_idx = np.flatnonzero(state.selected)
    G = cache.WtX[np.ix_(t_idx, active)]
    A = G.T @ G / hyper.lam
    A[np.diag_indices_from(A)] += hyper.rho_sq
    b = G.T @ cache.Wty[t_idx] / hyper.lam
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("active-block precision failed to factor; "
                             "caches are corrupted") from exc
    mean = scipy.linalg.cho_solve((L, True), b)
    z = rng.standard_normal(k)
    theta_act = mean + scipy.linalg.solve_triangular(L.T, z, lower=False)

    state.theta[active] = theta_act
    state.residual = data.y - data.X[:, active] @ theta_act
    state.scores = cache.Wty - cache.WtX[:, active] @ theta_act
    sel = state.scores[state.selected]
    state.log_ql = -0.5 * float(sel @ sel) / hyper.lam
    state.log_coeff = model.log_prior_coefficients(state.theta, state.delta, hyper)
    return state


def draw_inactive_coefficients(state: SamplerState, hyper: HyperParams,
                               rng: np.random.Generator) -> SamplerState:
    """Gibbs draw of the inactive block from its spike prior.

    The quasi-likelihood never sees masked coordinates, so their
    conditional is the prior; residual and scores are untouched.
    """
    inactive = ~state.delta
    m = int(inactive.sum())
    if m:
        state.theta[inactive] = rng.standard_normal(m) * math.sqrt(hyper.gamma)
        state.log_coeff = model.log_prior_coefficients(state.theta, state.delta, hyper)
    return state


# ---------------------------------------------------------------------------
# Sweeps and the chain driver
# ---------------------------------------------------------------------------

def sweep(state: SamplerState, data: DesignData, hyper: HyperParams,
          imap: InstrumentMap, rng: np.random.Generator,
          config: ChainConfig) -> tuple[int, bool]:
    """One full update cycle; returns (move kind, accepted)."""
    if rng.random() < config.flip_mix:
        proposal = propose_single_flip(state, data, hyper, imap, rng)
    else:
        proposal = propose_double_flip(state, data, hyper, imap, rng)
    accepted = accept_reject(state, proposal, data, rng)
    draw_active_coefficients(state, data, hyper, imap, rng)
    draw_inactive_coefficients(state, hyper, rng)
    state.sweep_index += 1
    if state.sweep_index % config.refresh_every == 0:
        refresh_caches(state, data, hyper, imap)
    return proposal.kind, accepted


def run_chain(data: DesignData, hyper: HyperParams, imap: InstrumentMap,
              config: ChainConfig, theta0: np.ndarray | None = None) -> ChainResult:
    """Run one chain and collect thinned post-burn-in draws.

    Parameters
    ----------
    data : DesignData
        Normalized dataset.
    hyper : HyperParams
        Posterior tuning constants.
    imap : InstrumentMap
        Regressor-to-instrument groups.
    config : ChainConfig
        Sweep counts, seed, and recording options.
    theta0 : ndarray, optional
        Starting coefficients (typically a SCAD fit); zeros if omitted.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    if theta0 is None:
        theta0 = np.zeros(data.p)
    state = init_state(data, hyper, imap, theta0)

    n_rec = len(range(config.burn_in, config.n_sweeps, config.thin))
    delta_draws = np.zeros((n_rec, data.p), dtype=bool)
    theta_draws = np.zeros((n_rec, data.p)) if config.record_theta else None
    theta_raw = np.zeros((n_rec, data.p)) if config.record_theta_raw else None
    log_post_trace = np.zeros(config.n_sweeps)
    size_trace = np.zeros(config.n_sweeps, dtype=np.int32)
    move_trace = np.zeros(config.n_sweeps, dtype=np.int8)
    accept_trace = np.zeros(config.n_sweeps, dtype=bool)

    rec = 0
    for s in range(config.n_sweeps):
        kind, accepted = sweep(state, data, hyper, imap, rng, config)
        log_post_trace[s] = state.log_post
        size_trace[s] = state.count
        move_trace[s] = kind
        accept_trace[s] = accepted
        if s >= config.burn_in and (s - config.burn_in) % config.thin == 0:
            delta_draws[rec] = state.delta
            if theta_draws is not None:
                theta_draws[rec] = np.where(state.delta, state.theta, 0.0)
            if theta_raw is not None:
                theta_raw[rec] = state.theta
            rec += 1

    return ChainResult(
        delta_draws=delta_draws,
        theta_draws=theta_draws,
        theta_raw_draws=theta_raw,
        inclusion_prob=delta_draws.mean(axis=0),
        accept_rate_single=(state.n_single_acc / state.n_single_prop
                            if state.n_single_prop else 0.0),
        accept_rate_double=(state.n_double_acc / state.n_double_prop
                            if state.n_double_prop else 0.0),
        n_single_prop=state.n_single_prop,
        n_double_prop=state.n_double_prop,
        log_post_trace=log_post_trace,
        delta_size_trace=size_trace,
        move_trace=move_trace,
        accept_trace=accept_trace,
        max_logpost_drift=state.max_logpost_drift,
        max_cache_drift=state.max_cache_drift,
        seeds_used={"seed": config.seed, "bit_generator": "PCG64"},
    )
