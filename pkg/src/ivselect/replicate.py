"""Replication driver: repeated simulate-fit-score runs with aggregation.

Each replicate gets a seed derived from the base seed by a 64-bit mix of
its index, recorded for exact replay. Replicates are independent, so they
can run in worker processes; aggregation uses exact compensated summation
and is invariant to completion order.
"""
from __future__ import annotations

import concurrent.futures
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyChain, DimensionMismatch, MissingThetaDraws
from .model import HyperParams, default_s_bar
from .sampler import ChainConfig, ChainResult, run_chain
from .scad import scad_initializer
from .simulate import (
    SETUP_FOURIER,
    GroundTruth,
    SimScenario,
    generate_setup1,
    generate_setup2,
)

METRIC_NAMES = ("tp", "fp", "mse_s", "mse_n")


@dataclass
class Metrics:
    """Selection and estimation scores of one fitted replicate."""

    tp: int
    fp: int
    mse_s: float
    mse_n: float

    def as_tuple(self) -> tuple:
        return (self.tp, self.fp, self.mse_s, self.mse_n)


@dataclass
class AggregateReport:
    """Means and spreads of the replicate metrics for one scenario."""

    scenario: SimScenario
    r_requested: int
    r_completed: int
    means: dict[str, float]
    sds: dict[str, float]
    per_replicate: list[Metrics]
    seeds: list[int]
    hyper: HyperParams
    failures: list[str] = field(default_factory=list)
    total_seconds: float = 0.0
    replicate_seconds: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Chain post-processing
# ---------------------------------------------------------------------------

def select_model(chain: ChainResult, threshold: float = 0.5) -> np.ndarray:
    """Median-probability selection: keep coordinates whose inclusion
    probability strictly exceeds the threshold."""
    if chain.n_draws == 0:
        raise EmptyChain("chain holds no recorded draws")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return chain.inclusion_prob > threshold


def point_estimate(chain: ChainResult) -> np.ndarray:
    """Posterior mean of the masked coefficients (inactive draws count as 0)."""
    if chain.theta_draws is None:
        raise MissingThetaDraws("chain was run without coefficient recording")
    if chain.theta_draws.shape[0] == 0:
        raise EmptyChain("chain holds no recorded draws")
    return chain.theta_draws.mean(axis=0)


def compute_metrics(theta_hat: np.ndarray, delta_hat: np.ndarray,
                    truth: GroundTruth, per_coordinate: bool = False) -> Metrics:
    """Score a fit against the truth.

    tp / fp count selected coordinates on and off the true support; mse_s /
    mse_n are squared-error sums over the support and its complement
    (means per coordinate when per_coordinate is set).
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    delta_hat = np.asarray(delta_hat, dtype=bool)
    p = truth.theta_star.shape[0]
    if theta_hat.shape != (p,) or delta_hat.shape != (p,):
        raise DimensionMismatch("estimate lengths disagree with the truth")
    on_support = np.zeros(p, dtype=bool)
    on_support[truth.support] = True
    err = theta_hat - truth.theta_star
    mse_s = float(np.sum(err[on_support] ** 2))
    mse_n = float(np.sum(theta_hat[~on_support] ** 2))
    if per_coordinate:
        mse_s /= on_support.sum()
        n_off = (~on_support).sum()
        mse_n = mse_n / n_off if n_off else 0.0
    return Metrics(
        tp=int(np.sum(delta_hat & on_support)),
        fp=int(np.sum(delta_hat & ~on_support)),
        mse_s=mse_s,
        mse_n=mse_n,
    )


def credible_interval(chain: ChainResult, j: int, level: float = 0.95
                      ) -> tuple[float, float]:
    """Equal-tailed interval from nearest-rank quantiles of coordinate j."""
    if chain.theta_draws is None:
        raise MissingThetaDraws("chain was run without coefficient recording")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    draws = np.sort(chain.theta_draws[:, j])
    n = draws.shape[0]
    if n == 0:
        raise EmptyChain("chain holds no recorded draws")

    def rank(prob: float) -> int:
        return min(n, max(1, math.ceil(prob * n - 1e-9)))

    return (float(draws[rank((1.0 - level) / 2.0) - 1]),
            float(draws[rank((1.0 + level) / 2.0) - 1]))


# ---------------------------------------------------------------------------
# Hyper policy and seed derivation
# ---------------------------------------------------------------------------

def default_hyper_policy(setup: int, n: int, p: int, q: int,
                         u: float = 1.0, s_bar: int | None = None) -> HyperParams:
    """Tuning used throughout the replication studies.

    Slab variance log(p q) / sqrt(n), spike variance 10 / p, moment scale n
    for the Fourier design and n^(1/3) for the block design.
    """
    inv_rho_sq = math.log(p * q) / math.sqrt(n)
    lam = float(n) if setup == SETUP_FOURIER else float(n) ** (1.0 / 3.0)
    return HyperParams(
        lam=lam,
        rho_sq=1.0 / inv_rho_sq,
        gamma=10.0 / p,
        u=u,
        s_bar=s_bar if s_bar is not None else default_s_bar(n, p),
    )


def mix64(x: int) -> int:
    """SplitMix64 finalizer; a bijective 64-bit scramble."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def replicate_seed(base_seed: int, index: int) -> int:
    """Per-replicate seed: base_seed XOR SplitMix64(index)."""
    return (base_seed & 0xFFFFFFFFFFFFFFFF) ^ mix64(index)


def _run_one_replicate(scenario: SimScenario, seed_r: int,
                       chain_config: ChainConfig, hyper: HyperParams | None,
                       threshold: float, lambda_scad: float
                       ) -> tuple[Metrics, float]:
    """Generate, fit, and score a single replicate (worker entry point)."""
    started = time.perf_counter()
    ss = np.random.SeedSequence(seed_r)
    data_ss, chain_ss = ss.spawn(2)
    rng = np.random.Generator(np.random.PCG64(data_ss))
    if scenario.setup == SETUP_FOURIER:
        data, truth, imap = generate_setup1(scenario.n, scenario.p, scenario.m,
                                            scenario.snr, rng)
    else:
        data, truth, imap = generate_setup2(scenario.n, scenario.p,
                                            scenario.t_block, scenario.snr, rng)
    if hyper is None:
        hyper = default_hyper_policy(scenario.setup, data.n, data.p, data.q)
    theta0 = scad_initializer(data, lambda_scad=lambda_scad)
    cfg = replace(chain_config, seed=int(chain_ss.generate_state(1, np.uint64)[0]),
                  record_theta=True)
    chain = run_chain(data, hyper, imap, cfg, theta0)
    metrics = compute_metrics(point_estimate(chain), select_model(chain, threshold),
                              truth)
    return metrics, time.perf_counter() - started


def _aggregate(values: list[float]) -> tuple[float, float]:
    """Exact mean and sample standard deviation (0 for a single value)."""
    r = len(values)
    mean = math.fsum(values) / r
    if r == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (r - 1)
    return mean, math.sqrt(var)


def run_replications(scenario: SimScenario, r: int,
                     chain_config: ChainConfig | None = None,
                     hyper: HyperParams | None = None,
                     threshold: float = 0.5,
                     lambda_scad: float = 1.0,
                     n_jobs: int = 1) -> AggregateReport:
    """Run ``r`` independent replicates of a scenario and aggregate.

    Parameters
    ----------
    scenario : SimScenario
        Design, dimensions, signal strength, and base seed.
    r : int
        Number of replicates.
    chain_config : ChainConfig, optional
        Sweep schedule; the per-replicate seed overrides its seed field.
    hyper : HyperParams, optional
        Fixed tuning constants; the default policy is applied per dataset
        when omitted.
    threshold : float
        Inclusion-probability cutoff for model selection.
    lambda_scad : float
        Penalty level of the initializing SCAD fit.
    n_jobs : int
        Worker processes; 1 runs in-process. Results are identical either
        way.

    Failed replicates are recorded and skipped; aggregation runs over the
    successes.
    """
    if r < 1:
        raise ValueError("need at least one replicate")
    chain_config = chain_config or ChainConfig()
    seeds = [replicate_seed(scenario.seed, i) for i in range(r)]
    outcomes: list[Metrics | None] = [None] * r
    durations = [0.0] * r
    failures: list[str] = []
    started = time.perf_counter()

    if n_jobs == 1:
        for i, seed_r in enumerate(seeds):
            try:
                outcomes[i], durations[i] = _run_one_replicate(
                    scenario, seed_r, chain_config, hyper, threshold, lambda_scad)
            except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                failures.append(f"replicate {i}: {exc}")
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futs = {
                pool.submit(_run_one_replicate, scenario, seed_r, chain_config,
                            hyper, threshold, lambda_scad): i
                for i, seed_r in enumerate(seeds)
            }
            for fut in concurrent.futures.as_completed(futs):
                i = futs[fut]
                try:
                    outcomes[i], durations[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append(f"replicate {i}: {exc}")

    completed = [m for m in outcomes if m is not None]
    if not completed:
        raise RuntimeError("every replicate failed; first error: "
                           + (failures[0] if failures else "unknown"))
    means, sds = {}, {}
    for name in METRIC_NAMES:
        values = [float(getattr(m, name)) for m in completed]
        means[name], sds[name] = _aggregate(values)

    resolved_hyper = hyper
    if resolved_hyper is None:
        p = scenario.p
        q = 2 * p if scenario.setup == SETUP_FOURIER else scenario.t_block * p
        resolved_hyper = default_hyper_policy(scenario.setup, scenario.n, p, q)

    return AggregateReport(
        scenario=scenario,
        r_requested=r,
        r_completed=len(completed),
        means=means,
        sds=sds,
        per_replicate=completed,
        seeds=seeds,
        hyper=resolved_hyper,
        failures=sorted(failures),
        total_seconds=time.perf_counter() - started,
        replicate_seconds=durations,
    )
