"""Seeded generators for the two synthetic endogenous-regression designs.

Setup 1 builds regressors from shared Fourier features of a latent
3-dimensional Gaussian, with a block of endogenous columns multiplied by a
common noise factor; the sine and cosine feature banks are the working
instruments. Setup 2 draws an autocorrelated Gaussian design whose error
loads on the design itself (so every regressor is endogenous), plus
independent Gaussian blocks that enter additively and serve as the
instruments.

Draw order is fixed and documented per generator so a (scenario, seed)
pair is fully reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import TooFewRegressors
from .model import DesignData, InstrumentMap, normalize_instruments

SETUP_FOURIER = 1
SETUP_BLOCK = 2

# Base coefficient profile scaled by snr; support is always the first five.
THETA_BASE = (5.0, -4.0, 7.0, -2.0, 1.5)


@dataclass
class SimScenario:
    """One simulation configuration.

    ``m`` is the endogenous-column count (setup 1 only); ``t_block`` the
    per-regressor instrument block size (setup 2 only).
    """

    setup: int
    n: int
    p: int
    snr: float
    seed: int
    m: int | None = None
    t_block: int | None = None

    def __post_init__(self):
        if self.setup not in (SETUP_FOURIER, SETUP_BLOCK):
            raise ValueError(f"unknown setup {self.setup}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.setup == SETUP_FOURIER:
            if self.m is None:
                raise ValueError("setup 1 requires m")
            if not 3 <= self.m <= self.p - 2:
                raise ValueError("setup 1 requires 3 <= m <= p - 2")
        else:
            if self.t_block is None or self.t_block < 1:
                raise ValueError("setup 2 requires t_block >= 1")

    @property
    def m_or_t(self) -> int:
        return self.m if self.setup == SETUP_FOURIER else self.t_block


@dataclass
class GroundTruth:
    """True coefficients with their support and endogenous index set."""

    theta_star: np.ndarray
    support: np.ndarray
    endogenous: np.ndarray


def make_theta_star(p: int, snr: float) -> GroundTruth:
    """True coefficient vector: snr * (5, -4, 7, -2, 1.5, 0, ..., 0)."""
    if p < 5:
        raise TooFewRegressors(f"need p >= 5, got {p}")
    if snr <= 0:
        raise ValueError("snr must be positive")
    theta = np.zeros(p)
    theta[:5] = np.asarray(THETA_BASE) * snr
    return GroundTruth(theta_star=theta, support=np.arange(5),
                       endogenous=np.empty(0, dtype=np.intp))


def pairwise_instrument_map(p: int) -> InstrumentMap:
    """Map regressor j to instrument columns {j, p + j} (q = 2p)."""
    return InstrumentMap(groups=[np.array([j, p + j]) for j in range(p)], q=2 * p)


def block_instrument_map(p: int, t_block: int) -> InstrumentMap:
    """Map regressor j to the contiguous block of t_block instruments."""
    return InstrumentMap(
        groups=[np.arange(t_block * j, t_block * (j + 1)) for j in range(p)],
        q=t_block * p,
    )


def setup1_endogenous_indices(p: int, m: int) -> np.ndarray:
    """0-based endogenous set {0, 1, 2} plus {5, ..., m + 1}."""
    return np.concatenate([np.arange(3), np.arange(5, m + 2)])


def generate_setup1(n: int, p: int, m: int, snr: float,
                    rng: np.random.Generator,
                    eps: np.ndarray | None = None
                    ) -> tuple[DesignData, GroundTruth, InstrumentMap]:
    """Fourier-feature design with a shared multiplicative noise factor.

    Per row: latent V ~ N(0, I_3); features F_j = sqrt(2) sum_i sin(j pi V_i)
    and H_j defined with cosines, j = 1..p; error e ~ N(0, 1); idiosyncratic
    u_j ~ N(0, 1). Endogenous columns are (F_j + H_j + 1)(3 e + 1), the rest
    F_j + H_j + u_j. Instruments are the 2p feature columns [F, H], column
    normalized, and regressor j maps to the pair {j, p + j}.

    Draw order: V (n x 3), then e (n), then u (n x p). Passing ``eps``
    overrides e without consuming draws (test hook).
    """
    if not 3 <= m <= p - 2:
        raise ValueError("setup 1 requires 3 <= m <= p - 2")
    truth = make_theta_star(p, snr)
    endo = setup1_endogenous_indices(p, m)
    truth.endogenous = endo

    V = rng.standard_normal((n, 3))
    if eps is None:
        eps = rng.standard_normal(n)
    else:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (n,):
            raise ValueError("eps override must have length n")
    u = rng.standard_normal((n, p))

    args = V[:, :, None] * (math.pi * np.arange(1, p + 1))   # (n, 3, p)
    F = math.sqrt(2.0) * np.sin(args).sum(axis=1)
    H = math.sqrt(2.0) * np.cos(args).sum(axis=1)

    X = F + H + u
    X[:, endo] = (F[:, endo] + H[:, endo] + 1.0) * (3.0 * eps + 1.0)[:, None]
    y = X @ truth.theta_star + eps
    W = np.hstack([F, H])

    data = normalize_instruments(DesignData(y=y, X=X, W=W))
    return data, truth, pairwise_instrument_map(p)


def setup2_error_loadings(p: int) -> np.ndarray:
    """Loadings (0.1, 0.2, ..., 1.0, 0, ...) of the error on the latent design."""
    gamma0 = np.zeros(p)
    k = min(p, 10)
    gamma0[:k] = 0.1 * np.arange(1, k + 1)
    return gamma0


def generate_setup2(n: int, p: int, t_block: int, snr: float,
                    rng: np.random.Generator
                    ) -> tuple[DesignData, GroundTruth, InstrumentMap]:
    """Autocorrelated design with additive instrument blocks; all columns
    endogenous.

    Per row: latent Xt ~ N(0, S) with S_ij = 0.3^|i-j| (via Cholesky);
    instrument source z ~ N(0, I_{t_block * p}); zeta ~ N(0, 1/16). Column j
    is Xt_j plus the sum of its z block, the error is zeta + Xt' gamma0 with
    gamma0 = (0.1, ..., 1.0, 0, ...). The z columns are the instruments,
    column normalized, regressor j mapping to its contiguous block.

    Draw order: standard normals for Xt (n x p), then z (n x t_block * p),
    then zeta (n).
    """
    if t_block < 1:
        raise ValueError("setup 2 requires t_block >= 1")
    truth = make_theta_star(p, snr)
    truth.endogenous = np.arange(p)

    cov = 0.3 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    chol = scipy.linalg.cholesky(cov, lower=True)
    Xt = rng.standard_normal((n, p)) @ chol.T
    z = rng.standard_normal((n, t_block * p))
    zeta = rng.standard_normal(n) * 0.25

    X = Xt + z.reshape(n, p, t_block).sum(axis=2)
    eps = zeta + Xt @ setup2_error_loadings(p)
    y = X @ truth.theta_star + eps

    data = normalize_instruments(DesignData(y=y, X=X, W=z))
    return data, truth, block_instrument_map(p, t_block)


def generate_scenario(scenario: SimScenario
                      ) -> tuple[DesignData, GroundTruth, InstrumentMap]:
    """Generate a dataset from a scenario using its own seed."""
    rng = np.random.Generator(np.random.PCG64(scenario.seed))
    if scenario.setup == SETUP_FOURIER:
        return generate_setup1(scenario.n, scenario.p, scenario.m,
                               scenario.snr, rng)
    return generate_setup2(scenario.n, scenario.p, scenario.t_block,
                           scenario.snr, rng)
