import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import ivselect
from ivselect import (
    ChainConfig,
    EmptyChain,
    HyperParams,
    MissingThetaDraws,
    SimScenario,
    compute_metrics,
    credible_interval,
    default_hyper_policy,
    make_theta_star,
    point_estimate,
    replicate_seed,
    run_replications,
    select_model,
)
from ivselect.replicate import mix64
from ivselect.sampler import ChainResult


def fake_chain(delta_draws, theta_draws=None):
    delta_draws = np.asarray(delta_draws, dtype=bool)
    n_sweeps = delta_draws.shape[0]
    inclusion = (delta_draws.mean(axis=0) if n_sweeps
                 else np.zeros(delta_draws.shape[1]))
    return ChainResult(
        delta_draws=delta_draws,
        theta_draws=None if theta_draws is None else np.asarray(theta_draws, float),
        theta_raw_draws=None,
        inclusion_prob=inclusion,
        accept_rate_single=0.0,
        accept_rate_double=0.0,
        n_single_prop=0,
        n_double_prop=0,
        log_post_trace=np.zeros(n_sweeps),
        delta_size_trace=delta_draws.sum(axis=1).astype(np.int32),
        move_trace=np.zeros(n_sweeps, dtype=np.int8),
        accept_trace=np.zeros(n_sweeps, dtype=bool),
        max_logpost_drift=0.0,
        max_cache_drift=0.0,
        seeds_used={},
    )


class TestSelectModel:
    def test_plain_threshold(self):
        chain = fake_chain([[1, 1, 0], [1, 1, 0], [1, 0, 0]])
        assert select_model(chain).tolist() == [True, True, False]

    def test_exact_threshold_excluded(self):
        chain = fake_chain([[1, 0], [0, 0]])  # inclusion 0.5, 0.0
        assert select_model(chain, threshold=0.5).tolist() == [False, False]

    def test_empty_chain(self):
        chain = fake_chain(np.zeros((0, 3)))
        with pytest.raises(EmptyChain):
            select_model(chain)

    def test_agrees_with_exact_argmax_when_decisive(self, small_design, small_hyper):
        data, _, imap = small_design
        patterns, probs = ivselect.enumerate_delta_posterior(data, small_hyper, imap)
        best = patterns[np.argmax(probs)]
        cfg = ChainConfig(n_sweeps=30000, burn_in=5000, thin=1, seed=3)
        chain = ivselect.run_chain(data, small_hyper, imap, cfg)
        decisive = np.all(np.abs(chain.inclusion_prob - 0.5) > 0.1)
        assert decisive
        assert np.array_equal(select_model(chain), best)


class TestPointEstimate:
    def test_constant_draws(self):
        theta = np.tile([1.0, 0.0, -2.0], (7, 1))
        chain = fake_chain(np.ones((7, 3)), theta)
        assert_allclose(point_estimate(chain), [1.0, 0.0, -2.0], rtol=0)

    def test_never_active_coordinate_zero(self):
        delta = np.array([[1, 0], [1, 0], [1, 0]])
        theta = np.array([[2.0, 0.0], [4.0, 0.0], [6.0, 0.0]])
        est = point_estimate(fake_chain(delta, theta))
        assert est[1] == 0.0
        assert est[0] == pytest.approx(4.0)

    def test_matches_streaming_mean(self, rng):
        theta = rng.standard_normal((500, 4))
        chain = fake_chain(rng.random((500, 4)) < 0.5, theta)
        streaming = np.zeros(4)
        for i, row in enumerate(theta, start=1):
            streaming += (row - streaming) / i
        assert_allclose(point_estimate(chain), streaming, atol=1e-12)

    def test_missing_draws(self):
        with pytest.raises(MissingThetaDraws):
            point_estimate(fake_chain(np.ones((3, 2))))


class TestComputeMetrics:
    def test_perfect_recovery(self):
        truth = make_theta_star(10, 1.0)
        delta = np.zeros(10, bool)
        delta[:5] = True
        m = compute_metrics(truth.theta_star, delta, truth)
        assert (m.tp, m.fp, m.mse_s, m.mse_n) == (5, 0, 0.0, 0.0)

    def test_all_ones_fp(self):
        truth = make_theta_star(100, 1.0)
        m = compute_metrics(np.zeros(100), np.ones(100, bool), truth)
        assert m.fp == 95
        assert m.tp == 5

    def test_matches_dense_recomputation(self, rng):
        truth = make_theta_star(12, 0.5)
        theta_hat = rng.standard_normal(12)
        delta_hat = rng.random(12) < 0.4
        m = compute_metrics(theta_hat, delta_hat, truth)
        support = np.zeros(12, bool)
        support[truth.support] = True
        assert_allclose(m.mse_s, np.sum((theta_hat - truth.theta_star)[support] ** 2),
                        atol=1e-12)
        assert_allclose(m.mse_n, np.sum(theta_hat[~support] ** 2), atol=1e-12)
        assert m.tp + np.sum(support & ~delta_hat) == 5
        assert m.fp + np.sum(~support & ~delta_hat) == 7

    def test_per_coordinate_flag(self, rng):
        truth = make_theta_star(10, 1.0)
        theta_hat = rng.standard_normal(10)
        delta_hat = rng.random(10) < 0.5
        total = compute_metrics(theta_hat, delta_hat, truth)
        per = compute_metrics(theta_hat, delta_hat, truth, per_coordinate=True)
        assert_allclose(per.mse_s, total.mse_s / 5)
        assert_allclose(per.mse_n, total.mse_n / 5)


class TestCredibleInterval:
    def test_constant_draws_degenerate(self):
        theta = np.full((50, 2), 3.25)
        chain = fake_chain(np.ones((50, 2)), theta)
        assert credible_interval(chain, 0) == (3.25, 3.25)

    def test_nearest_rank_order_statistics(self):
        draws = np.arange(1, 1001, dtype=float)
        np.random.default_rng(0).shuffle(draws)
        chain = fake_chain(np.ones((1000, 1)), draws[:, None])
        lo, hi = credible_interval(chain, 0, level=0.95)
        assert (lo, hi) == (25.0, 975.0)

    @settings(max_examples=50, deadline=None)
    @given(
        draws=st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=200),
        level=st.floats(0.5, 0.99),
    )
    def test_contains_median(self, draws, level):
        arr = np.asarray(draws)[:, None]
        chain = fake_chain(np.ones((len(draws), 1)), arr)
        lo, hi = credible_interval(chain, 0, level=level)
        med = float(np.median(arr))
        assert lo <= med + 1e-9
        assert hi >= med - 1e-9


class TestHyperPolicy:
    def test_table_values(self):
        h1 = default_hyper_policy(1, 100, 100, 200)
        assert h1.lam == 100.0
        assert 1.0 / h1.rho_sq == pytest.approx(math.log(100 * 200) / 10.0)
        assert h1.gamma == pytest.approx(0.1)
        assert h1.s_bar == min(100, int(100 / math.log(100)))
        h2 = default_hyper_policy(2, 100, 100, 200)
        assert h2.lam == pytest.approx(100 ** (1 / 3))

    def test_seed_mixing_bijective_prefix(self):
        seeds = {replicate_seed(123, i) for i in range(1000)}
        assert len(seeds) == 1000
        assert mix64(0) != 0


class TestRunReplications:
    @pytest.fixture
    def tiny_scenario(self):
        return SimScenario(setup=1, n=40, p=8, snr=1.0, seed=77, m=3)

    @pytest.fixture
    def tiny_config(self):
        return ChainConfig(n_sweeps=400, burn_in=100, thin=2, seed=0,
                           refresh_every=200)

    def test_single_replicate_zero_sd(self, tiny_scenario, tiny_config):
        report = run_replications(tiny_scenario, 1, chain_config=tiny_config)
        assert report.r_completed == 1
        assert all(sd == 0.0 for sd in report.sds.values())

    def test_means_match_replicate_log(self, tiny_scenario, tiny_config):
        report = run_replications(tiny_scenario, 4, chain_config=tiny_config)
        for name in ("tp", "fp", "mse_s", "mse_n"):
            values = [float(getattr(m, name)) for m in report.per_replicate]
            assert_allclose(report.means[name], math.fsum(values) / 4, atol=1e-12)

    def test_determinism(self, tiny_scenario, tiny_config):
        a = run_replications(tiny_scenario, 3, chain_config=tiny_config)
        b = run_replications(tiny_scenario, 3, chain_config=tiny_config)
        assert a.means == b.means
        assert a.sds == b.sds
        assert a.seeds == b.seeds

    def test_counts_are_consistent(self, tiny_scenario, tiny_config):
        report = run_replications(tiny_scenario, 5, chain_config=tiny_config)
        for m in report.per_replicate:
            assert 0 <= m.tp <= 5
            assert 0 <= m.fp <= tiny_scenario.p - 5
            assert m.mse_s >= 0.0 and m.mse_n >= 0.0
        assert len(report.seeds) == 5
        assert report.hyper.lam == tiny_scenario.n

    def test_strong_signal_recovers_support(self):
        # high signal, exogenous-only noise coordinates: every replicate
        # should select exactly the support
        scenario = SimScenario(setup=1, n=200, p=30, snr=10.0, seed=11, m=3)
        cfg = ChainConfig(n_sweeps=2000, burn_in=500, thin=2, seed=0)
        report = run_replications(scenario, 5, chain_config=cfg)
        hits = sum(m.tp == 5 and m.fp == 0 for m in report.per_replicate)
        assert hits >= math.ceil(0.95 * 5)

    def test_parallel_matches_serial(self, tiny_scenario, tiny_config):
        serial = run_replications(tiny_scenario, 4, chain_config=tiny_config, n_jobs=1)
        parallel = run_replications(tiny_scenario, 4, chain_config=tiny_config, n_jobs=2)
        assert serial.means == parallel.means
        assert serial.sds == parallel.sds
