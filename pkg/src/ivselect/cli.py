"""Command-line interface.

Subcommands: ``simulate`` writes a synthetic dataset, ``fit`` runs one chain
on a dataset, ``replicate`` aggregates a simulation study, ``diagnose``
reports identifiability diagnostics and the contraction-radius ball
fractions. A config file of ``dotted.key = value`` lines supplies defaults;
explicit flags win. Exit codes: 0 success, 1 runtime failure, 2 usage error,
3 data error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import (
    DimensionMismatch,
    EmptyChain,
    EmptyPattern,
    IvSelectError,
    MissingThetaDraws,
    ParseError,
    TooFewRegressors,
    UnmappedRegressor,
    ZeroColumn,
)
from .model import HyperParams, contraction_radius, default_s_bar
from .replicate import (
    credible_interval,
    default_hyper_policy,
    point_estimate,
    run_replications,
    select_model,
)
from .sampler import ChainConfig, run_chain
from .scad import scad_initializer
from .simulate import SETUP_FOURIER, SimScenario, generate_scenario

USAGE_EXIT = 2
DATA_EXIT = 3
RUNTIME_EXIT = 1

_DATA_ERRORS = (
    ParseError,
    DimensionMismatch,
    UnmappedRegressor,
    ZeroColumn,
    EmptyPattern,
    EmptyChain,
    MissingThetaDraws,
    TooFewRegressors,
    FileNotFoundError,
    IsADirectoryError,
)


class _Settings:
    """Flag values backed by config-file defaults.

    A flag left at None falls back to ``section.name`` from the config
    file, then to the built-in default.
    """

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self.args = args
        self.config = config

    def _raw(self, key: str, flag_value):
        if flag_value is not None:
            return flag_value
        return self.config.get(key)

    def get(self, key: str, flag_value, default=None, cast=str):
        raw = self._raw(key, flag_value)
        if raw is None:
            return default
        if cast is bool and isinstance(raw, str):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)

    def effective(self) -> dict[str, str]:
        """Everything that went into this run, for hashing and provenance."""
        out = dict(self.config)
        for key, value in vars(self.args).items():
            if value is not None and key not in ("func", "config"):
                out[f"cli.{key}"] = str(value)
        return out


def _add_scenario_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--setup", type=int, choices=(1, 2), default=None,
                    help="simulation design (1 Fourier, 2 block)")
    sp.add_argument("--n", type=int, default=None, help="sample size")
    sp.add_argument("--p", type=int, default=None, help="number of regressors")
    sp.add_argument("--m", type=int, default=None,
                    help="endogenous count (setup 1)")
    sp.add_argument("--T", type=int, default=None, dest="t_block",
                    help="instrument block size (setup 2)")
    sp.add_argument("--snr", type=float, default=None, help="signal strength")
    sp.add_argument("--seed", type=int, default=None, help="base seed")


def _add_hyper_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--lam", type=float, default=None,
                    help="moment criterion scale")
    sp.add_argument("--rho-sq", type=float, default=None,
                    help="slab precision (slab variance is its inverse)")
    sp.add_argument("--gamma", type=float, default=None, help="spike variance")
    sp.add_argument("--u", type=float, default=None,
                    help="sparsity prior exponent")
    sp.add_argument("--s-bar", type=int, default=None,
                    help="cap on active regressors")


def _add_chain_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--sweeps", type=int, default=None, help="total sweeps")
    sp.add_argument("--burn-in", type=int, default=None, help="burn-in sweeps")
    sp.add_argument("--thin", type=int, default=None, help="thinning stride")
    sp.add_argument("--chain-seed", type=int, default=None, help="chain RNG seed")
    sp.add_argument("--refresh-every", type=int, default=None,
                    help="cache refresh interval")
    sp.add_argument("--flip-mix", type=float, default=None,
                    help="probability of a single flip per sweep")
    sp.add_argument("--lambda-scad", type=float, default=None,
                    help="penalty level of the SCAD initializer")


def _add_dataset_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--y", default=None, help="response CSV")
    sp.add_argument("--x", default=None, help="regressor CSV")
    sp.add_argument("--w", default=None, help="instrument CSV")
    sp.add_argument("--map", default=None, dest="map_path",
                    help="instrument-map file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivselect",
        description="Quasi-Bayesian variable selection for linear IV regression",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="write a synthetic dataset")
    sp.add_argument("--config", default=None)
    _add_scenario_flags(sp)
    sp.add_argument("--out", default=None, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="run one chain on a dataset")
    sp.add_argument("--config", default=None)
    _add_dataset_flags(sp)
    _add_hyper_flags(sp)
    _add_chain_flags(sp)
    sp.add_argument("--threshold", type=float, default=None,
                    help="inclusion-probability cutoff")
    sp.add_argument("--level", type=float, default=None,
                    help="credible interval level")
    sp.add_argument("--emit-trace", action="store_true",
                    help="write a per-sweep trace CSV")
    sp.add_argument("--emit-plotdata", action="store_true",
                    help="write histogram-ready draws of one coordinate")
    sp.add_argument("--plot-coord", type=int, default=None,
                    help="1-based coordinate for --emit-plotdata")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("replicate", help="run a replicated simulation study")
    sp.add_argument("--config", default=None)
    _add_scenario_flags(sp)
    _add_hyper_flags(sp)
    _add_chain_flags(sp)
    sp.add_argument("--r", type=int, default=None, help="replicate count")
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--n-jobs", type=int, default=None, help="worker processes")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_replicate)

    sp = sub.add_parser("diagnose", help="contraction diagnostics")
    sp.add_argument("--config", default=None)
    _add_scenario_flags(sp)
    _add_dataset_flags(sp)
    _add_hyper_flags(sp)
    _add_chain_flags(sp)
    sp.add_argument("--truth", default=None, help="true-coefficient CSV")
    sp.add_argument("--s-star", type=int, default=None,
                    help="assumed true support size")
    sp.add_argument("--sigma0", type=float, default=None,
                    help="noise scale for the radius")
    sp.add_argument("--ball-mult", type=float, default=None,
                    help="radius multiplier M for the coefficient ball")
    sp.add_argument("--spread-mult", type=float, default=None,
                    help="multiplier m for the inactive-spread ball")
    sp.add_argument("--n-patterns", type=int, default=None,
                    help="patterns sampled for the eigen extremes")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_diagnose)
    return parser


# ---------------------------------------------------------------------------
# Shared resolution helpers
# ---------------------------------------------------------------------------

def _resolve_scenario(st: _Settings) -> SimScenario:
    a = st.args
    setup = st.get("scenario.setup", a.setup, default=1, cast=int)
    n = st.get("scenario.n", a.n, default=100, cast=int)
    p = st.get("scenario.p", a.p, default=100, cast=int)
    snr = st.get("scenario.snr", a.snr, default=1.0, cast=float)
    seed = st.get("scenario.seed", a.seed, default=0, cast=int)
    if setup == 1:
        m = st.get("scenario.m", a.m, default=10, cast=int)
        return SimScenario(setup=1, n=n, p=p, snr=snr, seed=seed, m=m)
    t_block = st.get("scenario.T", a.t_block, default=2, cast=int)
    return SimScenario(setup=2, n=n, p=p, snr=snr, seed=seed, t_block=t_block)


def _resolve_hyper(st: _Settings, setup: int, n: int, p: int, q: int) -> HyperParams:
    a = st.args
    policy = default_hyper_policy(setup, n, p, q)
    return HyperParams(
        lam=st.get("hyper.lam", a.lam, default=policy.lam, cast=float),
        rho_sq=st.get("hyper.rho_sq", a.rho_sq, default=policy.rho_sq, cast=float),
        gamma=st.get("hyper.gamma", a.gamma, default=policy.gamma, cast=float),
        u=st.get("hyper.u", a.u, default=policy.u, cast=float),
        s_bar=st.get("hyper.s_bar", a.s_bar, default=policy.s_bar, cast=int),
    )


def _resolve_chain(st: _Settings) -> ChainConfig:
    a = st.args
    return ChainConfig(
        n_sweeps=st.get("chain.n_sweeps", a.sweeps, default=10_000, cast=int),
        burn_in=st.get("chain.burn_in", a.burn_in, default=5_000, cast=int),
        thin=st.get("chain.thin", a.thin, default=5, cast=int),
        seed=st.get("chain.seed", a.chain_seed, default=0, cast=int),
        refresh_every=st.get("chain.refresh_every", a.refresh_every,
                             default=1_000, cast=int),
        flip_mix=st.get("chain.flip_mix", a.flip_mix, default=0.5, cast=float),
    )


def _out_dir(st: _Settings) -> Path:
    out = st.get("run.out", st.args.out, default=None)
    return Path(out) if out else io.default_output_dir()


def _hyper_meta(hyper: HyperParams) -> dict:
    return {
        "hyper.lambda": io.format_value(hyper.lam),
        "hyper.rho_sq": io.format_value(hyper.rho_sq),
        "hyper.inv_rho_sq": io.format_value(1.0 / hyper.rho_sq),
        "hyper.gamma": io.format_value(hyper.gamma),
        "hyper.u": io.format_value(hyper.u),
        "hyper.s_bar": hyper.s_bar,
    }


def _chain_meta(cfg: ChainConfig) -> dict:
    return {
        "chain.n_sweeps": cfg.n_sweeps,
        "chain.burn_in": cfg.burn_in,
        "chain.thin": cfg.thin,
        "chain.seed": cfg.seed,
        "chain.flip_mix": io.format_value(cfg.flip_mix),
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(st: _Settings) -> int:
    scenario = _resolve_scenario(st)
    data, truth, imap = generate_scenario(scenario)
    outdir = _out_dir(st)
    meta = {
        "config-hash": io.config_hash(st.effective()),
        "scenario.setup": scenario.setup,
        "scenario.n": scenario.n,
        "scenario.p": scenario.p,
        "scenario.m_or_T": scenario.m_or_t,
        "scenario.snr": io.format_value(scenario.snr),
        "scenario.seed": scenario.seed,
        "rng": "PCG64",
    }
    paths = io.write_dataset(outdir, data, imap, theta_star=truth.theta_star,
                             meta=meta)
    print(f"wrote {', '.join(str(v) for v in paths.values())}")
    return 0


def cmd_fit(st: _Settings) -> int:
    a = st.args
    y_path = st.get("data.y", a.y, default=None)
    x_path = st.get("data.x", a.x, default=None)
    w_path = st.get("data.w", a.w, default=None)
    map_path = st.get("data.map", a.map_path, default=None)
    if not all((y_path, x_path, w_path, map_path)):
        print("error: fit requires --y, --x, --w and --map", file=sys.stderr)
        return USAGE_EXIT
    data, imap = io.load_dataset(y_path, x_path, w_path, map_path)
    hyper = _resolve_hyper(st, SETUP_FOURIER, data.n, data.p, data.q)
    cfg = _resolve_chain(st)
    lambda_scad = st.get("chain.lambda_scad", a.lambda_scad, default=1.0, cast=float)
    threshold = st.get("run.threshold", a.threshold, default=0.5, cast=float)
    level = st.get("run.level", a.level, default=0.95, cast=float)

    theta0 = scad_initializer(data, lambda_scad=lambda_scad)
    chain = run_chain(data, hyper, imap, cfg, theta0)
    theta_hat = point_estimate(chain)
    delta_hat = select_model(chain, threshold)
    intervals = [credible_interval(chain, j, level) for j in range(data.p)]

    outdir = _out_dir(st)
    meta = {
        "config-hash": io.config_hash(st.effective()),
        "data.y": y_path, "data.x": x_path, "data.w": w_path,
        "threshold": io.format_value(threshold),
        "level": io.format_value(level),
        **_hyper_meta(hyper), **_chain_meta(cfg),
    }
    rows = [
        [j + 1, chain.inclusion_prob[j], theta_hat[j], delta_hat[j],
         intervals[j][0], intervals[j][1]]
        for j in range(data.p)
    ]
    summary_path = outdir / "posterior_summary.csv"
    io.write_table(summary_path,
                   ["coord", "inclusion_prob", "theta_hat", "selected",
                    "ci_lo", "ci_hi"],
                   rows, meta)
    written = [summary_path]

    if st.get("run.emit_trace", a.emit_trace or None, default=False, cast=bool):
        trace_path = outdir / "trace.csv"
        trace_rows = zip(
            range(1, cfg.n_sweeps + 1),
            chain.delta_size_trace,
            chain.log_post_trace,
            chain.move_trace,
            chain.accept_trace,
        )
        io.write_table(trace_path,
                       ["sweep", "delta_size", "log_post", "move_type", "accepted"],
                       trace_rows, meta)
        written.append(trace_path)

    if st.get("run.emit_plotdata", a.emit_plotdata or None, default=False, cast=bool):
        coord = st.get("run.plot_coord", a.plot_coord, default=1, cast=int)
        if not 1 <= coord <= data.p:
            print(f"error: --plot-coord must lie in 1..{data.p}", file=sys.stderr)
            return USAGE_EXIT
        draws_path = outdir / f"coord{coord}_draws.csv"
        io.write_table(draws_path, [f"theta_{coord}"],
                       ([v] for v in chain.theta_draws[:, coord - 1]), meta)
        written.append(draws_path)

    selected = np.flatnonzero(delta_hat) + 1
    print(f"selected {selected.size} coordinates: {selected.tolist()}")
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def cmd_replicate(st: _Settings) -> int:
    a = st.args
    scenario = _resolve_scenario(st)
    q = 2 * scenario.p if scenario.setup == 1 else scenario.t_block * scenario.p
    hyper = _resolve_hyper(st, scenario.setup, scenario.n, scenario.p, q)
    cfg = _resolve_chain(st)
    r = st.get("run.r", a.r, default=100, cast=int)
    threshold = st.get("run.threshold", a.threshold, default=0.5, cast=float)
    n_jobs = st.get("run.n_jobs", a.n_jobs, default=1, cast=int)
    lambda_scad = st.get("chain.lambda_scad", a.lambda_scad, default=1.0, cast=float)

    report = run_replications(scenario, r, chain_config=cfg, hyper=hyper,
                              threshold=threshold, lambda_scad=lambda_scad,
                              n_jobs=n_jobs)

    outdir = _out_dir(st)
    meta = {
        "config-hash": io.config_hash(st.effective()),
        "lambda_scad": io.format_value(lambda_scad),
        "threshold": io.format_value(threshold),
        "replicates.completed": report.r_completed,
        "replicates.failed": len(report.failures),
        "rng": "PCG64",
        **_hyper_meta(hyper), **_chain_meta(cfg),
    }
    row = [
        scenario.setup, scenario.n, scenario.p, scenario.m_or_t, scenario.snr,
        report.means["tp"], report.sds["tp"],
        report.means["fp"], report.sds["fp"],
        report.means["mse_s"], report.sds["mse_s"],
        report.means["mse_n"], report.sds["mse_n"],
        r, scenario.seed,
    ]
    results_path = outdir / "results.csv"
    io.write_table(
        results_path,
        ["setup", "n", "p", "m_or_T", "snr", "TP_mean", "TP_sd", "FP_mean",
         "FP_sd", "MSES_mean", "MSES_sd", "MSEN_mean", "MSEN_sd", "R", "seed"],
        [row], meta)
    print(f"TP {report.means['tp']:.3f} ({report.sds['tp']:.3f})  "
          f"FP {report.means['fp']:.3f} ({report.sds['fp']:.3f})  "
          f"MSE_S {report.means['mse_s']:.4f}  MSE_N {report.means['mse_n']:.4f}  "
          f"[{report.total_seconds:.1f}s]")
    print(f"wrote {results_path}")
    return 0


def cmd_diagnose(st: _Settings) -> int:
    a = st.args
    theta_star = None
    using_dataset = a.y is not None or st.get("data.y", None) is not None
    if using_dataset:
        y_path = st.get("data.y", a.y, default=None)
        x_path = st.get("data.x", a.x, default=None)
        w_path = st.get("data.w", a.w, default=None)
        map_path = st.get("data.map", a.map_path, default=None)
        if not all((y_path, x_path, w_path, map_path)):
            print("error: dataset mode requires --y, --x, --w and --map",
                  file=sys.stderr)
            return USAGE_EXIT
        data, imap = io.load_dataset(y_path, x_path, w_path, map_path)
        truth_path = st.get("data.truth", a.truth, default=None)
        if truth_path:
            theta_star = io.load_truth_vector(truth_path, data.p)
        setup = SETUP_FOURIER
        scenario_seed = st.get("scenario.seed", a.seed, default=0, cast=int)
    else:
        scenario = _resolve_scenario(st)
        data, truth, imap = generate_scenario(scenario)
        theta_star = truth.theta_star
        setup = scenario.setup
        scenario_seed = scenario.seed

    hyper = _resolve_hyper(st, setup, data.n, data.p, data.q)
    s_star = st.get("diagnose.s_star", a.s_star,
                    default=int(np.count_nonzero(theta_star))
                    if theta_star is not None else 5,
                    cast=int)
    sigma0 = st.get("diagnose.sigma0", a.sigma0, default=1.0, cast=float)
    ball_mult = st.get("diagnose.ball_mult", a.ball_mult, default=12.0, cast=float)
    spread_mult = st.get("diagnose.spread_mult", a.spread_mult, default=2.0,
                         cast=float)
    n_patterns = st.get("diagnose.n_patterns", a.n_patterns, default=200, cast=int)

    diag = contraction_radius(data, hyper, imap, s_star=s_star, sigma0=sigma0,
                              n_patterns=n_patterns, seed=scenario_seed)
    rows = [
        ["n", data.n], ["p", data.p], ["q", data.q],
        ["s_bar", hyper.s_bar], ["s_star", s_star],
        ["sigma0", sigma0],
        ["kappa_low", diag.v_low], ["kappa_high", diag.v_high],
        ["t_bar", diag.t_bar], ["epsilon", diag.epsilon],
        ["ball_mult", ball_mult],
        ["ball_radius", ball_mult * diag.epsilon],
    ]

    if theta_star is not None:
        cfg = replace(_resolve_chain(st), record_theta=True, record_theta_raw=True)
        lambda_scad = st.get("chain.lambda_scad", a.lambda_scad, default=1.0,
                             cast=float)
        theta0 = scad_initializer(data, lambda_scad=lambda_scad)
        chain = run_chain(data, hyper, imap, cfg, theta0)
        dist = np.linalg.norm(chain.theta_draws - theta_star, axis=1)
        frac = float(np.mean(dist <= ball_mult * diag.epsilon))
        spread = np.linalg.norm(chain.theta_raw_draws - chain.theta_draws, axis=1)
        spread_radius = spread_mult * math.sqrt(hyper.gamma * data.p)
        frac_spread = float(np.mean(spread <= spread_radius))
        rows += [
            ["fraction_within_ball", frac],
            ["spread_mult", spread_mult],
            ["spread_radius", spread_radius],
            ["fraction_within_spread", frac_spread],
        ]
        print(f"epsilon {diag.epsilon:.4f}; fraction of draws within "
              f"{ball_mult:g} * epsilon of the truth: {frac:.3f}")
    else:
        print(f"epsilon {diag.epsilon:.4f} (no truth supplied; "
              "ball fractions skipped)")

    outdir = _out_dir(st)
    meta = {"config-hash": io.config_hash(st.effective()), **_hyper_meta(hyper)}
    diag_path = outdir / "diagnostics.csv"
    io.write_table(diag_path, ["quantity", "value"], rows, meta)
    print(f"wrote {diag_path}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    config = {}
    if getattr(args, "config", None):
        try:
            config = io.parse_config_file(args.config)
        except _DATA_ERRORS as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return DATA_EXIT
    st = _Settings(args, config)
    try:
        return args.func(st)
    except _DATA_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DATA_EXIT
    except ValueError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except IvSelectError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


def main(argv=None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
