"""Command-line entry point: ``lgcpgrid <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 partial scenario failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .covariance import CovarianceModel, NeedLargerExtension, cov_base
from .gaussian_approx import GaussianApproxConfig, gaussian_approximation, gaussian_quantiles
from .gmrf_fit import FitConfig, approximation_mse, expected_approximation_mse, fit, precision_base
from .grid_fft import GridSpec
from .harness import io
from .harness.study import ConfigError, StudyConfig, run_study, run_table1
from .lgcp_model import CellCounts, load_scenario, read_grid_csv, simulate_scenario
from .mala import ChainConfig, quantiles, run_chain

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3

log = logging.getLogger("lgcpgrid")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _add_chain_args(p):
    p.add_argument("--n-iter", type=int, default=100_000)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=90)
    p.add_argument("--h-init", type=float, default=1.0)
    p.add_argument("--target-accept", type=float, default=0.574)


def _chain_cfg(args) -> ChainConfig:
    return ChainConfig(
        n_iter=args.n_iter, burn_in=args.burn_in, thin=args.thin, h_init=args.h_init, target_accept=args.target_accept
    )


def _load_inputs(args):
    sc = load_scenario(args.scenario)
    counts = CellCounts(sc.grid, read_grid_csv(args.counts, dtype=np.int64))
    return sc, counts


def cmd_fit_gmrf(args) -> int:
    grid = GridSpec(args.M, args.ext_factor)
    target = cov_base(CovarianceModel(args.kind, args.sigma, args.phi), grid)
    fcfg = FitConfig(weight_a=args.weight_a, optimizer=args.optimizer)
    out = []
    for nb in args.nbhd:
        fr = fit(target, nb, fcfg)
        d = fr.to_dict()
        d["expected_mse"] = expected_approximation_mse(target, fr.theta_opt)
        if args.reps > 0:
            rng = np.random.default_rng(np.random.SeedSequence([args.seed, nb]))
            d["mse"], d["bias"] = approximation_mse(target, fr.theta_opt, args.reps, rng)
        out.append(d)
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    truth, data = simulate_scenario(sc, np.random.default_rng(seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_grid_csv(out / "truth.csv", truth.window)
    io.write_grid_csv(out / "counts.csv", data.counts)
    io.write_pgm(out / "truth.pgm", truth.window)
    log.info("simulated %d events", data.total)
    return EXIT_OK


def cmd_mala(args) -> int:
    sc, data = _load_inputs(args)
    rng = np.random.default_rng(args.seed)
    res = run_chain(data, sc, sc.base(), _chain_cfg(args), rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_quantiles(out / "quantiles_MALA.csv", quantiles(res))
    io.write_traces(out / "traces_MALA.csv", res)
    io.write_grid_csv(out / "lag1_MALA.csv", res.lag1)
    io.write_grid_csv(out / "estimate_MALA.csv", res.posterior_mean)
    io.write_pgm(out / "lag1_MALA.pgm", res.lag1, -1.0, 1.0)
    summary = {"final_h": res.final_h, "tail_acceptance": res.tail_acceptance(), "n_accepted": res.n_accepted}
    (out / "summary_MALA.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_gauss_approx(args) -> int:
    sc, data = _load_inputs(args)
    fr = fit(sc.base(), args.nbhd, FitConfig())
    res = gaussian_approximation(data, sc, precision_base(fr.theta_opt, sc.grid), GaussianApproxConfig())
    label = f"GAUSS_APPROX_N{args.nbhd}"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_quantiles(out / f"quantiles_{label}.csv", gaussian_quantiles(res))
    io.write_grid_csv(out / f"estimate_{label}.csv", res.mode_window)
    io.write_grid_csv(out / f"sd_{label}.csv", res.marginal_sd)
    summary = {"fit": fr.to_dict(), "newton_iters": res.newton_iters, "converged": res.converged}
    (out / f"summary_{label}.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if res.converged else EXIT_PARTIAL


def cmd_study(args) -> int:
    overrides = {"seed": args.seed}
    if args.out:
        overrides["output_dir"] = args.out
    cfg = StudyConfig.from_json(args.config, **overrides)
    if args.jobs:
        cfg.parallelism = args.jobs
    report = run_study(cfg)
    if report.n_failed:
        log.error("%d of %d scenarios failed", report.n_failed, len(report.scenarios))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_table1(args) -> int:
    rows = run_table1(args.grids, args.phis, args.nbhd, args.reps, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["ext_grid", "phi", "nbhd", "mse", "expected_mse", "bias", "seconds", "U", "method", "converged"]
    io.write_table(out / "table1.csv", header, [[r[k] for k in header] for r in rows])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgcpgrid", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit-gmrf", help="fit a GMRF precision to an isotropic covariance")
    s.add_argument("--M", type=int, default=64)
    s.add_argument("--ext-factor", type=int, default=2)
    s.add_argument("--kind", default="exponential")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--phi", type=float, required=True)
    s.add_argument("--nbhd", type=_ints, default=[1, 2])
    s.add_argument("--weight-a", type=float, default=1.0)
    s.add_argument("--optimizer", choices=["quasi-newton", "simplex"], default="quasi-newton")
    s.add_argument("--reps", type=int, default=0, help="Monte-Carlo replicates for the simulation MSE")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit_gmrf)

    s = sub.add_parser("simulate", help="simulate truth and cell counts for a scenario JSON")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("mala", help="run the MALA sampler on observed counts")
    s.add_argument("--scenario", required=True)
    s.add_argument("--counts", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    _add_chain_args(s)
    s.set_defaults(func=cmd_mala)

    s = sub.add_parser("gauss-approx", help="Gaussian approximation under a fitted GMRF prior")
    s.add_argument("--scenario", required=True)
    s.add_argument("--counts", required=True)
    s.add_argument("--nbhd", type=int, default=2)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gauss_approx)

    s = sub.add_parser("study", help="run a simulation study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("table1", help="GMRF approximation quality sweep")
    s.add_argument("--grids", type=_ints, default=[128, 256])
    s.add_argument("--phis", type=_floats, default=[0.025, 0.05, 0.1, 0.15, 0.2])
    s.add_argument("--nbhd", type=_ints, default=[1, 2, 3])
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_table1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NeedLargerExtension, FileNotFoundError, KeyError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
