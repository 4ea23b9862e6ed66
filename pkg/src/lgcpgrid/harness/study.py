"""Simulation-study orchestration: simulate, fit, infer, score and write artefacts."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..covariance import CovarianceModel, cov_base
from ..gaussian_approx import GaussianApproxConfig, gaussian_approximation, gaussian_quantiles
from ..gmrf_fit import FitConfig, approximation_mse, expected_approximation_mse, fit, precision_base
from ..grid_fft import GridSpec
from ..lgcp_model import Scenario, save_scenario, scenario_from_dict, simulate_scenario
from ..mala import Q_LADDER, ChainConfig, quantiles, run_chain
from . import io
from .metrics import field_mse, predictive_mse2
from .scenarios import DEFAULT_MU, generate_scenarios

log = logging.getLogger(__name__)

METHODS = ("MALA", "GAUSS_APPROX")


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    scenarios: list
    seed: int
    output_dir: Path
    methods: list = field(default_factory=lambda: list(METHODS))
    nbhd: list = field(default_factory=lambda: [2])
    chain: ChainConfig = field(default_factory=ChainConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    gauss: GaussianApproxConfig = field(default_factory=GaussianApproxConfig)
    parallelism: int = 1
    write_samples: bool = False

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("study needs at least one scenario")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {list(METHODS)}")
        if any(n not in (1, 2, 3) for n in self.nbhd):
            raise ConfigError(f"neighbourhood orders must be 1, 2 or 3, got {self.nbhd}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        self.output_dir = Path(self.output_dir)

    @classmethod
    def from_dict(cls, doc: dict, seed: int | None = None, output_dir=None) -> "StudyConfig":
        """Build from the JSON document described in the README.

        Scenarios come either from an explicit ``scenarios`` list or from a
        ``design`` block selecting numbered scenarios of the 18-scenario grid.
        """
        try:
            seed = int(doc["seed"] if seed is None else seed)
            out = output_dir if output_dir is not None else doc.get("output_dir", "study_out")
            if "scenarios" in doc:
                scenarios = [scenario_from_dict(d) for d in doc["scenarios"]]
                for k, sc in enumerate(scenarios, start=1):
                    if not sc.name:
                        object.__setattr__(sc, "name", f"scenario_{k:02d}")
            else:
                design = doc.get("design", {})
                scenarios = generate_scenarios(
                    seed,
                    numbers=design.get("numbers", list(range(1, 19))),
                    M=int(design.get("M", 64)),
                    ext_factor=int(design.get("ext_factor", 2)),
                    mu=float(design.get("mu", DEFAULT_MU)),
                    n_points=int(design.get("n_points", 200)),
                    bandwidths=tuple(design.get("bandwidths", (0.04, 0.1))),
                )
            return cls(
                scenarios=scenarios,
                seed=seed,
                output_dir=Path(out),
                methods=list(doc.get("methods", METHODS)),
                nbhd=[int(n) for n in doc.get("nbhd", [2])],
                chain=ChainConfig(**doc.get("chain", {})),
                fit=FitConfig(**doc.get("fit", {})),
                gauss=GaussianApproxConfig(**doc.get("gauss", {})),
                parallelism=int(doc.get("parallelism", 1)),
                write_samples=bool(doc.get("write_samples", False)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid study configuration: {exc}") from exc

    @classmethod
    def from_json(cls, path, **overrides) -> "StudyConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read study config {path}: {exc}") from exc
        return cls.from_dict(doc, **overrides)


@dataclass
class MetricsReport:
    config: dict
    scenarios: list
    runtimes: list  # (scenario, method, seconds)

    @property
    def n_failed(self) -> int:
        return sum(1 for s in self.scenarios if s["status"] != "ok")

    def method_labels(self) -> list:
        labels = []
        for s in self.scenarios:
            for m in s.get("methods", {}):
                if m not in labels:
                    labels.append(m)
        return labels

    def calibration(self) -> dict:
        """Mean estimated probability per ladder value, averaged over scenarios."""
        out = {}
        for m in self.method_labels():
            rows = [s["methods"][m]["qhat"] for s in self.scenarios if m in s.get("methods", {})]
            out[m] = {"q": list(Q_LADDER), "qhat_mean": np.mean(rows, axis=0).tolist()}
        return out

    def to_dict(self) -> dict:
        """Deterministic part of the report (wall-clock runtimes excluded)."""
        return {"config": self.config, "scenarios": self.scenarios, "calibration": self.calibration()}


def _method_metrics(truth, point_estimate, qs) -> dict:
    r = predictive_mse2(truth, qs)
    return {
        "field_mse": field_mse(truth, point_estimate),
        "mse2": r.mse2,
        "bias": r.bias,
        "qhat": r.qhat.tolist(),
    }


def _run_scenario(sc: Scenario, cfg: StudyConfig) -> tuple[dict, list]:
    grid = sc.grid
    number = sc.meta.get("number")
    entry = {
        "name": sc.name,
        "number": number,
        "sigma": sc.cov.sigma,
        "phi": sc.cov.phi,
        "kind": sc.cov.kind,
        "mu": sc.mu,
        "surface": sc.meta.get("surface"),
        "bandwidth": sc.meta.get("bandwidth"),
        "M": grid.M,
        "ext_factor": grid.ext_factor,
        "seed": str(sc.seed),
        "status": "ok",
        "methods": {},
    }
    runtimes = []
    outdir = cfg.output_dir / sc.name
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        save_scenario(outdir / "scenario.json", sc)
        base = sc.base()
        truth, data = simulate_scenario(sc, np.random.default_rng(sc.seed))
        entry["n_events"] = data.total
        io.write_grid_csv(outdir / "truth.csv", truth.window)
        io.write_grid_csv(outdir / "counts.csv", data.counts)
        io.write_pgm(outdir / "truth.pgm", truth.window)
        lo, hi = float(truth.window.min()), float(truth.window.max())

        if "MALA" in cfg.methods:
            t0 = time.perf_counter()
            rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 1]))
            out = run_chain(data, sc, base, cfg.chain, rng)
            qs = quantiles(out)
            runtimes.append((sc.name, "MALA", time.perf_counter() - t0))
            est = out.posterior_mean
            m = _method_metrics(truth, est, qs)
            m.update(
                final_h=out.final_h,
                tail_acceptance=out.tail_acceptance(0.1),
                acceptance_rate=out.n_accepted / cfg.chain.n_iter,
                mean_lag1=float(out.lag1.mean()),
                n_nonfinite=out.n_nonfinite,
            )
            entry["methods"]["MALA"] = m
            io.write_quantiles(outdir / "quantiles_MALA.csv", qs)
            io.write_traces(outdir / "traces_MALA.csv", out)
            io.write_grid_csv(outdir / "lag1_MALA.csv", out.lag1)
            io.write_grid_csv(outdir / "estimate_MALA.csv", est)
            io.write_pgm(outdir / "lag1_MALA.pgm", out.lag1, -1.0, 1.0)
            io.write_pgm(outdir / "estimate_MALA.pgm", est, lo, hi)
            if cfg.write_samples:
                np.save(outdir / "samples_MALA.npy", out.samples)

        if "GAUSS_APPROX" in cfg.methods:
            for nb in cfg.nbhd:
                label = f"GAUSS_APPROX_N{nb}"
                t0 = time.perf_counter()
                fr = fit(base, nb, cfg.fit)
                res = gaussian_approximation(data, sc, precision_base(fr.theta_opt, grid), cfg.gauss)
                qs = gaussian_quantiles(res)
                runtimes.append((sc.name, label, time.perf_counter() - t0))
                m = _method_metrics(truth, res.mode_window, qs)
                m.update(
                    fit=fr.to_dict(),
                    newton_iters=res.newton_iters,
                    newton_converged=res.converged,
                )
                entry["methods"][label] = m
                io.write_quantiles(outdir / f"quantiles_{label}.csv", qs)
                io.write_grid_csv(outdir / f"estimate_{label}.csv", res.mode_window)
                io.write_pgm(outdir / f"estimate_{label}.pgm", res.mode_window, lo, hi)
    except Exception as exc:  # noqa: BLE001 - one failed scenario must not stop the study
        log.exception("scenario %s failed", sc.name)
        entry["status"] = "failed"
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry, runtimes


def _config_summary(cfg: StudyConfig) -> dict:
    return {
        "seed": cfg.seed,
        "methods": list(cfg.methods),
        "nbhd": list(cfg.nbhd),
        "chain": asdict(cfg.chain),
        "fit": asdict(cfg.fit),
        "gauss": asdict(cfg.gauss),
        "n_scenarios": len(cfg.scenarios),
    }


def run_study(cfg: StudyConfig) -> MetricsReport:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.parallelism > 1 and len(cfg.scenarios) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as ex:
            results = list(ex.map(_run_scenario, cfg.scenarios, [cfg] * len(cfg.scenarios)))
    else:
        results = [_run_scenario(sc, cfg) for sc in cfg.scenarios]
    report = MetricsReport(
        config=_config_summary(cfg),
        scenarios=[r[0] for r in results],
        runtimes=[t for r in results for t in r[1]],
    )
    write_report(report, cfg.output_dir)
    return report


def write_report(report: MetricsReport, outdir: Path) -> None:
    outdir = Path(outdir)
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    labels = report.method_labels()
    ok = [s for s in report.scenarios if s["status"] == "ok"]

    io.write_table(
        outdir / "table2.csv",
        ["scenario", "sigma", "phi", "mala_last_h"] + [f"mse_{m}" for m in labels],
        [
            [s["name"], s["sigma"], s["phi"], s["methods"].get("MALA", {}).get("final_h", "")]
            + [s["methods"].get(m, {}).get("field_mse", "") for m in labels]
            for s in ok
        ],
    )
    others = [m for m in labels if m != "MALA"]
    rows = []
    for s in ok:
        ms = s["methods"]
        mala = ms.get("MALA", {}).get("mse2")
        row = [s["name"], mala if mala is not None else ""]
        for m in others:
            v = ms.get(m, {}).get("mse2")
            row += [v if v is not None else "", v / mala if (v is not None and mala) else ""]
        rows.append(row)
    io.write_table(
        outdir / "table3.csv",
        ["scenario", "mse2_MALA"] + [c for m in others for c in (f"mse2_{m}", f"rel_{m}")],
        rows,
    )
    for m in labels:
        io.write_table(
            outdir / f"calibration_{m}.csv",
            ["scenario", "q", "qhat"],
            [[s["name"], q, qh] for s in ok if m in s["methods"] for q, qh in zip(Q_LADDER, s["methods"][m]["qhat"])],
        )
    io.write_table(outdir / "timings.csv", ["scenario", "method", "seconds"], report.runtimes)


def run_table1(
    ext_grids=(128, 256),
    phis=(0.025, 0.05, 0.1, 0.15, 0.2),
    nbhds=(1, 2, 3),
    reps: int = 20,
    seed: int = 0,
    sigma: float = 1.0,
    fit_cfg: FitConfig | None = None,
) -> list[dict]:
    """GMRF approximation quality over grid sizes and ranges on the unit square."""
    rows = []
    for N in ext_grids:
        grid = GridSpec(N // 2, 2)
        for phi in phis:
            target = cov_base(CovarianceModel("exponential", sigma, phi), grid)
            for nb in nbhds:
                t0 = time.perf_counter()
                fr = fit(target, nb, fit_cfg)
                secs = time.perf_counter() - t0
                rng = np.random.default_rng(np.random.SeedSequence([seed, N, int(round(phi * 1e6)), nb]))
                mse, bias = approximation_mse(target, fr.theta_opt, reps, rng)
                rows.append(
                    {
                        "ext_grid": N,
                        "phi": phi,
                        "nbhd": nb,
                        "mse": mse,
                        "expected_mse": expected_approximation_mse(target, fr.theta_opt),
                        "bias": bias,
                        "seconds": secs,
                        "U": fr.U_final,
                        "method": fr.method,
                        "converged": fr.converged,
                        "theta": fr.theta_opt.theta.tolist(),
                    }
                )
    return rows
