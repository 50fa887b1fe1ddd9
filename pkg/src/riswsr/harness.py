"""Monte-Carlo experiment driver, sweep runner, reporting, and CLI.

One experiment point fixes a scenario; each realization draws channels,
observes pilots, estimates the links, picks sensor weights, runs the
requested RIS optimizer, and reports the weighted sum rate twice: on the
estimated channels (the optimization metric) and on the true channels
through the genie evaluation (the system metric).  Sweeps repeat that over
a list of antenna counts or RIS sizes and emit CSV artifacts plus a
plain-text summary.

Determinism: all randomness flows from the scenario seed through named
substreams keyed by realization and purpose, so results are identical
whatever the worker count or evaluation order.  Timing columns sit at the
end of `results.csv`; everything before them is bit-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from riswsr.conic import ConicSolveError, SdrSolver
from riswsr.channel import build_geometry, draw_channels
from riswsr.estimation import ChannelEstimate, EstimateSet, build_prior, estimate_channels, observe_pilots
from riswsr.fblr import FblrParams, wsr, wsr_true
from riswsr.optimizer import (
    AoSettings,
    METHODS,
    ScoSettings,
    equal_weights,
    fair_weights,
    optimize,
)
from riswsr.scenario import (
    STREAM_METHOD,
    ConfigError,
    ScenarioConfig,
    derive_large_scale,
    link_distances,
    load_config,
    substream,
)

__all__ = [
    "RunSettings",
    "SweepSpec",
    "RealizationOutcome",
    "SweepResult",
    "prepare_point",
    "run_realization",
    "run_monte_carlo",
    "run_sweep",
    "convergence_trace",
    "timing_report",
    "write_outputs",
    "main",
]

RESULT_COLUMNS = (
    "method",
    "variable",
    "value",
    "seed",
    "realization",
    "weight_policy",
    "non_robust",
    "reuse_psi",
    "wsr_est",
    "wsr_true",
    "iterations",
    "converged",
    "trace",
    "wall_ms_per_iter",
)


@dataclass(frozen=True)
class RunSettings:
    """Cross-cutting execution options for a harness invocation."""

    non_robust: bool = False
    reuse_psi: bool = False
    workers: int = 0
    sco: ScoSettings = field(default_factory=ScoSettings)
    ao: AoSettings = field(default_factory=AoSettings)


@dataclass(frozen=True)
class SweepSpec:
    """Full factorial sweep description."""

    variable: str
    values: tuple
    methods: tuple
    weight_policy: str
    realizations: int
    base: ScenarioConfig

    def validate(self) -> "SweepSpec":
        if self.variable not in ("K", "L"):
            raise ConfigError("sweep variable must be K or L")
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        vals = tuple(int(v) for v in self.values)
        if any(v < 1 for v in vals):
            raise ConfigError("sweep values must be positive")
        if list(vals) != sorted(set(vals)):
            raise ConfigError("sweep values must be strictly increasing")
        if self.variable == "L" and any(math.isqrt(v) ** 2 != v for v in vals):
            raise ConfigError("L sweep values must be perfect squares")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}")
        if self.weight_policy not in ("equal", "fair"):
            raise ConfigError("weight_policy must be 'equal' or 'fair'")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        return self


@dataclass
class RealizationOutcome:
    """Everything recorded about one (method, realization) run."""

    method: str
    realization: int
    wsr_est: float = math.nan
    wsr_true: float = math.nan
    iterations: int = 0
    converged: bool = False
    objective_trace: np.ndarray = None
    solve_times: np.ndarray = None
    wall_time: float = 0.0
    psi: np.ndarray = None
    optimized: bool = True
    error: str = None


@dataclass
class SweepResult:
    rows: list
    traces: dict       # run id -> (iteration, objective, tolerance) array
    failures: list     # (run id, error message)
    spec: SweepSpec
    settings: RunSettings


@dataclass(frozen=True)
class PointContext:
    """Per-sweep-point immutable precomputation."""

    cfg: ScenarioConfig
    geom: object
    large_scale: object
    prior: object
    params: FblrParams


def prepare_point(cfg: ScenarioConfig) -> PointContext:
    geom = build_geometry(cfg)
    d_ris_cn, d_sensor_ris = link_distances(cfg)
    ls = derive_large_scale(cfg, d_ris_cn, d_sensor_ris)
    prior = build_prior(cfg, ls, geom)
    return PointContext(
        cfg=cfg,
        geom=geom,
        large_scale=ls,
        prior=prior,
        params=FblrParams.from_config(cfg),
    )


def _strip_uncertainty(estimates: EstimateSet) -> EstimateSet:
    """Copy with estimation-error statistics zeroed (non-robust ablation)."""
    zero = np.zeros_like(estimates.interference_cov)
    ests = tuple(
        ChannelEstimate(matrix=e.matrix, error_col_cov=zero) for e in estimates.estimates
    )
    return EstimateSet(
        estimates=ests,
        interference_cov=zero,
        noise_power=estimates.noise_power,
        tx_power_w=estimates.tx_power_w,
    )


def _weights_for(policy: str, estimates: EstimateSet) -> np.ndarray:
    if policy == "fair":
        return fair_weights(estimates)
    return equal_weights(estimates.num_sensors)


def run_realization(
    ctx: PointContext,
    method: str,
    realization: int,
    settings: RunSettings,
    weight_policy: str,
    solver: SdrSolver = None,
    psi_override: np.ndarray = None,
) -> RealizationOutcome:
    """One full pipeline pass; exceptions are captured, not raised."""
    cfg = ctx.cfg
    out = RealizationOutcome(method=method, realization=realization)
    t0 = time.perf_counter()
    try:
        channels = draw_channels(cfg, ctx.large_scale, ctx.geom, realization)
        observations = observe_pilots(cfg, channels, realization)
        estimates = estimate_channels(cfg, ctx.prior, observations)
        weights = _weights_for(weight_policy, estimates)

        if psi_override is not None:
            psi = np.asarray(psi_override, dtype=complex)
            out.optimized = False
            out.converged = True
            out.objective_trace = None
            out.solve_times = np.asarray([])
        else:
            opt_est = _strip_uncertainty(estimates) if settings.non_robust else estimates
            rng = substream(cfg.seed, STREAM_METHOD, realization, METHODS.index(method))
            res = optimize(
                method,
                opt_est,
                ctx.params,
                weights,
                rng,
                sco_settings=settings.sco,
                ao_settings=settings.ao,
                solver=solver,
            )
            psi = res.psi
            out.iterations = res.iterations
            out.converged = res.converged
            out.objective_trace = res.objective_trace
            out.solve_times = res.solve_times

        out.psi = psi
        out.wsr_est = wsr(psi, estimates, ctx.params, weights, clamp=True)
        out.wsr_true = wsr_true(psi, estimates, channels.effective, ctx.params, weights)
        if not (np.isfinite(out.wsr_est) and np.isfinite(out.wsr_true)):
            raise RuntimeError("non-finite weighted sum rate")
        if out.wsr_est < 0.0 or out.wsr_true < 0.0:
            raise RuntimeError("negative weighted sum rate")
    except Exception as exc:  # noqa: BLE001 - failures must be recorded, not fatal
        out.error = f"{type(exc).__name__}: {exc}"
    out.wall_time = time.perf_counter() - t0
    return out


def _mc_worker(args):
    cfg, method, realization, settings, weight_policy, psi_override = args
    ctx = prepare_point(cfg)
    return run_realization(
        ctx, method, realization, settings, weight_policy, psi_override=psi_override
    )


def run_monte_carlo(
    cfg: ScenarioConfig,
    method: str,
    settings: RunSettings = None,
    realizations: int = None,
    weight_policy: str = None,
    solver: SdrSolver = None,
) -> list:
    """Per-realization outcomes for one method at one scenario point."""
    settings = settings or RunSettings()
    realizations = realizations if realizations is not None else cfg.mc_realizations
    weight_policy = weight_policy or cfg.weight_policy
    ctx = prepare_point(cfg)
    solver = solver or SdrSolver(
        solver=settings.sco.solver, fallback=settings.sco.fallback
    )

    psi_shared = None
    outcomes = []
    first = 0
    if settings.reuse_psi:
        head = run_realization(ctx, method, 0, settings, weight_policy, solver=solver)
        outcomes.append(head)
        if head.error is not None:
            return outcomes
        psi_shared = head.psi
        first = 1

    rest = range(first, realizations)
    if settings.workers > 1:
        jobs = [
            (cfg, method, r, settings, weight_policy, psi_shared) for r in rest
        ]
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            outcomes.extend(pool.map(_mc_worker, jobs))
    else:
        for r in rest:
            outcomes.append(
                run_realization(
                    ctx, method, r, settings, weight_policy,
                    solver=solver, psi_override=psi_shared,
                )
            )
    return outcomes


def convergence_trace(outcome: RealizationOutcome) -> np.ndarray:
    """Relative distance of each iterate's objective to the final one."""
    trace = np.asarray(outcome.objective_trace, dtype=float)
    final = trace[-1]
    denom = abs(final) if final != 0.0 else 1.0
    return np.abs(trace - final) / denom


def run_sweep(spec: SweepSpec, settings: RunSettings = None) -> SweepResult:
    spec = spec.validate()
    settings = settings or RunSettings()
    rows = []
    traces = {}
    failures = []
    for value in spec.values:
        if spec.variable == "K":
            cfg = replace(spec.base, num_antennas=int(value)).validate()
        else:
            cfg = replace(spec.base, num_ris=int(value)).validate()
        for method in spec.methods:
            outcomes = run_monte_carlo(
                cfg,
                method,
                settings=settings,
                realizations=spec.realizations,
                weight_policy=spec.weight_policy,
            )
            for out in outcomes:
                run_id = f"{method}_{spec.variable}{value}_r{out.realization}"
                if out.error is not None:
                    failures.append((run_id, out.error))
                    continue
                trace_name = ""
                if out.optimized and out.objective_trace is not None:
                    trace_name = f"trace_{run_id}.csv"
                    tol = convergence_trace(out)
                    traces[run_id] = np.column_stack(
                        [np.arange(len(tol)), out.objective_trace, tol]
                    )
                per_iter_ms = _per_iteration_ms(out)
                rows.append(
                    {
                        "method": method,
                        "variable": spec.variable,
                        "value": value,
                        "seed": cfg.seed,
                        "realization": out.realization,
                        "weight_policy": spec.weight_policy,
                        "non_robust": int(settings.non_robust),
                        "reuse_psi": int(settings.reuse_psi),
                        "wsr_est": out.wsr_est,
                        "wsr_true": out.wsr_true,
                        "iterations": out.iterations,
                        "converged": int(out.converged),
                        "trace": trace_name,
                        "wall_ms_per_iter": per_iter_ms,
                    }
                )
    return SweepResult(rows=rows, traces=traces, failures=failures, spec=spec, settings=settings)


def _per_iteration_ms(out: RealizationOutcome) -> float:
    """Per-iteration cost: subproblem solve for sco, full sweep for ao."""
    times = np.asarray(out.solve_times, dtype=float)
    if times.size:
        return float(np.mean(times) * 1e3)
    return float(out.wall_time * 1e3 / max(out.iterations, 1))


def timing_report(result: SweepResult) -> list:
    """Mean per-iteration milliseconds per (method, value), plus a growth fit."""
    table = []
    for value in result.spec.values:
        for method in result.spec.methods:
            ms = [
                r["wall_ms_per_iter"]
                for r in result.rows
                if r["method"] == method and r["value"] == value and r["iterations"] > 0
            ]
            walls = [
                r["wall_ms_per_iter"] * max(r["iterations"], 1)
                for r in result.rows
                if r["method"] == method and r["value"] == value
            ]
            table.append(
                {
                    "method": method,
                    "variable": result.spec.variable,
                    "value": value,
                    "runs": len(ms),
                    "mean_ms_per_iteration": float(np.mean(ms)) if ms else math.nan,
                    "mean_wall_ms": float(np.mean(walls)) if walls else math.nan,
                }
            )
    return table


def loglog_slope(values, times_ms) -> float:
    """Least-squares slope of log(time) against log(value)."""
    v = np.asarray(values, dtype=float)
    t = np.asarray(times_ms, dtype=float)
    keep = (v > 0) & (t > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(v[keep]), np.log(t[keep]), 1)[0])


# -- output writing --------------------------------------------------------


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outputs(result: SweepResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in result.rows:
            writer.writerow([_fmt_cell(row[c]) for c in RESULT_COLUMNS])

    for run_id, data in result.traces.items():
        with open(out / f"trace_{run_id}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective", "tolerance"])
            for it, obj, tol in data:
                writer.writerow([int(it), repr(float(obj)), repr(float(tol))])

    timing = timing_report(result)
    with open(out / "timing.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "variable", "value", "runs", "mean_ms_per_iteration", "mean_wall_ms"]
        )
        for row in timing:
            writer.writerow([_fmt_cell(row[k]) for k in
                             ("method", "variable", "value", "runs",
                              "mean_ms_per_iteration", "mean_wall_ms")])

    summary = render_summary(result, timing)
    (out / "summary.txt").write_text(summary)
    print(summary)


def _mean_ci(xs) -> tuple:
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return math.nan, math.nan
    if xs.size == 1:
        return float(xs[0]), 0.0
    return float(xs.mean()), float(1.96 * xs.std(ddof=1) / math.sqrt(xs.size))


def render_summary(result: SweepResult, timing: list) -> str:
    spec = result.spec
    lines = [
        f"sweep {spec.variable} over {list(spec.values)} | methods {list(spec.methods)} "
        f"| weights {spec.weight_policy} | seed {spec.base.seed} "
        f"| realizations {spec.realizations}"
        + (" | non-robust" if result.settings.non_robust else "")
        + (" | reuse-psi" if result.settings.reuse_psi else ""),
        "",
        f"{'method':>6} {'value':>6} {'wsr_est':>10} {'ci95':>8} "
        f"{'wsr_true':>10} {'ci95':>8} {'iters':>6} {'ms/iter':>10}",
    ]
    for t in timing:
        sel = [
            r for r in result.rows
            if r["method"] == t["method"] and r["value"] == t["value"]
        ]
        est, est_ci = _mean_ci([r["wsr_est"] for r in sel])
        tru, tru_ci = _mean_ci([r["wsr_true"] for r in sel])
        iters = float(np.mean([r["iterations"] for r in sel])) if sel else math.nan
        lines.append(
            f"{t['method']:>6} {t['value']:>6} {est:>10.4f} {est_ci:>8.4f} "
            f"{tru:>10.4f} {tru_ci:>8.4f} {iters:>6.1f} "
            f"{t['mean_ms_per_iteration']:>10.2f}"
        )
    if spec.variable == "L" and len(spec.values) >= 2:
        for method in spec.methods:
            pts = [t for t in timing if t["method"] == method]
            slope = loglog_slope(
                [t["value"] for t in pts], [t["mean_ms_per_iteration"] for t in pts]
            )
            lines.append(f"log-log ms/iter slope in L ({method}): {slope:.2f}")
    if result.failures:
        lines.append("")
        lines.append(f"failures ({len(result.failures)}):")
        for run_id, msg in result.failures:
            lines.append(f"  {run_id}: {msg}")
    else:
        lines.append("")
        lines.append("failures: none")
    return "\n".join(lines) + "\n"


# -- CLI --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riswsr",
        description="RIS reflection design for short-packet uplinks: Monte-Carlo sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a Monte-Carlo sweep and write CSV outputs")
    run.add_argument("--config", required=True, help="scenario file (key = value lines)")
    run.add_argument("--method", required=True, choices=METHODS, action="append",
                     help="optimizer to run; repeat the flag to compare several")
    run.add_argument("--sweep", choices=("K", "L"), help="swept variable; default: none")
    run.add_argument("--values", help="comma-separated sweep values, e.g. 9,16,25")
    run.add_argument("--weights", choices=("equal", "fair"), help="weight policy override")
    run.add_argument("--seed", type=int, help="seed override")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--non-robust", action="store_true",
                     help="ignore estimation-error statistics during optimization")
    run.add_argument("--reuse-psi", action="store_true",
                     help="optimize on realization 0 only and reuse the RIS vector")
    run.add_argument("--workers", type=int, default=0, help="parallel worker processes")
    run.add_argument("--realizations", type=int,
                     help="override the config's Monte-Carlo realization count")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=int(args.seed)).validate()
        if args.sweep is not None:
            if not args.values:
                raise ConfigError("--values is required with --sweep")
            values = tuple(int(v) for v in args.values.split(","))
            variable = args.sweep
        else:
            if args.values:
                raise ConfigError("--values needs --sweep")
            variable = "L"
            values = (cfg.num_ris,)
        spec = SweepSpec(
            variable=variable,
            values=values,
            methods=tuple(dict.fromkeys(args.method)),
            weight_policy=args.weights or cfg.weight_policy,
            realizations=args.realizations or cfg.mc_realizations,
            base=cfg,
        ).validate()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    settings = RunSettings(
        non_robust=args.non_robust,
        reuse_psi=args.reuse_psi,
        workers=args.workers,
    )
    try:
        result = run_sweep(spec, settings)
    except ConicSolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    write_outputs(result, args.out)
    if result.failures:
        print(f"error: {len(result.failures)} realization(s) failed", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
