"""RIS vector optimization: successive convex restriction plus baselines.

`optimize_sco` runs the minorize-maximize loop: expand the weighted sum
rate around the current lift, maximize the concave surrogate over the
relaxed PSD set, move the expansion point, and finally recover a unit-ball
RIS vector by Gaussian randomization of the last lift.  Because every
surrogate touches the true objective at its expansion point, the relaxed
objective trace is nondecreasing.

`optimize_ao` is a grid-based coordinate ascent directly on the RIS
phases and `optimize_ro` draws one uniformly random phase vector; both
serve as reference points for the convex pipeline.

All SINR expressions are invariant when channels are scaled by 1/s and
noise plus error covariances by 1/s^2, so the inputs are normalized to
unit average channel energy before any conic solve; raw link gains sit
around 1e-10 and would otherwise strain the interior-point backend.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from riswsr.channel import complex_normal
from riswsr.conic import ConicSolveError, SdrSolver
from riswsr.estimation import EstimateSet
from riswsr.fblr import FblrParams, lifted_wsr, sinr_mrc, wsr, wsr_batch
from riswsr.surrogate import DegenerateExpansionError, expand_objective

__all__ = [
    "ScoSettings",
    "AoSettings",
    "OptimizeOutcome",
    "equal_weights",
    "fair_weights",
    "lift",
    "gaussian_randomize",
    "optimize_sco",
    "optimize_ao",
    "optimize_ro",
    "optimize",
    "METHODS",
]

METHODS = ("sco", "ao", "ro")


@dataclass(frozen=True)
class ScoSettings:
    """Knobs of the successive convex loop."""

    max_iters: int = 50
    rel_tol: float = 1e-4
    randomization_samples: int = 200
    init_mode: str = "all_ones"
    restart_on_failure: bool = True
    solver: str = "CLARABEL"
    fallback: str = "SCS"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0.0:
            raise ValueError("rel_tol must be positive")
        if self.randomization_samples < 1:
            raise ValueError("randomization_samples must be >= 1")
        if self.init_mode not in ("all_ones", "random"):
            raise ValueError("init_mode must be 'all_ones' or 'random'")


@dataclass(frozen=True)
class AoSettings:
    """Knobs of the coordinate-ascent baseline."""

    phase_grid: int = 64
    max_sweeps: int = 20
    rel_tol: float = 1e-8


@dataclass
class OptimizeOutcome:
    """Result of one RIS optimization run."""

    method: str
    psi: np.ndarray
    wsr_estimate: float
    objective_trace: np.ndarray
    solve_times: np.ndarray
    wall_time: float
    iterations: int
    converged: bool
    Phi: np.ndarray = None


def equal_weights(num_sensors: int) -> np.ndarray:
    return np.ones(num_sensors)


def fair_weights(estimates: EstimateSet) -> np.ndarray:
    """Weights inversely proportional to each sensor's SINR under a neutral RIS.

    The neutral point is the all-ones reflection vector.  Weights are
    normalized to sum to the sensor count so equal and fair policies give
    comparable objective magnitudes.
    """
    psi = np.ones(estimates.num_ris, dtype=complex)
    rho = sinr_mrc(psi, estimates)
    floor = 1e-12 * max(float(rho.max()), 1.0)
    inv = 1.0 / np.maximum(rho, floor)
    return inv * (len(inv) / float(inv.sum()))


def lift(psi: np.ndarray) -> np.ndarray:
    """Rank-one lift psi psi^H."""
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def _normalized(estimates: EstimateSet) -> EstimateSet:
    energy = float(np.mean([np.linalg.norm(e.matrix) ** 2 for e in estimates.estimates]))
    if energy <= 0.0:
        return estimates
    return estimates.scaled(math.sqrt(energy))


def gaussian_randomize(Phi, estimates, params, weights, rng, samples):
    """Best unit-ball RIS vector from Gaussian draws of the lift.

    Draws CN(0, Phi) vectors through an eigenvalue factor, adds the scaled
    principal eigenvector as a deterministic candidate, projects every
    entry onto the unit disc, and keeps the argmax of the clamped WSR.
    """
    sym = 0.5 * (Phi + Phi.conj().T)
    evals, evecs = np.linalg.eigh(sym)
    evals = np.clip(evals, 0.0, None)
    factor = evecs * np.sqrt(evals)
    draws = (factor @ complex_normal(rng, (len(evals), samples))).T
    principal = evecs[:, -1] * math.sqrt(evals[-1])
    cand = np.vstack([principal[None, :], draws])
    cand = cand / np.maximum(1.0, np.abs(cand))
    scores = wsr_batch(cand, estimates, params, weights, clamp=True)
    return cand[int(np.argmax(scores))]


def optimize_sco(
    estimates: EstimateSet,
    params: FblrParams,
    weights,
    settings: ScoSettings = None,
    rng: np.random.Generator = None,
    solver: SdrSolver = None,
) -> OptimizeOutcome:
    settings = settings or ScoSettings()
    rng = rng if rng is not None else np.random.default_rng()
    solver = solver or SdrSolver(solver=settings.solver, fallback=settings.fallback)
    weights = np.asarray(weights, dtype=float)
    sest = _normalized(estimates)
    start = time.perf_counter()

    if settings.init_mode == "random":
        psi0 = np.exp(2j * np.pi * rng.uniform(size=estimates.num_ris))
    else:
        psi0 = np.ones(estimates.num_ris, dtype=complex)
    last_error = None
    for attempt in range(2):
        try:
            Phi, trace, solve_times, converged = _sco_loop(
                sest, params, weights, psi0, settings, solver
            )
            break
        except (DegenerateExpansionError, ConicSolveError) as exc:
            last_error = exc
            if not settings.restart_on_failure or attempt == 1:
                raise
            psi0 = np.exp(2j * np.pi * rng.uniform(size=estimates.num_ris))
    else:  # pragma: no cover - loop always breaks or raises
        raise last_error

    psi = gaussian_randomize(
        Phi, sest, params, weights, rng, settings.randomization_samples
    )
    score = wsr(psi, estimates, params, weights, clamp=True)
    return OptimizeOutcome(
        method="sco",
        psi=psi,
        wsr_estimate=score,
        objective_trace=np.asarray(trace),
        solve_times=np.asarray(solve_times),
        wall_time=time.perf_counter() - start,
        iterations=len(solve_times),
        converged=converged,
        Phi=Phi,
    )


def _sco_loop(sest, params, weights, psi0, settings, solver):
    Phi = lift(psi0)
    trace = [lifted_wsr(Phi, sest, params, weights, clamp=False)]
    solve_times = []
    converged = False
    for _ in range(settings.max_iters):
        try:
            bundle = expand_objective(sest, params, weights, Phi)
            result = solver.solve(bundle)
        except (DegenerateExpansionError, ConicSolveError):
            if not solve_times:
                raise
            # The iterate has typically pushed a weak sensor onto the
            # boundary; the subproblem degrades there while the objective
            # has already flattened.  Keep the best iterate found.
            break
        obj = lifted_wsr(result.Phi, sest, params, weights, clamp=False)
        if obj < trace[-1]:
            # an inaccurate solve can hand back a slightly worse iterate;
            # accepting it would break the ascent property, so stop here
            break
        Phi = result.Phi
        trace.append(obj)
        solve_times.append(result.solve_time)
        if abs(trace[-1] - trace[-2]) <= settings.rel_tol * max(1.0, abs(trace[-1])):
            converged = True
            break
    return Phi, trace, solve_times, converged


def optimize_ao(
    estimates: EstimateSet,
    params: FblrParams,
    weights,
    settings: AoSettings = None,
    rng: np.random.Generator = None,
) -> OptimizeOutcome:
    """Cyclic per-element phase search on a uniform grid at full amplitude.

    The grid contains phase zero and the starting vector is all ones, so
    the kept value at every element update is at least the current one and
    the objective trace is nondecreasing.
    """
    settings = settings or AoSettings()
    weights = np.asarray(weights, dtype=float)
    L = estimates.num_ris
    start = time.perf_counter()
    phases = np.exp(2j * np.pi * np.arange(settings.phase_grid) / settings.phase_grid)

    psi = np.ones(L, dtype=complex)
    best = wsr(psi, estimates, params, weights, clamp=True)
    trace = [best]
    sweep_times = []
    converged = False
    for _ in range(settings.max_sweeps):
        t0 = time.perf_counter()
        before = best
        for l in range(L):
            cand = np.tile(psi, (settings.phase_grid, 1))
            cand[:, l] = phases
            scores = wsr_batch(cand, estimates, params, weights, clamp=True)
            g = int(np.argmax(scores))
            if scores[g] > best:
                best = float(scores[g])
                psi = cand[g]
        sweep_times.append(time.perf_counter() - t0)
        trace.append(best)
        if best - before <= settings.rel_tol * max(1.0, abs(best)):
            converged = True
            break
    return OptimizeOutcome(
        method="ao",
        psi=psi,
        wsr_estimate=best,
        objective_trace=np.asarray(trace),
        solve_times=np.asarray(sweep_times),
        wall_time=time.perf_counter() - start,
        iterations=len(sweep_times),
        converged=converged,
    )


def optimize_ro(
    estimates: EstimateSet,
    params: FblrParams,
    weights,
    rng: np.random.Generator,
) -> OptimizeOutcome:
    """Single random full-amplitude phase draw, the weakest baseline."""
    start = time.perf_counter()
    psi = np.exp(2j * np.pi * rng.uniform(size=estimates.num_ris))
    score = wsr(psi, estimates, params, weights, clamp=True)
    return OptimizeOutcome(
        method="ro",
        psi=psi,
        wsr_estimate=score,
        objective_trace=np.asarray([score]),
        solve_times=np.asarray([]),
        wall_time=time.perf_counter() - start,
        iterations=1,
        converged=True,
    )


def optimize(
    method: str,
    estimates: EstimateSet,
    params: FblrParams,
    weights,
    rng: np.random.Generator,
    sco_settings: ScoSettings = None,
    ao_settings: AoSettings = None,
    solver: SdrSolver = None,
) -> OptimizeOutcome:
    if method == "sco":
        return optimize_sco(estimates, params, weights, sco_settings, rng, solver)
    if method == "ao":
        return optimize_ao(estimates, params, weights, ao_settings, rng)
    if method == "ro":
        return optimize_ro(estimates, params, weights, rng)
    raise ValueError(f"unknown method {method!r}")
