"""End-to-end experiments: mixture-limit sweeps, extreme limits, and the worked example."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import cached_property
import json
import logging
import math
import os
from pathlib import Path

from ._csvio import write_csv
from .density import (EXAMPLE_WEIGHTS, check_weights, convex_combination,
                      from_weights, l1_distance, mirror)
from .errors import ConvergenceError, InfeasibleGateError, MetastableError
from .interval_map import (DEFAULT_DEPTH, DEFAULT_GATE_SLOPE, build_semi_markov_map,
                           hole_measures, mirror_double, open_gates, validate_conditions)
from .orbit import OrbitConfig, simulate_orbit
from .stochastic import DEFAULT_BETA, build_transition_matrix
from .transfer import POWER_MAX_ITERS, POWER_TOL, stationary_density, ulam_matrix

log = logging.getLogger(__name__)

SWEEP_CSV_HEADER = ("eps_scale", "eps_A", "eps_B", "mu_A_hole", "mu_B_hole", "lhr",
                    "alpha", "l1_to_limit", "engine", "residual")
DEFAULT_SCHEDULE = (0.05, 0.02, 0.01, 0.005)
EXTREME_SCHEDULE = (0.1, 0.05, 0.02)
EXAMPLE_SEED = 7
EXAMPLE_EPS = 0.02
_FIT_TOL = 1e-12


class MapFamily:
    """Everything derived from a target weight vector: ``M``, ``g``, ``T``, ``f_A``, ``f_B``.

    Parameters
    ----------
    v : array_like
        Cell masses of the one-component target density on ``[0, 1]``.
    beta : float or array_like
        Retention parameters.
    gate_slope : float
        Slope of the escape gates.
    """

    def __init__(self, v=EXAMPLE_WEIGHTS, beta=DEFAULT_BETA, gate_slope=DEFAULT_GATE_SLOPE):
        self.v = check_weights(v)
        self.beta = beta
        self.gate_slope = float(gate_slope)

    @cached_property
    def matrix(self):
        return build_transition_matrix(self.v, self.beta)

    @cached_property
    def g(self):
        return build_semi_markov_map(self.matrix)

    @cached_property
    def T(self):
        return mirror_double(self.g)

    @cached_property
    def f_B(self):
        return from_weights(self.v, (0.0, 1.0))

    @cached_property
    def f_A(self):
        return mirror(self.f_B)

    def system(self, eps_A, eps_B):
        return open_gates(self.T, eps_A, eps_B, self.gate_slope, transition=self.matrix)

    def limit(self, alpha):
        return convex_combination(self.f_A, self.f_B, alpha)


@dataclass(frozen=True)
class SweepRecord:
    eps_scale: float
    eps_A: float
    eps_B: float
    mu_A_hole: float
    mu_B_hole: float
    lhr: float
    alpha: float
    l1_to_limit: float
    engine: str
    residual: float
    converged: bool = True

    @property
    def lhr_infinite(self):
        return math.isinf(self.lhr)

    def csv_row(self):
        engine = self.engine if self.converged else f"{self.engine}:unconverged"
        return (self.eps_scale, self.eps_A, self.eps_B, self.mu_A_hole, self.mu_B_hole,
                self.lhr, self.alpha, self.l1_to_limit, engine, self.residual)


def alpha_from_lhr(lhr):
    return 1.0 if math.isinf(lhr) else lhr / (1.0 + lhr)


def gates_for_target_alpha(alpha, eps_scale, f_A, f_B):
    """Gate widths whose hole-mass ratio gives mixture weight ``alpha`` on ``f_A``.

    ``eps_A = eps_scale``; ``eps_B`` solves
    ``mu_B(1 - eps_B, 1] / mu_A[-1, -1 + eps_A) = alpha / (1 - alpha)`` inside
    the outermost cell of ``f_B``.

    Raises
    ------
    InfeasibleGateError
        If ``eps_B`` would exceed the outermost cell; carries the largest
        attainable ``alpha``.
    """
    alpha, eps_a = float(alpha), float(eps_scale)
    if not 0.0 < alpha < 1.0:
        raise MetastableError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    w_a, w_b = f_A.partition.width, f_B.partition.width
    if not 0.0 < eps_a <= w_a * (1 + _FIT_TOL):
        raise MetastableError(f"eps_scale = {eps_a} must lie in (0, {w_a}]")
    eps_a = min(eps_a, w_a)
    # both gates sit inside the outermost cells, where the densities are constant
    h_a, h_b = float(f_A.heights[0]), float(f_B.heights[-1])
    mu_a = eps_a * h_a
    if mu_a == 0.0 or h_b == 0.0:
        raise InfeasibleGateError("a component has zero density at its gate", float("nan"))
    eps_b = alpha / (1.0 - alpha) * eps_a * (h_a / h_b)
    if eps_b > w_b * (1 + _FIT_TOL):
        lhr_max = w_b * h_b / mu_a
        amax = lhr_max / (1.0 + lhr_max)
        raise InfeasibleGateError(
            f"alpha = {alpha} needs eps_B = {eps_b:.6g} > cell width {w_b:.6g}; "
            f"largest feasible alpha at eps_scale {eps_scale} is {amax:.6g}", amax)
    return eps_a, min(eps_b, w_b)


@dataclass(frozen=True)
class EngineConfig:
    """Density engine settings shared by sweeps and the CLI."""

    engine: str = "ulam"
    bins: int = 2000
    tol: float = POWER_TOL
    max_iters: int = POWER_MAX_ITERS
    orbit: OrbitConfig = OrbitConfig()

    def __post_init__(self):
        if self.engine not in ("ulam", "orbit"):
            raise MetastableError(f"sweep engine must be 'ulam' or 'orbit', got {self.engine!r}")


def estimate_density(pl_map, cfg):
    """Run one engine; returns ``(DensityEstimate, converged)``."""
    if cfg.engine == "orbit":
        est, _ = simulate_orbit(pl_map, cfg.orbit)
        return est, True
    try:
        return stationary_density(ulam_matrix(pl_map, cfg.bins), cfg.tol, cfg.max_iters), True
    except ConvergenceError as exc:
        log.warning("engine did not converge: %s", exc)
        return exc.last, False


def _record(family, eps_scale, eps_a, eps_b, target_for, cfg):
    sys = family.system(eps_a, eps_b)
    hm = hole_measures(sys, family.f_A, family.f_B)
    alpha = alpha_from_lhr(hm.lhr)
    est, ok = estimate_density(sys.perturbed, cfg)
    return SweepRecord(eps_scale, eps_a, eps_b, hm.mu_A_hole, hm.mu_B_hole, hm.lhr, alpha,
                       l1_distance(est.density, target_for(alpha)), cfg.engine, est.residual, ok)


def _run_points(family, jobs, workers):
    """Evaluate ``(eps, eps_a, eps_b, target_for, cfg)`` jobs, keeping their order.

    The kernels release the GIL, so threads overlap the heavy work.
    """
    # build the cached family members once, before any thread touches them
    family.T, family.f_A, family.f_B
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers <= 1:
        return [_record(family, *job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: _record(family, *job), jobs))


def _check_schedule(schedule):
    schedule = [float(e) for e in schedule]
    if not schedule:
        raise MetastableError("empty eps schedule")
    if any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise MetastableError(f"eps schedule must be positive and strictly decreasing: {schedule}")
    return schedule


def run_convergence_sweep(family, alpha, schedule=DEFAULT_SCHEDULE, cfg=EngineConfig(),
                          workers=None):
    """Distance from the perturbed invariant density to its predicted mixture limit.

    The hole ratio is held at ``alpha / (1 - alpha)`` along the schedule. The
    limit density uses the mixture weight recomputed from the realised hole
    masses, which equals ``alpha`` up to rounding. Schedule points run
    concurrently on ``workers`` threads (default: one per point, capped at the
    CPU count); records come back in schedule order.
    """
    schedule = _check_schedule(schedule)
    jobs = []
    for eps in schedule:
        eps_a, eps_b = gates_for_target_alpha(alpha, eps, family.f_A, family.f_B)
        jobs.append((eps, eps_a, eps_b, family.limit, cfg))
    records = _run_points(family, jobs, workers)
    if not l1_trend_ok(records):
        log.warning("l1_to_limit did not decrease over the sweep: first %.4g, last %.4g",
                    records[0].l1_to_limit, records[-1].l1_to_limit)
    return records


def run_extreme_limit(family, mode, schedule=EXTREME_SCHEDULE, cfg=EngineConfig(), workers=None):
    """Approach a pure component density by making one hole quadratically smaller.

    ``to_fB`` uses ``eps_A = eps`` and ``eps_B = eps**2`` (hole ratio tends to
    zero); ``to_fA`` swaps them. Distances are to the pure component density
    extended by zero.
    """
    schedule = _check_schedule(schedule)
    if mode not in ("to_fA", "to_fB"):
        raise MetastableError(f"mode must be 'to_fA' or 'to_fB', got {mode!r}")
    target = family.limit(1.0 if mode == "to_fA" else 0.0)
    jobs = []
    for eps in schedule:
        eps_a, eps_b = (eps, eps * eps) if mode == "to_fB" else (eps * eps, eps)
        jobs.append((eps, eps_a, eps_b, lambda _: target, cfg))
    return _run_points(family, jobs, workers)


def l1_trend_ok(records):
    return records[-1].l1_to_limit <= records[0].l1_to_limit


def write_sweep_csv(path, records):
    return write_csv(path, SWEEP_CSV_HEADER, (r.csv_row() for r in records))


def reproduce_example(out_dir, seed=EXAMPLE_SEED, eps=EXAMPLE_EPS, steps=10_000_000,
                      bins=2000, schedule=DEFAULT_SCHEDULE):
    """Write every artifact of the ten-cell worked example to ``out_dir``.

    Returns the manifest (also written as ``manifest.json``). All outputs are
    deterministic for a given ``seed``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MetastableError(f"cannot create output directory {out}: {exc}") from exc
    fam = MapFamily(EXAMPLE_WEIGHTS, DEFAULT_BETA, DEFAULT_GATE_SLOPE)
    sys = fam.system(eps, eps)
    ulam = stationary_density(ulam_matrix(sys.perturbed, bins))
    orbit_cfg = OrbitConfig(seed=seed, steps=steps, bins=bins)
    orb, stats = simulate_orbit(sys.perturbed, orbit_cfg)
    report = validate_conditions(sys, fam.f_A, fam.f_B, DEFAULT_DEPTH)
    sweep = run_convergence_sweep(fam, 0.5, schedule, EngineConfig(bins=bins))

    # path-free so bundles written to different directories are identical
    cmd = f"metastable example --seed {seed} --out <bundle dir>"
    artifacts = []

    def emit(name, what, writer):
        writer(out / name)
        artifacts.append({"file": name, "content": what, "command": cmd})

    emit("M.csv", "transition matrix M (beta = 0.4 in every cell; sidecar M.meta.json)",
         fam.matrix.to_csv)
    emit("f_B.csv", "piecewise-constant target density on B = [0, 1]", fam.f_B.to_csv)
    emit("f_A.csv", "mirrored density on A = [-1, 0]", fam.f_A.to_csv)
    emit("g.csv", "semi-Markov map g on [0, 1]", fam.g.to_csv)
    emit("T.csv", "odd extension T on [-1, 1]", fam.T.to_csv)
    emit("T_eps.csv", f"gated map, eps_A = eps_B = {eps}, gate slope {fam.gate_slope}",
         sys.perturbed.to_csv)
    emit("f_eps_ulam.csv", f"invariant density of T_eps, Ulam with {bins} bins", ulam.to_csv)
    emit("f_eps_orbit.csv", f"orbit histogram of T_eps, {steps} steps, seed {seed}", orb.to_csv)
    emit("orbit_stats.csv", "occupation statistics of the orbit run",
         lambda p: stats.to_csv(p, steps))
    emit("limit_half.csv", "predicted limit 0.5 f_A + 0.5 f_B", fam.limit(0.5).to_csv)
    emit("conditions.json", "metastability condition report",
         lambda p: p.write_text(report.to_json()))
    emit("sweep_alpha_0.5.csv", "mixture-limit sweep at alpha = 1/2 (Ulam engine)",
         lambda p: write_sweep_csv(p, sweep))

    manifest = {
        "example": {"N": 10, "v_times_80": [int(round(x * 80)) for x in EXAMPLE_WEIGHTS],
                    "beta": DEFAULT_BETA, "eps": eps, "gate_slope": fam.gate_slope,
                    "seed": seed, "orbit_steps": steps, "bins": bins},
        "notes": ["beta is not given for the worked example; 0.4 is our choice",
                  f"smallest eps in the sweep is {min(schedule)}; smaller gates slow "
                  "power iteration beyond the desk-scale budget"],
        "cross_engine_l1": l1_distance(ulam.density, orb.density),
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def records_as_dicts(records):
    return [asdict(r) for r in records]
