"""Command-line front end.

Every command reads an optional ``key = value`` config file (``--config``);
any key can also be given as ``--key VALUE`` and then wins over the file.

Exit codes: 0 success, 2 configuration error, 3 hard condition failure,
4 numerical non-convergence.
"""

import argparse
import ast
from dataclasses import dataclass
import logging
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .density import builtin_weights, check_weights, discretize_density, l1_distance
from .errors import ConvergenceError, MetastableError
from .experiments import (DEFAULT_SCHEDULE, EXAMPLE_SEED, EXTREME_SCHEDULE, EngineConfig,
                          MapFamily, gates_for_target_alpha, reproduce_example,
                          run_convergence_sweep, run_extreme_limit, write_sweep_csv)
from .interval_map import validate_conditions
from .orbit import OrbitConfig, simulate_orbit
from .transfer import exact_fp_density, stationary_density, ulam_matrix

EXIT_OK, EXIT_CONFIG, EXIT_CONDITION, EXIT_NONCONVERGED = 0, 2, 3, 4
DEFAULT_EPS = 0.02

log = logging.getLogger("metastable")


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"config error in '{key}': {message}")
        self.key = key


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    text = str(text).strip().strip("[]")
    return [float(x) for x in text.replace(",", " ").split()]


def _scalar_or_list(text):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else vals


# key, converter, default, help (units and meaning)
CONFIG_KEYS = (
    ("target", str, "example10",
     "builtin target density on [0, 1]: example10 | one_peak | two_peak"),
    ("weights", _floats, None,
     "explicit cell masses v_1..v_N (dimensionless, sum to 1); overrides target"),
    ("pdf_file", str, None,
     "CSV of samples 'x,f' on [0, 1]; linearly interpolated and discretised to N cells"),
    ("N", int, 10, "cells per component (integer)"),
    ("beta", _scalar_or_list, 0.4, "retention in (0, 1), scalar or list of N values"),
    ("eps_A", float, None, f"gate width at -1, state-space length; {DEFAULT_EPS} unless alpha is given"),
    ("eps_B", float, None, f"gate width at +1, state-space length; {DEFAULT_EPS} unless alpha is given"),
    ("alpha", float, None,
     "target mixture weight on f_A in (0, 1); with eps_scale replaces eps_A/eps_B"),
    ("eps_scale", float, None, "eps_A when alpha is given, state-space length"),
    ("gate_slope", float, 2.0, "slope of the gate branches (> 1, dimensionless)"),
    ("engine", str, "ulam", "density engine: exact | ulam | orbit | both"),
    ("bins", int, 2000, "Ulam bins and histogram bins over [-1, 1] (integer)"),
    ("steps", int, 10_000_000, "orbit iterations including burn-in (integer)"),
    ("burn_in", int, 10_000, "leading orbit iterates discarded (integer)"),
    ("tol", float, 1e-10, "power-iteration tolerance on ||wU - w||_1"),
    ("max_iters", int, 1_000_000, "power-iteration cap (integer)"),
    ("schedule", _floats, None,
     "strictly decreasing gate scales; default 0.05,0.02,0.01,0.005 for sweep, "
     "0.1,0.05,0.02 for extreme"),
    ("mode", str, "to_fB", "extreme-limit direction: to_fA | to_fB"),
    ("depth", int, 50, "orbit depth K for the finite-depth condition checks (integer)"),
)
_KEYS = {k: (conv, default) for k, conv, default, _ in CONFIG_KEYS}


def parse_config_text(text):
    """Parse ``key = value`` lines; ``#`` starts a comment; lists use ``[a, b]``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS and key != "seed":
            raise ConfigError(key, "unknown key")
        try:
            value = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            pass
        out[key] = value
    return out


@dataclass
class RunConfig:
    values: dict
    out: Path
    seed: int
    explicit: frozenset = frozenset()

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None


def resolve_config(args):
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from exc
        values.update(parse_config_text(text))
    for key in _KEYS:
        if hasattr(args, key):
            values[key] = getattr(args, key)
    resolved = {}
    for key, (conv, default) in _KEYS.items():
        if key in values and values[key] is not None:
            try:
                resolved[key] = conv(values[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"cannot parse {values[key]!r}: {exc}") from exc
        else:
            resolved[key] = default
    seed = args.seed if args.seed is not None else values.get("seed", EXAMPLE_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("--seed", "must be an unsigned 64-bit integer")
    explicit = frozenset(k for k in _KEYS if values.get(k) is not None)
    return RunConfig(resolved, Path(args.out), seed, explicit)


def _weights(cfg):
    n = cfg.N
    if n < 1:
        raise ConfigError("N", "must be positive")
    if cfg.weights is not None:
        try:
            v = check_weights(cfg.weights)
        except MetastableError as exc:
            raise ConfigError("weights", str(exc)) from exc
        if "N" in cfg.explicit and v.size != n:
            raise ConfigError("weights", f"has {v.size} entries but N = {n}")
        return v
    if cfg.pdf_file is not None:
        try:
            data = np.loadtxt(cfg.pdf_file, delimiter=",", comments="#", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError("pdf_file", str(exc)) from exc
        xs, fs = data[:, 0], data[:, 1]
        try:
            return discretize_density(lambda x: np.interp(x, xs, fs), n)
        except MetastableError as exc:
            raise ConfigError("pdf_file", str(exc)) from exc
    try:
        return builtin_weights(cfg.target, n)
    except MetastableError as exc:
        raise ConfigError("target", str(exc)) from exc


def _family(cfg):
    v = _weights(cfg)
    fam = MapFamily(v, cfg.beta, cfg.gate_slope)
    try:
        fam.matrix
    except (MetastableError, ValueError) as exc:
        raise ConfigError("beta", str(exc)) from exc
    return fam


def _gates(cfg, fam):
    explicit = cfg.eps_A is not None or cfg.eps_B is not None
    by_alpha = cfg.alpha is not None or cfg.eps_scale is not None
    if explicit and by_alpha:
        raise ConfigError("alpha", "give either eps_A/eps_B or alpha/eps_scale, not both")
    if by_alpha:
        if cfg.alpha is None or cfg.eps_scale is None:
            raise ConfigError("alpha", "alpha and eps_scale must be given together")
        try:
            return gates_for_target_alpha(cfg.alpha, cfg.eps_scale, fam.f_A, fam.f_B)
        except MetastableError as exc:
            raise ConfigError("alpha", str(exc)) from exc
    eps_a = DEFAULT_EPS if cfg.eps_A is None else cfg.eps_A
    eps_b = DEFAULT_EPS if cfg.eps_B is None else cfg.eps_B
    return eps_a, eps_b


def _system(cfg, fam):
    eps_a, eps_b = _gates(cfg, fam)
    try:
        return fam.system(eps_a, eps_b)
    except MetastableError as exc:
        msg = str(exc)
        key = next((k for k in ("gate_slope", "eps_B", "eps_A") if k in msg), "eps_A")
        raise ConfigError(key, msg) from exc


def _orbit_cfg(cfg):
    try:
        return OrbitConfig(seed=cfg.seed, steps=cfg.steps, burn_in=cfg.burn_in, bins=cfg.bins)
    except MetastableError as exc:
        raise ConfigError("steps", str(exc)) from exc


def _outdir(cfg):
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", str(exc)) from exc
    return cfg.out


def _report(cfg, fam, sys_):
    return validate_conditions(sys_, fam.f_A, fam.f_B, cfg.depth)


def cmd_build(cfg):
    fam = _family(cfg)
    sys_ = _system(cfg, fam)
    out = _outdir(cfg)
    fam.matrix.to_csv(out / "M.csv")
    fam.g.to_csv(out / "g.csv")
    fam.T.to_csv(out / "T.csv")
    sys_.perturbed.to_csv(out / "T_eps.csv")
    report = _report(cfg, fam, sys_)
    (out / "conditions.json").write_text(report.to_json())
    print(f"wrote M, g, T, T_eps and conditions to {out}")
    for key in report:
        print(f"  {key}: {report.status(key)}")
    return EXIT_CONDITION if report.hard_failures else EXIT_OK


def cmd_validate(cfg):
    fam = _family(cfg)
    sys_ = _system(cfg, fam)
    report = _report(cfg, fam, sys_)
    out = _outdir(cfg)
    (out / "conditions.json").write_text(report.to_json())
    sys.stdout.write(report.to_json())
    return EXIT_CONDITION if report.hard_failures else EXIT_OK


def cmd_density(cfg):
    engine = cfg.engine
    if engine not in ("exact", "ulam", "orbit", "both"):
        raise ConfigError("engine", f"unknown engine {engine!r}")
    fam = _family(cfg)
    out = _outdir(cfg)
    if engine == "exact":
        est = exact_fp_density(fam.matrix)
        est.to_csv(out / "f_B_exact.csv")
        print(f"exact invariant density of g: peak height {est.density.heights.max():.6g}")
        return EXIT_OK
    sys_ = _system(cfg, fam)
    orbit_cfg = _orbit_cfg(cfg) if engine in ("orbit", "both") else None
    status = EXIT_OK
    ulam_est = orbit_est = None
    if engine in ("ulam", "both"):
        try:
            ulam_est = stationary_density(ulam_matrix(sys_.perturbed, cfg.bins),
                                          cfg.tol, cfg.max_iters)
        except ConvergenceError as exc:
            ulam_est = exc.last
            status = EXIT_NONCONVERGED
            log.error("%s", exc)
        ulam_est.to_csv(out / "f_eps_ulam.csv")
        print(f"ulam: residual {ulam_est.residual:.3e} after {ulam_est.iterations} iterations")
    if orbit_cfg is not None:
        orbit_est, stats = simulate_orbit(sys_.perturbed, orbit_cfg)
        orbit_est.to_csv(out / "f_eps_orbit.csv")
        stats.to_csv(out / "orbit_stats.csv", orbit_cfg.steps)
        print(f"orbit: frac_A {stats.frac_A:.4f}, transitions {stats.transitions}, "
              f"clamps {stats.clamps}")
    if ulam_est is not None and orbit_est is not None:
        print(f"L1(ulam, orbit) = {l1_distance(ulam_est.density, orbit_est.density):.6g}")
    return status


def _engine_cfg(cfg):
    if cfg.engine not in ("ulam", "orbit"):
        raise ConfigError("engine", "sweeps use engine 'ulam' or 'orbit'")
    orbit_cfg = _orbit_cfg(cfg) if cfg.engine == "orbit" else OrbitConfig()
    return EngineConfig(cfg.engine, cfg.bins, cfg.tol, cfg.max_iters, orbit_cfg)


def _print_records(records):
    for r in records:
        print(f"  eps {r.eps_scale:<8g} lhr {r.lhr:<10.6g} alpha {r.alpha:<8.6g} "
              f"l1_to_limit {r.l1_to_limit:.6g}{'' if r.converged else '  (unconverged)'}")


def cmd_sweep(cfg):
    fam = _family(cfg)
    alpha = 0.5 if cfg.alpha is None else cfg.alpha
    schedule = cfg.schedule or DEFAULT_SCHEDULE
    try:
        records = run_convergence_sweep(fam, alpha, schedule, _engine_cfg(cfg))
    except MetastableError as exc:
        raise ConfigError("schedule" if "schedule" in str(exc) else "alpha", str(exc)) from exc
    path = write_sweep_csv(_outdir(cfg) / "sweep.csv", records)
    print(f"wrote {path}")
    _print_records(records)
    return EXIT_OK if all(r.converged for r in records) else EXIT_NONCONVERGED


def cmd_extreme(cfg):
    fam = _family(cfg)
    schedule = cfg.schedule or EXTREME_SCHEDULE
    try:
        records = run_extreme_limit(fam, cfg.mode, schedule, _engine_cfg(cfg))
    except MetastableError as exc:
        key = "mode" if "mode" in str(exc) else "schedule"
        raise ConfigError(key, str(exc)) from exc
    path = write_sweep_csv(_outdir(cfg) / f"extreme_{cfg.mode}.csv", records)
    print(f"wrote {path}")
    _print_records(records)
    return EXIT_OK if all(r.converged for r in records) else EXIT_NONCONVERGED


def cmd_example(cfg):
    out = _outdir(cfg)
    manifest = reproduce_example(out, seed=cfg.seed, steps=cfg.steps, bins=cfg.bins)
    print(f"wrote {len(manifest['artifacts'])} artifacts and manifest.json to {out}")
    print(f"  L1(ulam, orbit) = {manifest['cross_engine_l1']:.6g}")
    return EXIT_OK


COMMANDS = {
    "build": (cmd_build, "build M, g, T and T_eps and write them with the condition report"),
    "validate": (cmd_validate, "check the metastability conditions and print the report"),
    "density": (cmd_density, "estimate invariant densities with the chosen engine(s)"),
    "sweep": (cmd_sweep, "mixture-limit convergence sweep at fixed alpha"),
    "extreme": (cmd_extreme, "extreme-limit sweep towards a single component density"),
    "example": (cmd_example, "reproduce the ten-cell worked example bundle"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", metavar="PATH", help="key = value config file")
    g.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    g.add_argument("--seed", metavar="U64", type=int, default=None,
                   help=f"orbit seed, unsigned 64-bit (default: {EXAMPLE_SEED})")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress")
    keys = common.add_argument_group("config keys (override the config file)")
    for key, _, default, text in CONFIG_KEYS:
        shown = "none" if default is None else default
        keys.add_argument(f"--{key}", default=argparse.SUPPRESS, metavar="VALUE",
                          help=f"{text} [default: {shown}]")

    parser = argparse.ArgumentParser(
        prog="metastable",
        description="Metastable interval maps: construction, invariant densities, limit sweeps.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = resolve_config(args)
        return func(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MetastableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
