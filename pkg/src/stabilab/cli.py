"""``stabilab`` command-line entry point.

Exit codes: 0 success, 2 precondition or configuration error, 3 infeasible,
1 assertion failure or internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import estimates, regimes
from .config import RunConfig, load_config
from .control import ControlProblem, stabilize
from .duality import FiniteSystem, check_equivalence, random_stable_system
from .errors import ConfigError, InfeasibleError, PreconditionError
from .lattice import GridSpec, StateVector, read_state, symbol_on_grid, write_states
from .symbols import (
    FractionalSymbol,
    PolynomialSymbol,
    certify_ellipticity,
    compute_nu,
    default_ellipticity_constant,
    minimal_omega,
)
from .thickset import ThickSet, full_set, generate_random, half_cells, verified, verify_thickness

SUBCOMMANDS = (
    "symbol-check",
    "uncertainty",
    "dissipation",
    "observability",
    "regimes",
    "stabilize",
    "duality-check",
)

# --- typed config access -----------------------------------------------------


def _num(cfg: RunConfig, key: str, *, positive=False, integer=False, optional=False, lo=None, hi=None):
    section, name = key.split(".")
    value = cfg[section][name]
    if value is None:
        if optional:
            return None
        cfg.fail(key, "value is required")
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        value = math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        cfg.fail(key, f"expected a number, got {value!r}")
    if integer:
        if value != int(value):
            cfg.fail(key, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if positive and not value > 0:
        cfg.fail(key, f"must be positive, got {value!r}")
    if lo is not None and value < lo:
        cfg.fail(key, f"must be >= {lo}, got {value!r}")
    if hi is not None and value > hi:
        cfg.fail(key, f"must be <= {hi}, got {value!r}")
    return value


def _num_list(cfg: RunConfig, key: str, optional=True):
    section, name = key.split(".")
    value = cfg[section][name]
    if value is None:
        if optional:
            return None
        cfg.fail(key, "value is required")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        cfg.fail(key, f"expected a number or a list of numbers, got {value!r}")
    return [float(v) for v in value]


def _coefficient_map(cfg: RunConfig, key: str, dimension: int) -> dict:
    section, name = key.split(".")
    raw = cfg[section][name]
    if not isinstance(raw, list):
        cfg.fail(key, "expected a list of [multi-index, re, im] triples")
    out = {}
    for item in raw:
        if not (isinstance(item, list) and len(item) in (2, 3) and isinstance(item[0], list)):
            cfg.fail(key, f"bad coefficient entry {item!r}; expected [multi-index, re, im]")
        alpha = item[0]
        if len(alpha) != dimension or not all(isinstance(a, int) and a >= 0 for a in alpha):
            cfg.fail(key, f"multi-index {alpha!r} does not fit dimension {dimension}")
        im = item[2] if len(item) == 3 else 0.0
        out[tuple(alpha)] = complex(item[1], im)
    return out


# --- builders ----------------------------------------------------------------


def build_grid(cfg: RunConfig) -> GridSpec:
    d = _num(cfg, "symbol.dimension", integer=True, lo=1, hi=3)
    n = _num(cfg, "grid.n", integer=True, lo=2)
    if n & (n - 1):
        cfg.fail("grid.n", f"must be a power of two, got {n}")
    ell = _num(cfg, "grid.ell", positive=True)
    p = _num(cfg, "grid.p", lo=1)
    return GridSpec(d, n, ell, p)


def build_symbol(cfg: RunConfig, grid: GridSpec) -> FractionalSymbol:
    d = grid.d
    degree = _num(cfg, "symbol.degree", integer=True, lo=1)
    coeffs = _coefficient_map(cfg, "symbol.coefficients", d)
    try:
        base = PolynomialSymbol(d, degree, coeffs)
    except PreconditionError as exc:
        cfg.fail("symbol.coefficients", str(exc))
    samples = grid.frequency_samples()
    c = _num(cfg, "symbol.c", positive=True, optional=True)
    if c is None:
        c = default_ellipticity_constant(base)
    omega = _num(cfg, "symbol.omega", optional=True)
    if omega is None:
        omega = minimal_omega(base, samples, c)
    cert = certify_ellipticity(base, samples, c, omega)
    if not cert.validated:
        raise PreconditionError(
            f"ellipticity fails at xi={cert.violation.tolist()} with c={c}, omega={omega}"
        )
    s = _num(cfg, "symbol.s", lo=0, hi=1)
    b = _coefficient_map(cfg, "symbol.b", d)
    try:
        sym = FractionalSymbol(base, cert, s=s, b=b)
    except PreconditionError as exc:
        cfg.fail("symbol.b" if b else "symbol.s", str(exc))
    compute_nu(sym, samples)
    return sym


def build_set(cfg: RunConfig, grid: GridSpec) -> ThickSet:
    pattern = cfg["set"]["pattern"]
    if pattern == "periodic":
        return half_cells(grid, _num(cfg, "set.period", positive=True))
    if pattern == "full":
        return full_set(grid, _num(cfg, "set.cube", positive=True))
    if pattern == "random":
        return generate_random(
            grid,
            _num(cfg, "set.rho", positive=True, hi=1),
            _num_list(cfg, "set.cube", optional=False),
            _num(cfg, "set.seed", integer=True),
        )
    if pattern == "file":
        path = cfg["set"]["path"]
        if not isinstance(path, str) or not Path(path).exists():
            cfg.fail("set.path", f"mask file {path!r} does not exist")
        state = read_state(path)
        if state.grid.shape != grid.shape:
            cfg.fail("set.path", f"mask grid {state.grid.shape} does not match {grid.shape}")
        tset = ThickSet(
            grid,
            np.abs(state.values) > 0.5,
            _num(cfg, "set.rho", positive=True, hi=1),
            _num_list(cfg, "set.cube", optional=False),
        )
        return verified(tset)
    cfg.fail("set.pattern", f"expected periodic, random, full or file; got {pattern!r}")


def build_x0(cfg: RunConfig, grid: GridSpec) -> StateVector:
    spec = cfg["run"]["x0"]
    if spec == "bump":
        c = grid.ell / 2
        return StateVector.from_function(grid, lambda *x: np.exp(-sum((xi - c) ** 2 for xi in x)))
    if spec == "random":
        rng = np.random.default_rng(_num(cfg, "run.seed", integer=True))
        return StateVector(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    if isinstance(spec, str) and Path(spec).exists():
        state = read_state(spec)
        if state.grid.shape != grid.shape:
            cfg.fail("run.x0", "state file grid does not match")
        return StateVector(grid, state.values)
    cfg.fail("run.x0", f"expected bump, random or a state file; got {spec!r}")


def default_lambdas(grid: GridSpec) -> list[float]:
    """Eight values from half the first lattice frequency to just below ``Nyquist / 2``."""
    return list(np.linspace(0.5 * grid.first_frequency(), 0.97 * grid.nyquist / 2, 8))


def uncertainty_sweep(tset: ThickSet, lambdas, p=2.0, trials=200, seed=0):
    ests = [estimates.estimate_uncertainty(tset, lam, p=p, trials=trials, seed=seed) for lam in lambdas]
    return ests, estimates.fit_uncertainty(ests)


def grid_growth(sym, grid: GridSpec) -> float:
    """Exact ``L_2`` growth bound ``max(-Re a)`` of the grid semigroup."""
    return float(np.max(-symbol_on_grid(sym, grid).real))


def schedule(cfg: RunConfig, sym, tset: ThickSet):
    lambdas = _num_list(cfg, "run.lambda") or default_lambdas(tset.grid)
    _, fit = uncertainty_sweep(tset, lambdas)
    M = _num(cfg, "run.M", lo=1)
    delta = _num(cfg, "run.delta", optional=True, lo=0, hi=1)
    return regimes.fractional_schedule(sym, (fit.d0, fit.d1), M=M, delta=0.5 if delta is None else delta), fit


# --- output ------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows, cfg: RunConfig):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {cfg.to_json()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def write_json(path: Path, payload: dict, cfg: RunConfig):
    body = {"config": json.loads(cfg.to_json()), **_jsonable(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


# --- subcommands -------------------------------------------------------------


def cmd_symbol_check(cfg, out: Path, plot: bool) -> str:
    grid = build_grid(cfg)
    sym = build_symbol(cfg, grid)
    payload = {
        "c": sym.cert.c,
        "omega": sym.cert.omega,
        "xi_max": sym.cert.xi_max,
        "validated": sym.cert.validated,
        "s": sym.s,
        "order": sym.order,
        "m_tilde": sym.m_tilde,
        "nu": sym.nu,
        "dissipation_threshold": estimates.dissipation_threshold(sym),
    }
    write_json(out / "symbol.json", payload, cfg)
    return f"symbol-check: validated c={sym.cert.c:.6g} omega={sym.cert.omega:.6g} nu={sym.nu:.6g}"


def cmd_uncertainty(cfg, out: Path, plot: bool) -> str:
    grid = build_grid(cfg)
    tset = build_set(cfg, grid)
    lambdas = _num_list(cfg, "run.lambda") or default_lambdas(grid)
    trials = _num(cfg, "run.trials", integer=True, lo=1)
    ests, fit = uncertainty_sweep(tset, lambdas, p=grid.p, trials=trials, seed=_num(cfg, "run.seed", integer=True))
    rows = [(e.lam, e.p, e.c1_hat, e.trials, e.method) for e in ests]
    write_csv(out / "uncertainty.csv", ["lambda", "p", "c1_hat", "trials", "method"], rows, cfg)
    write_json(
        out / "uncertainty_fit.json",
        {"d0": fit.d0, "d1": fit.d1, "violations": fit.violations(),
         "empirical_lower_bound": grid.p != 2},
        cfg,
    )
    if plot:
        from .plotting import plot_uncertainty

        plot_uncertainty(fit.lambdas, fit.c1, fit.bound(fit.lambdas), out / "uncertainty.svg")
    return f"uncertainty: {len(ests)} lambdas, fit d0={fit.d0:.6g} d1={fit.d1:.6g}"


def cmd_dissipation(cfg, out: Path, plot: bool) -> str:
    grid = build_grid(cfg)
    sym = build_symbol(cfg, grid)
    lambdas = _num_list(cfg, "run.lambda")
    if not lambdas:
        cfg.fail("run.lambda", "at least one lambda is required")
    t = _num_list(cfg, "run.t_samples") or list(np.linspace(0.01, 1.0, 16))
    rows, curves = [], []
    for lam in lambdas:
        est = estimates.verify_dissipation(sym, lam, t, grid, p=grid.p)
        ts = np.array([s[0] for s in est.samples])
        meas = np.array([s[1] for s in est.samples])
        bound = est.bound(ts)
        rows += [(lam, ti, mi, bi, est.K) for ti, mi, bi in zip(ts, meas, bound)]
        curves.append((lam, ts, meas, bound))
    write_csv(out / "dissipation.csv", ["lambda", "t", "measured", "bound", "K"], rows, cfg)
    if plot:
        from .plotting import plot_dissipation

        plot_dissipation(curves, out / "dissipation.svg")
    return f"dissipation: {len(lambdas)} lambdas x {len(t)} samples"


def cmd_observability(cfg, out: Path, plot: bool) -> str:
    grid = build_grid(cfg)
    sym = build_symbol(cfg, grid)
    tset = build_set(cfg, grid)
    lambdas = _num_list(cfg, "run.lambda")
    lam = lambdas[0] if lambdas else grid.nyquist / 4
    r = _num(cfg, "run.r", lo=1)
    M = _num(cfg, "run.M", lo=1)
    c1 = estimates.estimate_uncertainty(tset, lam, p=2.0).c1_hat
    rate = estimates.dissipation_rate(sym, lam)
    omega = grid_growth(sym, grid)
    omega_plus = max(omega, 0.0)
    if not rate > omega_plus:
        raise PreconditionError(f"dissipation rate {rate:.6g} does not exceed omega_+ = {omega_plus:.6g}")
    diss = estimates.verify_dissipation(sym, lam, np.linspace(0.0, 10.0 / rate, 257), grid)
    K = diss.K
    delta = _num(cfg, "run.delta", optional=True, lo=0, hi=1)
    if delta is None:
        delta = estimates.balanced_delta(rate, omega)
    T = _num(cfg, "run.T", positive=True, optional=True)
    if T is None:
        T = regimes.SAFETY * 2.0 * math.log(M * K * (c1 + 1.0)) / (rate - omega_plus)
    rep = estimates.observability_constants(c1, lambda t: K * np.exp(-rate * t), M, omega, T, r, delta)
    emp = estimates.verify_weak_observability(
        sym, tset, T, estimates.conjugate_exponent(r), rep.C_obs, rep.alpha,
        trials=_num(cfg, "run.trials", integer=True, lo=1),
        n_t=max(_num(cfg, "run.n_t", integer=True), 16),
        seed=_num(cfg, "run.seed", integer=True),
    )
    row = (T, r, delta, lam, c1, K, rate, rep.C_obs, rep.alpha, emp.empirical_max_ratio, emp.violations, emp.trials)
    header = ["T", "r", "delta", "lambda", "c1_hat", "K", "rate", "C_obs", "alpha",
              "empirical_max_ratio", "violations", "trials"]
    write_csv(out / "observability.csv", header, [row], cfg)
    return (
        f"observability: T={T:.6g} C_obs={rep.C_obs:.6g} alpha={rep.alpha:.6g} "
        f"violations={emp.violations}/{emp.trials}"
    )


_REGIME_KEYS = ("d0", "d1", "d2", "d3", "gamma1", "gamma2", "gamma3")


def cmd_regimes(cfg, out: Path, plot: bool) -> str:
    sec = cfg["regime"]
    if all(sec[k] is not None for k in _REGIME_KEYS):
        params = regimes.RegimeParams(
            **{k: _num(cfg, f"regime.{k}", positive=True) for k in _REGIME_KEYS},
            M=_num(cfg, "regime.M", lo=1),
            omega=_num(cfg, "regime.omega"),
            norm_C=_num(cfg, "regime.norm_C", lo=0),
            delta=_num(cfg, "regime.delta", positive=True, hi=1),
        )
        case = sec["case"]
        dec = regimes.select_regime(
            params,
            T_hint=_num(cfg, "regime.T_hint", positive=True, optional=True),
            lambda_hint=_num(cfg, "regime.lambda_hint", positive=True, optional=True),
            case=case,
        )
    elif any(sec[k] is not None for k in _REGIME_KEYS):
        missing = [k for k in _REGIME_KEYS if sec[k] is None]
        raise ConfigError(f"regime: missing {', '.join('regime.' + k for k in missing)}")
    else:
        grid = build_grid(cfg)
        sym = build_symbol(cfg, grid)
        tset = build_set(cfg, grid)
        dec, _ = schedule(cfg, sym, tset)
    row = (dec.case_id, dec.lam, dec.T, dec.alpha, dec.justification)
    write_csv(out / "regimes.csv", ["case", "lambda", "T", "alpha", "justification"], [row], cfg)
    if not dec.feasible:
        raise InfeasibleError(f"regimes: {dec.justification}")
    return f"regimes: case {dec.case_id} lambda={dec.lam:.6g} T={dec.T:.6g} alpha={dec.alpha:.15g}"


def cmd_stabilize(cfg, out: Path, plot: bool) -> str:
    grid = build_grid(cfg)
    sym = build_symbol(cfg, grid)
    tset = build_set(cfg, grid)
    T = _num(cfg, "run.T", positive=True, optional=True)
    if T is None:
        dec, _ = schedule(cfg, sym, tset)
        if not dec.feasible:
            raise InfeasibleError(f"no admissible period: {dec.justification}")
        T = dec.T
    problem = ControlProblem(
        sym, tset, T,
        n_t=_num(cfg, "run.n_t", integer=True, lo=8),
        alpha_target=_num(cfg, "run.alpha"),
        r=_num(cfg, "run.r", lo=1),
        p=grid.p,
        cost_bound=_num(cfg, "run.cost_bound", optional=True, lo=0),
    )
    x0 = build_x0(cfg, grid)
    K = _num(cfg, "run.periods", integer=True, lo=1)
    traj = stabilize(problem, x0, K)
    x0n = x0.norm(grid.p)
    write_csv(
        out / "trajectory.csv", ["t", "norm", "bound", "free_norm"],
        zip(traj.times, traj.norms, traj.bounds, traj.free_norms), cfg,
    )
    write_csv(
        out / "periods.csv", ["k", "factor", "state_norm", "control_norm"],
        ((k, f, s, c) for k, (f, s, c) in enumerate(zip(traj.factors, traj.state_norms, traj.control_norms))),
        cfg,
    )
    write_json(
        out / "certificate.json",
        {
            "T": T, "alpha_target": problem.alpha_target, "alpha_achieved": traj.alpha_achieved,
            "cost_achieved": traj.cost_achieved, "M_S": traj.M_S, "M_cert": traj.M_cert,
            "omega_cert": traj.omega_cert, "cost_sum": traj.cost_sum(),
            "cost_series_bound": traj.cost_series_bound(x0n), "periods": K,
        },
        cfg,
    )
    write_states(
        out / "controls.bin",
        (u.node_state(j) for u in traj.controls for j in range(problem.n_t)),
    )
    if plot:
        from .plotting import plot_decay

        plot_decay(traj.times, traj.norms, traj.bounds, out / "decay.svg", traj.free_norms, T)
    return (
        f"stabilize: {K} periods, alpha_achieved={traj.alpha_achieved:.6g} "
        f"M={traj.M_cert:.6g} omega={traj.omega_cert:.6g}"
    )


def build_system(cfg: RunConfig) -> FiniteSystem:
    sec = cfg["system"]
    T = _num(cfg, "run.T", positive=True, optional=True) or 1.0
    r = _num(cfg, "run.r", lo=1)
    n_t = max(_num(cfg, "run.n_t", integer=True), 64)
    if sec["A"] is not None or sec["B"] is not None:
        try:
            A = np.array(sec["A"], dtype=float)
            B = np.array(sec["B"], dtype=float)
        except (TypeError, ValueError):
            cfg.fail("system.A", "A and B must be numeric matrices")
        if A.ndim != 2 or B.ndim != 2:
            cfg.fail("system.A", "A and B must both be given as matrices")
        return FiniteSystem(A, B, T=T, r=r, n_t=n_t)
    rng = np.random.default_rng(_num(cfg, "system.seed", integer=True))
    return random_stable_system(
        _num(cfg, "system.n", integer=True, lo=1, hi=8),
        _num(cfg, "system.m", integer=True, lo=1, hi=8),
        rng, T=T, r=r, n_t=n_t,
    )


def cmd_duality_check(cfg, out: Path, plot: bool) -> str:
    sys_ = build_system(cfg)
    Cs = _num_list(cfg, "system.C", optional=False)
    alphas = _num_list(cfg, "system.alpha") or [None]
    n_dirs = _num(cfg, "system.n_dirs", integer=True, lo=100)
    seed = _num(cfg, "system.seed", integer=True)
    verdicts = [
        check_equivalence(sys_, C, alpha, n_dirs=n_dirs, seed=seed).as_dict()
        for C in Cs for alpha in alphas
    ]
    write_json(
        out / "duality.json",
        {"A": sys_.A, "B": sys_.B, "T": sys_.T, "r": sys_.r, "n_t": sys_.n_t, "verdicts": verdicts},
        cfg,
    )
    passed = sum(v["verdict"] == "PASS" for v in verdicts)
    return f"duality-check: {passed}/{len(verdicts)} PASS"


COMMANDS = {
    "symbol-check": cmd_symbol_check,
    "uncertainty": cmd_uncertainty,
    "dissipation": cmd_dissipation,
    "observability": cmd_observability,
    "regimes": cmd_regimes,
    "stabilize": cmd_stabilize,
    "duality-check": cmd_duality_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stabilab", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config_path", nargs="?", help="config file (same as --config)")
    parser.add_argument("--config", dest="config_flag")
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--plot", action="store_true", help="also write SVG figures")
    parser.add_argument("--grid-n", type=int)
    parser.add_argument("--lambda", dest="lam", type=float, action="append")
    parser.add_argument("--period", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--periods", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--nt", type=int)
    return parser


def resolve_config(args) -> RunConfig:
    if args.config_path and args.config_flag and args.config_path != args.config_flag:
        raise ConfigError("config given both positionally and with --config")
    cfg = load_config(args.config_flag or args.config_path)
    overrides = {
        "grid.n": args.grid_n,
        "run.lambda": args.lam,
        "run.T": args.period,
        "run.alpha": args.alpha,
        "run.periods": args.periods,
        "run.trials": args.trials,
        "run.n_t": args.nt,
    }
    if args.seed is not None:
        overrides["run.seed"] = args.seed
        overrides["system.seed"] = args.seed
    for key, value in overrides.items():
        if value is not None:
            cfg.set(key, value)
    return cfg


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.subcommand](cfg, out, args.plot)
    except PreconditionError as exc:
        kind = "config error" if isinstance(exc, ConfigError) else "precondition error"
        print(f"stabilab {args.subcommand}: {kind}: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"stabilab {args.subcommand}: infeasible: {exc}", file=sys.stderr)
        return 3
    except AssertionError as exc:
        print(f"stabilab {args.subcommand}: assertion failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"stabilab {args.subcommand}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
