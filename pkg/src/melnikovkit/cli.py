"""Command-line front-end: ``melnikovkit <command> CONFIG [options]``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
4 a requested acceptance threshold was not met.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load
from .melnikov import (
    DEFAULT_TOL,
    BranchLossError,
    ConvergenceError,
    H3Failure,
    NotHamiltonianError,
    additivity_gap,
    find_critical_tau,
    melnikov_potential,
    melnikov_vector,
    reduced_potential,
)
from .model import DomainError
from .separatrix import SeparatrixError, build_separatrix
from .verify import (
    ChartError,
    IntegrationError,
    ShootingError,
    action_jump,
    fit_order,
    measure_splitting,
)

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_THRESHOLD = 0, 2, 3, 4

NUMERIC_ERRORS = (
    ConvergenceError,
    H3Failure,
    BranchLossError,
    ShootingError,
    IntegrationError,
    DomainError,
    ChartError,
    SeparatrixError,
    NotHamiltonianError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class ThresholdFailure(Exception):
    """Carries a complete report whose acceptance threshold failed."""

    def __init__(self, report: dict, message: str):
        self.report = report
        super().__init__(message)


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------
def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _range(text: str) -> np.ndarray:
    """``start:stop:count`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            a, b, k = text.split(":")
            return np.linspace(float(a), float(b), int(k))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}") from None
    return np.asarray(_floats(text))


def _eta(args, cfg) -> np.ndarray:
    if args.eta is not None:
        eta = np.asarray(args.eta, dtype=float)
        if eta.size != cfg.layout.m:
            raise ConfigError(f"--eta needs {cfg.layout.m} values")
        return eta
    return np.atleast_1d(cfg.clock.state_at(args.t))


def _vec(values, size, flag):
    v = np.asarray(values, dtype=float)
    if v.size == 1 and size > 1:
        v = np.full(size, float(v[0]))
    if v.size != size:
        raise ConfigError(f"{flag} needs {size} value(s), got {v.size}")
    return v


def _point(args, cfg):
    lay = cfg.layout
    return _vec(args.I, lay.d, "--I"), _vec(args.phi, lay.d, "--phi"), _eta(args, cfg)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def cmd_eval(rc, orb, args) -> dict:
    cfg = rc.system
    I, phi, eta = _point(args, cfg)
    tau = _vec(args.tau, cfg.n, "--tau")
    mv = melnikov_vector(cfg, orb, tau, I, phi, eta, args.tol)
    rep = {"tau": tau, "I": I, "phi": phi, "eta": eta, "melnikov_vector": mv.to_dict()}
    if cfg.hamiltonian:
        rep["melnikov_potential"] = melnikov_potential(cfg, orb, tau, I, phi, eta, args.tol).to_dict()
    else:
        rep["melnikov_potential"] = None
        rep["melnikov_potential_reason"] = "perturbation is not Hamiltonian: no scalar potential"
    return rep


def cmd_critical(rc, orb, args) -> dict:
    cfg = rc.system
    I, phi, eta = _point(args, cfg)
    guess = None if args.tau_guess is None else _vec(args.tau_guess, cfg.n, "--tau-guess")
    crit = find_critical_tau(cfg, orb, guess, I, phi, eta, args.tol, grid=args.grid)
    rep = crit.to_dict()
    if args.max_condition is not None and not (crit.nondegenerate and crit.condition < args.max_condition):
        raise ThresholdFailure(rep, f"critical point rank {crit.rank}, condition {crit.condition:.3g}")
    return rep


def cmd_reduced(rc, orb, args) -> dict:
    cfg = rc.system
    samples = []
    for Iv in args.I_grid:
        for th in args.theta_grid:
            s = reduced_potential(cfg, orb, np.full(cfg.d, Iv), np.full(cfg.d, th), tol=args.tol,
                                  grid=args.grid)
            samples.append(s.to_dict())
    norms = [float(np.max(np.abs(s["dtheta"]))) for s in samples]
    rep = {"samples": samples, "h4_min_dtheta_norm": min(norms)}
    if args.min_dtheta is not None and min(norms) < args.min_dtheta:
        raise ThresholdFailure(rep, f"min |dM*/dtheta| = {min(norms):.3g} below {args.min_dtheta:g}")
    return rep


def _splitting(rc, orb, args):
    cfg = rc.system
    I, phi, eta = _point(args, cfg)
    tau = _vec(args.tau, cfg.n, "--tau")
    return measure_splitting(cfg, orb, tau, I, phi, eta, args.eps, c=args.horizon_c, tol=args.tol)


def _check_slope(rep, fit, minimum, what):
    if minimum is not None and (fit is None or fit.slope < minimum):
        got = "n/a" if fit is None else f"{fit.slope:.3f}"
        raise ThresholdFailure(rep, f"{what} slope {got} below {minimum:g}")


def cmd_splitting(rc, orb, args) -> dict:
    sp = _splitting(rc, orb, args)
    rep = sp.to_dict()
    _check_slope(rep, sp.fit, args.min_slope, "splitting residual")
    return rep


def _jumps(rc, orb, args):
    cfg = rc.system
    I, phi, eta = _point(args, cfg)
    crit = find_critical_tau(cfg, orb, None, I, phi, eta, args.tol, grid=args.grid)
    reports = [action_jump(cfg, orb, crit, e, t=args.t, c=args.horizon_c, tol=args.tol) for e in args.jump_eps]
    fit = fit_order([r.eps for r in reports], np.array([r.residual for r in reports]))
    return crit, reports, fit


def cmd_jump(rc, orb, args) -> dict:
    crit, reports, fit = _jumps(rc, orb, args)
    rep = {
        "critical": crit.to_dict(),
        "reports": [dict(r.to_dict(), relative_error=r.relative_error) for r in reports],
        "fit": None if fit is None else fit.to_dict(),
    }
    if args.max_rel is not None:
        worst = max(r.relative_error for r in reports)
        if worst > args.max_rel:
            raise ThresholdFailure(rep, f"relative jump error {worst:.3g} above {args.max_rel:g}")
    _check_slope(rep, fit, args.min_slope, "jump residual")
    return rep


def cmd_additivity(rc, orb, args) -> dict:
    cfg = rc.system
    I, phi, eta = _point(args, cfg)
    lam = orb.lambda_plus
    rows = []
    for dT in args.delta_T:
        tau = np.arange(cfg.n) * dT / lam
        rows.append({"delta_T": dT, "tau": tau, "gap": additivity_gap(cfg, orb, tau, I, phi, eta, args.tol)})
    rep = {"delta_T_units": "1/lambda_plus", "rows": rows}
    if args.max_gap is not None:
        worst = max(r["gap"] for r in rows)
        if worst > args.max_gap:
            raise ThresholdFailure(rep, f"additivity gap {worst:.3g} above {args.max_gap:g}")
    return rep


def cmd_sweep(rc, orb, args) -> dict:
    sp = _splitting(rc, orb, args)
    rep = {"splitting": sp.to_dict()}
    jfit = None
    if rc.system.hamiltonian:
        crit, reports, jfit = _jumps(rc, orb, args)
        rep["jump"] = {
            "critical": crit.to_dict(),
            "reports": [dict(r.to_dict(), relative_error=r.relative_error) for r in reports],
            "fit": None if jfit is None else jfit.to_dict(),
        }
    else:
        rep["jump"] = None
        rep["jump_reason"] = "perturbation is not Hamiltonian: no reduced potential"
    _check_slope(rep, sp.fit, args.min_slope, "splitting residual")
    if jfit is not None:
        _check_slope(rep, jfit, args.min_slope, "jump residual")
    return rep


def cmd_export(rc, orb, args) -> dict:
    lam = orb.lambda_plus
    s = np.linspace(-args.span, args.span, args.points) / lam
    p, qc, _, _ = orb.states(np.zeros(orb.n), s)
    rows = [[float(sk)] + [v for i in range(orb.n) for v in (float(p[i, k]), float(qc[i, k] % 1.0))]
            for k, sk in enumerate(s)]
    header = ["s"] + [c for i in range(orb.n) for c in (f"p_{i + 1}", f"q_{i + 1}")]
    return {"header": header, "rows": rows, "lambda_plus": lam}


COMMANDS = {
    "eval": cmd_eval,
    "critical": cmd_critical,
    "reduced": cmd_reduced,
    "verify-splitting": cmd_splitting,
    "verify-jump": cmd_jump,
    "additivity": cmd_additivity,
    "sweep": cmd_sweep,
    "export-separatrix": cmd_export,
}


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------
def _csv_rows(command: str, rep: dict):
    if command == "export-separatrix":
        return rep["header"], rep["rows"]
    if command in ("verify-splitting", "sweep"):
        sp = rep["splitting"] if command == "sweep" else rep
        rows = []
        for k, e in enumerate(sp["eps"]):
            for i, (m, p, r) in enumerate(zip(sp["measured"][k], sp["predicted"][k], sp["residual"][k])):
                rows.append(["splitting", i + 1, e, m, p, r])
        jump = rep.get("jump") if command == "sweep" else None
        for jr in (jump or {}).get("reports", []):
            for j, (m, p, r) in enumerate(zip(jr["measured"], jr["predicted"], jr["residual"])):
                rows.append(["jump", j + 1, jr["eps"], m, p, r])
        return ["quantity", "component", "eps", "measured", "predicted", "residual"], rows
    if command == "verify-jump":
        rows = [[jr["eps"], j + 1, m, p, r] for jr in rep["reports"]
                for j, (m, p, r) in enumerate(zip(jr["measured"], jr["predicted"], jr["residual"]))]
        return ["eps", "component", "measured", "predicted", "residual"], rows
    if command == "additivity":
        return ["delta_T", "gap"], [[r["delta_T"], r["gap"]] for r in rep["rows"]]
    if command == "reduced":
        rows = [[s["I"][0], s["theta"][0], s["value"], *s["dtheta"], *s["dI"]] for s in rep["samples"]]
        d = len(rep["samples"][0]["dtheta"]) if rep["samples"] else 1
        return (["I", "theta", "value"] + [f"dtheta_{j + 1}" for j in range(d)]
                + [f"dI_{j + 1}" for j in range(d)]), rows
    raise ConfigError(f"command {command!r} has no CSV form; use --format json")


def render(command: str, rep: dict, rc, fmt: str, status: str) -> str:
    if fmt == "csv":
        header, rows = _csv_rows(command, _jsonable(rep))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()
    doc = {
        "command": command,
        "config_hash": rc.hash,
        "version": __version__,
        "status": status,
        "result": _jsonable(rep),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="melnikovkit", description="Melnikov vector toolkit for penduli-rotator systems.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, point=True):
        p.add_argument("config", help="TOML system configuration")
        p.add_argument("--tol", type=float, default=None, help=f"quadrature tolerance (default {DEFAULT_TOL:g})")
        p.add_argument("--format", choices=("json", "csv"), default=None)
        p.add_argument("-o", "--output", default=None, help="write to file instead of stdout")
        p.add_argument("--numeric-separatrix", action="store_true", help="tabulate loops numerically")
        if point:
            p.add_argument("--I", type=_floats, default=[0.2], help="action(s), comma separated")
            p.add_argument("--phi", type=_floats, default=[0.0], help="angle(s)")
            p.add_argument("--t", type=float, default=0.0, help="time: clock state reached from eta0")
            p.add_argument("--eta", type=_floats, default=None, help="clock state (overrides --t)")
            p.add_argument("--grid", type=int, default=None, help="seed grid per tau axis (default 8)")

    def shooting(p):
        p.add_argument("--tau", type=_floats, default=[0.3])
        p.add_argument("--eps", type=_floats, default=None,
                       help="eps list (default 0.01,0.005,0.0025,0.00125)")
        p.add_argument("--horizon-c", type=float, default=None, help="T = c log(1/eps)/lambda (default 3)")
        p.add_argument("--min-slope", type=float, default=None, help="fail (exit 4) below this slope")

    p = sub.add_parser("eval", help="Melnikov vector and potential at one point")
    common(p)
    p.add_argument("--tau", type=_floats, default=[0.0])

    p = sub.add_parser("critical", help="non-degenerate zero tau* of the Melnikov vector")
    common(p)
    p.add_argument("--tau-guess", type=_floats, default=None)
    p.add_argument("--max-condition", type=float, default=None, help="fail (exit 4) above this condition")

    p = sub.add_parser("reduced", help="reduced potential on an (I, theta) grid")
    common(p, point=False)
    p.add_argument("--I-grid", type=_range, default=np.array([0.2]), dest="I_grid")
    p.add_argument("--theta-grid", type=_range, default=np.linspace(0.0, 0.9, 10), dest="theta_grid")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--min-dtheta", type=float, default=None, help="fail (exit 4) below this H4 margin")

    p = sub.add_parser("verify-splitting", help="direct splitting measurement against eps*Mv")
    common(p)
    shooting(p)

    p = sub.add_parser("verify-jump", help="direct action-jump measurement")
    common(p)
    p.add_argument("--jump-eps", type=_floats, default=None, help="eps list (default 0.001)")
    p.add_argument("--horizon-c", type=float, default=None)
    p.add_argument("--max-rel", type=float, default=None, help="fail (exit 4) above this relative error")
    p.add_argument("--min-slope", type=float, default=None)

    p = sub.add_parser("additivity", help="gap between the potential and the sum of single-pendulum parts")
    common(p)
    p.add_argument("--delta-T", type=_floats, default=[2.0, 4.0, 6.0, 8.0, 10.0], dest="delta_T",
                   help="loop-phase separations in units of 1/lambda_plus")
    p.add_argument("--max-gap", type=float, default=None)

    p = sub.add_parser("sweep", help="splitting and jump sweeps with order fits")
    common(p)
    shooting(p)
    p.add_argument("--jump-eps", type=_floats, default=None,
                   help="jump eps list (default 0.004,0.002,0.001,0.0005)")

    p = sub.add_parser("export-separatrix", help="tabulate the homoclinic loops as CSV")
    common(p, point=False)
    p.add_argument("--span", type=float, default=12.0, help="half-width in units of 1/lambda_plus")
    p.add_argument("--points", type=int, default=1201)
    return ap


def _apply_run_defaults(args, rc):
    run = rc.run
    if args.tol is None:
        args.tol = run.get("tol", DEFAULT_TOL)
    if args.format is None:
        args.format = run.get("format", "csv" if args.command == "export-separatrix" else "json")
    if args.output is None:
        args.output = run.get("output")
    if getattr(args, "grid", "-") is None:
        args.grid = run.get("grid", 8)
    if getattr(args, "horizon_c", "-") is None:
        args.horizon_c = run.get("horizon_c", 3.0)
    if getattr(args, "eps", "-") is None:
        args.eps = run.get("eps_list", [0.01, 0.005, 0.0025, 0.00125])
    if getattr(args, "jump_eps", "-") is None:
        args.jump_eps = [0.004, 0.002, 0.001, 0.0005] if args.command == "sweep" else [0.001]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = load(args.config)
        _apply_run_defaults(args, rc)
        orb = build_separatrix(rc.system.penduli, numeric=args.numeric_separatrix)
    except (ConfigError, OSError) as err:
        print(f"melnikovkit: configuration error: {err}", file=sys.stderr)
        return EXIT_PARSE
    code, status = EXIT_OK, "ok"
    try:
        rep = COMMANDS[args.command](rc, orb, args)
    except ConfigError as err:
        print(f"melnikovkit: configuration error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except ThresholdFailure as fail:
        rep, code, status = fail.report, EXIT_THRESHOLD, f"threshold failed: {fail}"
        print(f"melnikovkit: {fail}", file=sys.stderr)
    except NUMERIC_ERRORS as err:
        print(f"melnikovkit: numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        text = render(args.command, rep, rc, args.format, status)
    except ConfigError as err:
        print(f"melnikovkit: {err}", file=sys.stderr)
        return EXIT_PARSE
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
