"""Command-line interface: ``qldev <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input, 3 capacity exceeded. Errors are
printed to stderr as one line of JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from .errors import CapacityError, QLDevError, ValidationError

__all__ = ["main", "run", "build_parser", "parse_ngrid", "parse_floats", "fmt"]


class CliUsageError(ValidationError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def fmt(x) -> str:
    """Locale-independent 12-significant-digit rendering."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(format(x, ".12g"))
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True)


def parse_ngrid(text: str) -> tuple:
    """``start:stop:step`` (inclusive stop) or a comma list of integers."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            grid = tuple(range(start, stop + 1, step))
        else:
            grid = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise CliUsageError(f"invalid n grid {text!r}; expected start:stop:step") from None
    if not grid or grid[0] <= 0:
        raise CliUsageError(f"n grid {text!r} is empty or non-positive")
    return grid


def parse_floats(text: str) -> tuple:
    try:
        vals = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise CliUsageError(f"invalid number list {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise CliUsageError(f"non-finite value in {text!r}")
    return vals


# -- parser ------------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (overridden by QLDEV_SEED)")
    p.add_argument("--workers", type=int, default=1, help="worker hint; never changes results")
    p.add_argument("--output", "-o", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved plan only")


def _family_args(p, default="equatorial"):
    p.add_argument("--family", choices=("equatorial", "gaussian", "diagonal"), default=default)
    p.add_argument("--r", type=float, default=0.5, help="Bloch radius of the equatorial family")
    p.add_argument("--nbar", type=float, default=1.0, help="thermal photon number of the Gaussian family")
    p.add_argument("--trunc", type=int, default=None, help="Fock truncation (default: automatic)")
    p.add_argument("--theta-max", type=float, default=2.0, help="Gaussian parameter range |theta| <= max")
    p.add_argument("--half-line", action="store_true", help="Gaussian family on theta >= 0")
    p.add_argument("--statistic", type=parse_floats, default=(0.0, 1.0), help="diagonal family statistic")


def _strategy_args(p):
    from .estimation.strategies import STRATEGY_NAMES

    p.add_argument("--strategy", choices=STRATEGY_NAMES, required=True)
    p.add_argument("--theta", type=float, required=True, help="true parameter")
    p.add_argument("--theta0", type=float, default=None, help="reference parameter (default: --theta)")
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--m", type=int, default=2, help="block size of the m-adaptive strategy")
    p.add_argument("--eps", type=parse_floats, default=(0.5,))
    p.add_argument("--ngrid", type=parse_ngrid, default=(50, 100, 150, 200))
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--sampling", choices=("auto", "plain", "importance"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qldev", description="Quantum Fisher information and estimation exponents.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("metrics", help="Fisher informations and divergences of a family at theta")
    _family_args(p)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--theta-prime", type=float, default=None, help="second point for D, Bures and affinity")
    p.add_argument("--povm", default=None, help="JSON POVM file; adds induced classical quantities")
    _common(p)

    p = sub.add_parser("limits", help="finite-difference table converging to the Fisher informations")
    _family_args(p)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--eps", type=parse_floats, default=(1e-1, 1e-2, 1e-3))
    _common(p)

    p = sub.add_parser("simulate", help="Monte-Carlo tail probabilities of an estimation strategy")
    _family_args(p)
    _strategy_args(p)
    _common(p)

    p = sub.add_parser("rates", help="exponents beta(eps), alpha and theoretical bounds")
    _family_args(p)
    _strategy_args(p)
    _common(p)

    p = sub.add_parser("schur", help="relative-entropy sandwich of the Schur-Weyl measurement")
    _family_args(p)
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--theta1", type=float, required=True)
    p.add_argument("--m-max", type=int, default=6)
    _common(p)

    p = sub.add_parser("bounds", help="J/2, J~/2 and the inf-D exponent bound")
    _family_args(p)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--eps", type=parse_floats, default=(0.5,))
    _common(p)

    p = sub.add_parser("expfam", help="classical exponential family rates and tail simulation")
    p.add_argument("--family", choices=("bernoulli", "multinomial"), default="bernoulli")
    p.add_argument("--p", type=parse_floats, default=(0.4,),
                   help="success probability (bernoulli) or outcome probabilities (multinomial)")
    p.add_argument("--statistic-index", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.6, help="event {mean >= threshold}")
    p.add_argument("--rate", action="store_true", help="print the Cramer rate")
    p.add_argument("--simulate", action="store_true", help="print Monte-Carlo tail estimates")
    p.add_argument("--ngrid", type=parse_ngrid, default=(200, 400, 600, 800, 1000))
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--plain", action="store_true", help="plain Monte Carlo instead of tilted sampling")
    _common(p)
    return parser


# -- builders ------------------------------------------------------------------------

def _family(args, default_half_line=False):
    from .families import make_family

    return make_family(args.family, r=args.r, nbar=args.nbar, trunc=args.trunc, theta_max=args.theta_max,
                       half_line=args.half_line or default_half_line, statistic=args.statistic)


def _family_plan(args):
    plan = {"family": args.family}
    if args.family == "equatorial":
        plan["r"] = args.r
    elif args.family == "gaussian":
        plan.update(nbar=args.nbar, trunc=args.trunc, theta_max=args.theta_max, half_line=args.half_line)
    else:
        plan["statistic"] = list(args.statistic)
    return plan


def _strategy(args):
    from .estimation.strategies import make_strategy

    theta0 = args.theta if args.theta0 is None else args.theta0
    return make_strategy(args.strategy, theta0=theta0, delta=args.delta, m=args.m, nbar=args.nbar)


def _sim_family(args):
    if args.strategy.startswith("gaussian"):
        args.family = "gaussian"
        return _family(args, default_half_line=args.strategy == "gaussian-number")
    return _family(args)


def _sim_config(args):
    from .estimation import SimulationConfig

    return SimulationConfig(args.ngrid, args.trials, args.seed, args.eps, args.workers, args.sampling)


# -- commands ------------------------------------------------------------------------

def cmd_metrics(args):
    from .measurement import induced_classical_quantities, povm_from_json
    from .qmetrics import affinity, bures_distance, fisher_report

    fam = _family(args)
    if args.dry_run:
        return {"command": "metrics", **_family_plan(args), "theta": args.theta, "theta_prime": args.theta_prime,
                "povm": args.povm}
    rho = fam.state(args.theta)
    rep = fisher_report(rho, fam.derivative(args.theta))
    out = {"theta": args.theta, "j_sld": rep.j_sld, "j_kmb": rep.j_kmb, "j_rld": rep.j_rld}
    if args.theta_prime is not None:
        sig = fam.state(args.theta_prime)
        out.update(theta_prime=args.theta_prime, relative_entropy=fam.relative_entropy(args.theta, args.theta_prime),
                   bures=bures_distance(rho, sig), affinity=affinity(rho, sig))
    if args.povm:
        try:
            with open(args.povm, encoding="utf-8") as fh:
                m = povm_from_json(fh.read())
        except OSError as exc:
            raise ValidationError(f"cannot read POVM file: {exc}") from exc
        tp = args.theta if args.theta_prime is None else args.theta_prime
        out["induced"] = induced_classical_quantities(m, fam, args.theta, tp)
    return out


def cmd_limits(args):
    from .qmetrics import limit_table

    fam = _family(args)
    if args.dry_run:
        return {"command": "limits", **_family_plan(args), "theta": args.theta, "eps": list(args.eps)}
    return [r.as_dict() for r in limit_table(fam, args.theta, args.eps)]


def _plan_sim(args, command):
    return {"command": command, "strategy": args.strategy, "theta": args.theta,
            "theta0": args.theta if args.theta0 is None else args.theta0, "delta": args.delta, "m": args.m,
            "nbar": args.nbar, "eps": list(args.eps), "ngrid": list(args.ngrid), "trials": args.trials,
            "seed": args.seed, "sampling": args.sampling, **_family_plan(args)}


def cmd_simulate(args):
    from .estimation import simulate_tail

    fam = _sim_family(args)
    strat = _strategy(args)
    cfg = _sim_config(args)
    for n in cfg.n_grid:
        strat.check(fam, n)
    if args.dry_run:
        return _plan_sim(args, "simulate")
    rows = []
    for e in simulate_tail(strat, fam, args.theta, cfg):
        rows.append({"strategy": strat.name, "theta_true": args.theta, "epsilon": e.eps, "n": e.n,
                     "trials": e.trials, "hits": e.hits, "p_hat": e.p_hat, "wilson_lo": e.wilson_lo,
                     "wilson_hi": e.wilson_hi})
    return rows


def cmd_rates(args):
    from .estimation import rate_curve, simulate_tail

    fam = _sim_family(args)
    strat = _strategy(args)
    cfg = _sim_config(args)
    for n in cfg.n_grid:
        strat.check(fam, n)
    if args.dry_run:
        return _plan_sim(args, "rates")
    est = simulate_tail(strat, fam, args.theta, cfg)
    curve = rate_curve(est, fam, args.theta)
    return {"strategy": strat.name, "theta_true": args.theta, **curve.as_dict()}


def cmd_schur(args):
    from .repdecomp import sandwich_row

    fam = _family(args)
    if fam.dim != 2:
        raise ValidationError("schur requires a qubit family")
    if not 1 <= args.m_max <= 10:
        raise CapacityError("--m-max must lie in 1..10")
    if args.dry_run:
        return {"command": "schur", **_family_plan(args), "theta0": args.theta0, "theta1": args.theta1,
                "m_max": args.m_max}
    return [sandwich_row(fam, args.theta0, args.theta1, m) for m in range(1, args.m_max + 1)]


def cmd_bounds(args):
    from .estimation import theoretical_bounds

    fam = _family(args)
    if args.dry_run:
        return {"command": "bounds", **_family_plan(args), "theta": args.theta, "eps": list(args.eps)}
    return [{"eps": e, **theoretical_bounds(fam, args.theta, e)} for e in args.eps]


def cmd_expfam(args):
    from .expfam import ExponentialFamily, cramer_rate, mean_tail_monte_carlo

    if args.family == "bernoulli":
        if len(args.p) != 1 or not 0 < args.p[0] < 1:
            raise ValidationError("bernoulli needs one probability in (0, 1)")
        probs = np.array([1 - args.p[0], args.p[0]])
        stats = np.array([[0.0, 1.0]])
    else:
        probs = np.asarray(args.p, dtype=float)
        if probs.size < 2 or np.any(probs <= 0) or abs(probs.sum() - 1) > 1e-9:
            raise ValidationError("multinomial needs >= 2 positive probabilities summing to 1")
        stats = np.eye(probs.size)[1:]
    fam = ExponentialFamily(stats, probs)
    if not 0 <= args.statistic_index < fam.d:
        raise ValidationError(f"statistic index must lie in 0..{fam.d - 1}")
    if args.trials <= 0:
        raise ValidationError("trials must be positive")
    if args.dry_run:
        return {"command": "expfam", "family": args.family, "p": list(args.p), "threshold": args.threshold,
                "rate": args.rate, "simulate": args.simulate, "ngrid": list(args.ngrid), "trials": args.trials,
                "seed": args.seed}
    theta0 = np.zeros(fam.d)
    rate = cramer_rate(fam, theta0, args.statistic_index, args.threshold)
    if args.simulate:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
        rows = mean_tail_monte_carlo(fam, theta0, args.statistic_index, args.threshold, args.ngrid,
                                     args.trials, rng, importance=not args.plain)
        return [{"n": r["n"], "p_hat": r["p_hat"], "rate_n": r["rate_n"]} for r in rows]
    return {"family": args.family, "threshold": args.threshold, "rate": rate}


COMMANDS = {
    "metrics": (cmd_metrics, "json"),
    "limits": (cmd_limits, "csv"),
    "simulate": (cmd_simulate, "csv"),
    "rates": (cmd_rates, "json"),
    "schur": (cmd_schur, "csv"),
    "bounds": (cmd_bounds, "json"),
    "expfam": (cmd_expfam, "csv"),
}


def render(result, fmt_name: str) -> str:
    if fmt_name == "json" or not isinstance(result, list):
        return dump_json(result) + "\n"
    buf = io.StringIO()
    if not result:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    cols = list(result[0].keys())
    w.writerow(cols)
    for row in result:
        w.writerow([fmt(row[c]) if row[c] is not None else "" for c in cols])
    return buf.getvalue()


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:          # --help
            return int(exc.code or 0)
        env_seed = os.environ.get("QLDEV_SEED")
        if env_seed is not None:
            try:
                args.seed = int(env_seed)
            except ValueError:
                raise ValidationError(f"QLDEV_SEED is not an integer: {env_seed!r}") from None
        if not 0 <= args.seed < 2**64:
            raise ValidationError("seed must lie in [0, 2^64)")
        if args.workers is not None and args.workers < 1:
            raise ValidationError("--workers must be positive")
        func, default_fmt = COMMANDS[args.command]
        result = func(args)
        text = render(result, "json" if args.dry_run else (args.format or default_fmt))
        if args.output == "-":
            stdout.write(text)
        else:
            with open(args.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return 0
    except QLDevError as exc:
        stderr.write(json.dumps(exc.to_dict()) + "\n")
        return exc.exit_code
    except OSError as exc:
        stderr.write(json.dumps({"error": "io", "message": str(exc)}) + "\n")
        return 2


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    raise SystemExit(main())
