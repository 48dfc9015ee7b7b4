"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
runtime failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import RNG_NAME, ConfigError, SimConfig, snapshot_grid
from .io import (
    PlotError,
    emit_plot,
    read_kv_file,
    write_manifest,
    write_table,
    write_timeseries_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _lam(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("lambda must be >= 0")
    return v


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--config", help="flat 'key = value' file; command-line flags take precedence")
    p.add_argument("--out", default=out_default, help="output CSV path (default: %(default)s)")
    p.add_argument("--no-manifest", action="store_true", help="skip the .manifest sidecar")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twosite", description="Two-site coagulation with migration: "
                     "particle simulation, deterministic limits and comparisons.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("mc", help="stochastic particle simulation")
    p.add_argument("--n0", type=int, default=None, help="monomers at site 0")
    p.add_argument("--n1", type=int, default=0, help="monomers at site 1 (default: %(default)s)")
    p.add_argument("--kappa", type=float, default=0.0, help="migration rate per particle (default: %(default)s)")
    p.add_argument("--t-end", type=float, default=1.0, help="rescaled-time horizon (default: %(default)s)")
    p.add_argument("--dt", type=float, default=0.1, help="snapshot spacing (default: %(default)s)")
    p.add_argument("--snapshots", type=_float_list, default=None, help="explicit snapshot times, comma separated")
    p.add_argument("--seed", type=int, default=0, help="RNG seed; replica r uses seed + r (default: %(default)s)")
    p.add_argument("--gel-threshold-factor", type=float, default=2.0,
                   help="gel flag when max mass >= factor * N^(2/3) (default: %(default)s)")
    p.add_argument("--max-events", type=int, default=None, help="event cap (default: 64 N (1 + kappa t_end))")
    p.add_argument("--replicas", type=int, default=1, help="independent replicas (default: %(default)s)")
    p.add_argument("--workers", type=int, default=1, help="threads for replicas (default: %(default)s)")
    _common(p, "mc.csv")

    p = sub.add_parser("ode", help="truncated deterministic system")
    p.add_argument("--b", type=int, default=512, help="cutoff mass B (default: %(default)s)")
    p.add_argument("--lambda", dest="lam", type=_lam, default=0.0, help="initial ratio n1/n0 (default: %(default)s)")
    p.add_argument("--kappa", type=float, default=0.0, help="(default: %(default)s)")
    p.add_argument("--t-end", type=float, default=1.0, help="(default: %(default)s)")
    p.add_argument("--dt", type=float, default=0.1, help="output spacing (default: %(default)s)")
    p.add_argument("--spectrum", type=int, default=10, help="write c_1..c_K columns (default: %(default)s)")
    p.add_argument("--rtol", type=float, default=1e-8, help="(default: %(default)s)")
    p.add_argument("--atol", type=float, default=1e-12, help="(default: %(default)s)")
    _common(p, "ode.csv")

    p = sub.add_parser("moments", help="second-moment system and gelation time")
    p.add_argument("--lambda", dest="lam", type=_lam, default=0.0, help="(default: %(default)s)")
    p.add_argument("--kappa", type=float, default=0.0, help="(default: %(default)s)")
    p.add_argument("--x-cap", type=float, default=1e8, help="stop when max(x, y) reaches this (default: %(default)g)")
    p.add_argument("--method", choices=("reciprocal", "two_point"), default="reciprocal",
                   help="blow-up extrapolation (default: %(default)s)")
    p.add_argument("--rtol", type=float, default=1e-8, help="(default: %(default)s)")
    p.add_argument("--atol", type=float, default=1e-12, help="(default: %(default)s)")
    _common(p, "moments.csv")

    p = sub.add_parser("meanfield", help="closed-form one-site curves")
    p.add_argument("--t-max", type=float, default=3.0, help="(default: %(default)s)")
    p.add_argument("--dt", type=float, default=0.01, help="(default: %(default)s)")
    p.add_argument("--grid", action="store_true", help="write the u(x, t) grid instead of the curves")
    p.add_argument("--x-max", type=float, default=1.0, help="grid x range upper end, <= 1 (default: %(default)s)")
    p.add_argument("--dx", type=float, default=0.05, help="grid x spacing (default: %(default)s)")
    _common(p, "meanfield.csv")

    p = sub.add_parser("postgel", help="sample the post-gelation limit model")
    p.add_argument("--lambda", dest="lam", type=_lam, default=0.0, help="(default: %(default)s)")
    p.add_argument("--kappa", type=float, default=0.0, help="(default: %(default)s)")
    p.add_argument("--b", type=int, default=2048, help="cutoff mass B (default: %(default)s)")
    p.add_argument("--t-end", type=float, default=2.0, help="(default: %(default)s)")
    p.add_argument("--dt", type=float, default=0.01, help="output spacing (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    p.add_argument("--rtol", type=float, default=1e-8, help="(default: %(default)s)")
    p.add_argument("--atol", type=float, default=1e-12, help="(default: %(default)s)")
    _common(p, "postgel.csv")

    p = sub.add_parser("compare", help="particle simulation against the truncated system")
    p.add_argument("--n0", type=int, default=None, help="monomers at site 0 (or use --n with --lambda)")
    p.add_argument("--n1", type=int, default=None, help="monomers at site 1")
    p.add_argument("--n", type=int, default=None, help="total monomers, split by --lambda")
    p.add_argument("--lambda", dest="lam", type=_lam, default=None, help="ratio used with --n")
    p.add_argument("--kappa", type=float, default=0.0, help="(default: %(default)s)")
    p.add_argument("--b", type=int, default=512, help="(default: %(default)s)")
    p.add_argument("--times", type=_float_list, default=None, help="comparison times, comma separated")
    p.add_argument("--t-frac", type=_float_list, default=None,
                   help="comparison times as fractions of the estimated gelation time")
    p.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    p.add_argument("--rtol", type=float, default=1e-8, help="(default: %(default)s)")
    p.add_argument("--atol", type=float, default=1e-12, help="(default: %(default)s)")
    _common(p, "compare.csv")

    p = sub.add_parser("plot", help="line chart (SVG) from any CSV written by this tool")
    p.add_argument("--csv", required=True, help="input CSV")
    p.add_argument("--columns", type=_str_list, required=True, help="y columns, comma separated")
    p.add_argument("--x", default="t", help="x column (default: %(default)s)")
    p.add_argument("--logy", action="store_true", help="logarithmic y axis")
    p.add_argument("--title", default="", help="chart title")
    p.add_argument("--out", default="plot.svg", help="output SVG (default: %(default)s)")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_config(argv: Sequence[str]):
    """Parse ``argv`` (and an optional config file) into (command, namespace).

    Config-file keys use the long flag names (dashes or underscores); unknown
    keys are rejected.  Command-line flags override the file.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip() + "\ntwosite: error: a subcommand is required")
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        sp = _subparser(parser, args.command)
        allowed = {a.dest for a in sp._actions if a.dest not in ("help", "config")}
        aliases = {"lambda": "lam"}
        try:
            raw = read_kv_file(cfg_path)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}")
        except ValueError as exc:
            raise UsageError(str(exc))
        kv = {}
        for key, value in raw.items():
            dest = aliases.get(key, key)
            if dest not in allowed:
                raise UsageError(f"{cfg_path}: unknown key {key!r} for '{args.command}'")
            kv[dest] = value
        # defaults given as strings go through each option's type conversion
        for a in sp._actions:
            if a.dest in kv and a.nargs == 0:
                kv[a.dest] = kv[a.dest].lower() in ("1", "true", "yes", "on")
        sp.set_defaults(**kv)
        args = parser.parse_args(argv)
    return args.command, args


def sim_config_from_args(args) -> SimConfig:
    if args.n0 is None:
        raise ConfigError("--n0 is required")
    t_end = args.t_end
    snaps = tuple(args.snapshots) if args.snapshots else snapshot_grid(t_end, args.dt)
    return SimConfig(n0=args.n0, n1=args.n1, kappa=args.kappa, t_end=t_end, seed=args.seed,
                     snapshot_times=snaps, gel_threshold_factor=args.gel_threshold_factor,
                     max_events=args.max_events)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _params(args) -> Dict[str, object]:
    skip = {"command", "config", "out", "no_manifest"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def _finish(args, command: str, outputs: List[Path], started: str, seeds: Sequence[int] = (),
            extra: Optional[Dict[str, object]] = None) -> None:
    if getattr(args, "no_manifest", False):
        return
    fields = {"tool": "twosite", "version": __version__, "subcommand": command}
    if seeds:
        fields["seeds"] = ",".join(str(s) for s in seeds)
        fields["rng"] = RNG_NAME
    fields.update(extra or {})
    fields["started"] = started
    fields["finished"] = _now()
    write_manifest(Path(str(outputs[0]) + ".manifest"), fields, _params(args), outputs)


def _stem_path(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix + (out.suffix or ".csv"))


# --- subcommands ------------------------------------------------------------

def cmd_mc(args) -> None:
    from .mc import replica_seed, run_replicas, run_mc

    started = _now()
    cfg = sim_config_from_args(args)
    if args.replicas < 1:
        raise ConfigError("--replicas must be >= 1")
    out = Path(args.out)
    gel_path = _stem_path(out, "_gel")
    gel_header = ("replica", "seed", "t_gel_0", "t_gel_1", "delay", "sigma_reduced_0", "sigma_reduced_1")
    if args.replicas == 1:
        res = run_mc(cfg)
        write_timeseries_csv(res.records, out)
        results, seeds = [res], [cfg.seed]
    else:
        summary = run_replicas(cfg, args.replicas, workers=args.workers, keep_results=True)
        fields = ("particle_count", "mass_frac", "sigma_hat", "rho_hat", "max_mass", "gelled")
        header = ["t", "site"] + [f"{f}_{s}" for f in fields for s in ("mean", "se")]
        rows = []
        for k, t in enumerate(summary.times):
            for j in (0, 1):
                row = [float(t), j]
                for f in fields:
                    row += [float(summary.mean[f][k, j]), float(summary.stderr[f][k, j])]
                rows.append(row)
        write_table(out, header, rows)
        results, seeds = summary.results, summary.seeds
    gel_rows = []
    for r, res in enumerate(results):
        g = res.gel
        gel_rows.append((r, replica_seed(cfg, r), g.t_gel[0], g.t_gel[1], g.delay, *g.sigma_reduced))
    write_table(gel_path, gel_header, gel_rows)
    _finish(args, "mc", [out, gel_path], started, seeds,
            {"gel_threshold": cfg.gel_threshold, "events": ",".join(str(r.events) for r in results)})


def cmd_ode(args) -> None:
    from .odes import integrate_truncated, monodisperse, per_site_mass, sigma_of_truncated

    started = _now()
    if args.b < 2:
        raise ConfigError("--b must be >= 2")
    if args.kappa < 0 or args.t_end < 0:
        raise ConfigError("kappa and t_end must be >= 0")
    times = snapshot_grid(args.t_end, args.dt)
    traj = integrate_truncated(monodisperse(args.b, args.lam), args.kappa, args.t_end, times=times,
                               rtol=args.rtol, atol=args.atol)
    k = max(0, min(args.spectrum, args.b - 1))
    header = ["t", "site", "mass", "sigma", "c_b0"] + [f"c_{i}" for i in range(1, k + 1)]
    rows = []
    for st in traj.states:
        m, s = per_site_mass(st), sigma_of_truncated(st)
        for j in (0, 1):
            rows.append([st.t, j, m[j], s[j], st.c_b0] + [float(v) for v in st.c[j, 1:k + 1]])
    out = Path(args.out)
    write_table(out, header, rows)
    _finish(args, "ode", [out], started, extra={"mass_drift": "%.3g" % traj.mass_drift()})


def cmd_moments(args) -> None:
    from .odes import solve_moments

    started = _now()
    traj, gel = solve_moments(args.lam, args.kappa, x_cap=args.x_cap, rtol=args.rtol, atol=args.atol,
                              method=args.method)
    out = Path(args.out)
    write_table(out, ("t", "x", "y"), zip(traj.t, traj.x, traj.y))
    print("t_gel_hat = %.12g" % gel.t_gel_hat)
    _finish(args, "moments", [out], started,
            extra={"t_gel_hat": "%.12g" % gel.t_gel_hat, "t_stop": "%.12g" % gel.t_stop, "method": gel.method})


def cmd_meanfield(args) -> None:
    from .meanfield import gel_fraction, sigma_meanfield, solve_u

    started = _now()
    if args.t_max < 0 or args.dt <= 0:
        raise ConfigError("need t_max >= 0 and dt > 0")
    ts = snapshot_grid(args.t_max, args.dt)
    out = Path(args.out)
    if args.grid:
        if not 0 <= args.x_max <= 1 or args.dx <= 0:
            raise ConfigError("need 0 <= x_max <= 1 and dx > 0")
        xs = snapshot_grid(args.x_max, args.dx)
        write_table(out, ("t", "x", "u"), ((t, x, solve_u(x, t)) for t in ts for x in xs))
    else:
        write_table(out, ("t", "gel_fraction", "sigma"), ((t, gel_fraction(t), sigma_meanfield(t)) for t in ts))
    _finish(args, "meanfield", [out], started)


def cmd_postgel(args) -> None:
    from .postgel import simulate_limit

    started = _now()
    if args.b < 2 or args.kappa < 0 or args.t_end < 0:
        raise ConfigError("need b >= 2, kappa >= 0, t_end >= 0")
    ts = snapshot_grid(args.t_end, args.dt)
    tr = simulate_limit(args.lam, args.kappa, args.b, args.t_end, seed=args.seed, rtol=args.rtol,
                        atol=args.atol, times=ts)
    out = Path(args.out)
    rows = []
    for k, t in enumerate(tr.times):
        for j in (0, 1):
            rows.append((float(t), j, tr.zeta_inf[k, j], tr.sigma[k, j], tr.rho[k, j], tr.finite_mass[k, j]))
    write_table(out, ("t", "site", "zeta_inf", "sigma", "rho", "finite_mass"), rows)
    jumps = _stem_path(out, "_jumps")
    write_table(jumps, ("t", "site", "mass"), ((jr.t, jr.site, jr.mass) for jr in tr.jumps))
    _finish(args, "postgel", [out, jumps], started, [args.seed])


def cmd_compare(args) -> None:
    from .compare import compare
    from .odes import solve_moments

    started = _now()
    if args.n0 is not None:
        n0, n1 = args.n0, args.n1 or 0
    elif args.n is not None and args.lam is not None:
        n0 = int(round(args.n / (1.0 + args.lam)))
        n1 = args.n - n0
    else:
        raise ConfigError("give --n0 [--n1] or --n with --lambda")
    if (args.times is None) == (args.t_frac is None):
        raise ConfigError("give exactly one of --times and --t-frac")
    lam = n1 / n0 if n0 else float("inf")
    if args.t_frac is not None:
        _, gel = solve_moments(lam, args.kappa)
        times = [f * gel.t_gel_hat for f in args.t_frac]
    else:
        times = list(args.times)
    cfg = SimConfig(n0=n0, n1=n1, kappa=args.kappa, t_end=max(times), seed=args.seed,
                    snapshot_times=tuple(times), cutoff_b=args.b, rtol=args.rtol, atol=args.atol)
    rep = compare(cfg)
    out = Path(args.out)
    rows = [(float(t), j, rep.deviation[k, j], rep.c_b0[k], rep.t_gel_hat)
            for k, t in enumerate(rep.times) for j in (0, 1)]
    write_table(out, ("t", "site", "deviation", "c_b0", "t_gel_hat"), rows)
    _finish(args, "compare", [out], started, [args.seed])


def cmd_plot(args) -> None:
    emit_plot(args.csv, args.columns, args.out, x=args.x, logy=args.logy, title=args.title)


COMMANDS = {"mc": cmd_mc, "ode": cmd_ode, "moments": cmd_moments, "meanfield": cmd_meanfield,
            "postgel": cmd_postgel, "compare": cmd_compare, "plot": cmd_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .compare import PostGelComparisonError

    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        command, args = parse_config(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:     # --help / --version
        return int(exc.code or 0)
    try:
        COMMANDS[command](args)
    except (ConfigError, PlotError, PostGelComparisonError) as exc:
        print(f"twosite {command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError, ArithmeticError, ValueError) as exc:
        print(f"twosite {command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
