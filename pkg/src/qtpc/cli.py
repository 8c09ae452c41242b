"""Command line: ``qtpc run | zoo list | verify | sweep``."""

import argparse
import sys

from . import __version__
from .harness import (
    EXIT_ASSERTION,
    EXIT_DIM_CAP,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    DimensionCapError,
    ExperimentConfig,
    render,
    run_experiment,
    verify_family,
    write_atomic,
)
from .zoo import DEFAULT_DIM_CAP, FAMILIES


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def parse_grid(spec: str) -> dict:
    """``"leak=0,0.1;meas=0,0.05"`` -> {"theta_leak": [...], "theta_meas": [...]}."""
    keys = {"leak": "theta_leak", "meas": "theta_meas", "theta_leak": "theta_leak", "theta_meas": "theta_meas"}
    grid = {}
    for part in filter(None, (s.strip() for s in spec.split(";"))):
        name, sep, values = part.partition("=")
        if not sep or name.strip() not in keys:
            raise ConfigError(f"bad grid part {part!r}; expected leak=... or meas=...")
        try:
            grid[keys[name.strip()]] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad number in grid part {part!r}") from None
    if not grid:
        raise ConfigError("empty grid")
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qtpc", description="EPR cheating attacks on quantum two-party computations")
    parser.add_argument("--version", action="version", version=f"qtpc {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="report path (default: config output.path or stdout)")

    zoo = sub.add_parser("zoo", help="inspect protocol families")
    zoo.add_argument("action", choices=["list"])

    ver = sub.add_parser("verify", help="run the invariant suite for one family")
    ver.add_argument("--family", required=True)
    ver.add_argument("--n", type=int, default=2)
    ver.add_argument("--m", type=int, default=2)
    ver.add_argument("--p", type=int, default=2)
    ver.add_argument("--k", type=int, default=1)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--theta-leak", type=float, default=0.1)
    ver.add_argument("--theta-meas", type=float, default=0.1)
    ver.add_argument("--dim-cap", type=int, default=DEFAULT_DIM_CAP)

    sw = sub.add_parser("sweep", help="noise sweep with the sequential attack")
    sw.add_argument("--family", required=True, choices=["noisy"])
    sw.add_argument("--grid", required=True, help='e.g. "leak=0,0.1,0.2;meas=0,0.1"')
    sw.add_argument("--base", default="oblivious-id", help="noise-free base family")
    sw.add_argument("--n", type=int, default=4)
    sw.add_argument("--k", type=int, default=1)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--format", choices=["json", "csv"], default="json")
    sw.add_argument("--out", default=None)
    sw.add_argument("--dim-cap", type=int, default=DEFAULT_DIM_CAP)
    return parser


def _emit(report: dict, fmt: str, path):
    text = render(report, fmt)
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _run(cfg: ExperimentConfig, out, fmt=None) -> int:
    report = run_experiment(cfg)
    output = cfg.output or {}
    _emit(report, fmt or output.get("format", "json"), out or output.get("path"))
    failed = [a["name"] for a in report["assertions"] if not a["passed"]]
    if failed:
        print(f"assertion(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "zoo":
            for name in FAMILIES:
                print(name)
            return EXIT_OK
        if args.command == "run":
            cfg = ExperimentConfig.load(args.config)
            if args.seed is not None:
                if not 0 <= args.seed < 2 ** 64:
                    raise ConfigError("seed must be a 64-bit unsigned integer")
                cfg.seed = args.seed
            return _run(cfg, args.out)
        if args.command == "sweep":
            proto = {"family": "noisy", "base_family": args.base}
            proto["k" if args.base == "ot" else "n"] = args.k if args.base == "ot" else args.n
            cfg = ExperimentConfig.from_dict({
                "protocol": proto, "sweep": parse_grid(args.grid),
                "seed": args.seed, "dim_cap": args.dim_cap,
            })
            return _run(cfg, args.out, args.format)
        if args.command == "verify":
            checks = verify_family(
                args.family, args.n, args.m, p=args.p, k=args.k, seed=args.seed,
                theta_leak=args.theta_leak, theta_meas=args.theta_meas, dim_cap=args.dim_cap,
            )
            for name, ok, detail in checks:
                print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
            return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_ASSERTION
    except DimensionCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIM_CAP
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
